#![allow(dead_code)]

use iaqsim::environment::RoomProfile;
use iaqsim::log::{to_jsonl, Detail, EventRecord};
use iaqsim::node::{Role, Thresholds};
use iaqsim::scenario::{preset, LinkSpec, NodeSpec, RequestSpec, Scenario};
use sha2::{Digest, Sha256};

/// SHA-256 of the JSONL log of [`golden_scenario`].
pub const GOLDEN_SHA256: &str = "36fbc4945c8fad334114ba63c7d2a5b99d23c50706ec8939f89b7206970da699";

/// Two days of the default layout with kitchen alerts during cooking and
/// a handful of sink requests.
pub fn golden_scenario() -> Scenario {
    let mut s = preset("paper-default").unwrap();
    s.name = "golden".into();
    s.duration_s = 2.0 * 86_400.0;
    s.master_seed = 7;
    let kitchen = s.nodes.iter_mut().find(|n| n.id == "kitchen").unwrap();
    kitchen.thresholds = Some(Thresholds { gas_high: 300.0, ..Thresholds::default() });
    for (at_s, target) in [(60.5, "bedroom"), (3_600.0, "office"), (50_000.0, "kitchen"), (90_000.25, "living_room")] {
        s.requests.push(RequestSpec { at_s, target: target.into() });
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn log_digest(log: &[EventRecord]) -> String {
    sha256_hex(&to_jsonl(log))
}

pub fn room(id: &str, base_temp: f64, base_gas: f64) -> RoomProfile {
    RoomProfile {
        id: id.into(),
        base_temp,
        temp_diurnal_amplitude: 1.5,
        base_humidity: 45.0,
        humidity_diurnal_amplitude: 0.0,
        base_gas,
        noise_sigma_temp: 0.0,
        noise_sigma_gas: 0.0,
    }
}

/// Noise-free, lossless scenario with no events and the given nodes.
pub fn bare(name: &str, duration_s: f64, rooms: Vec<RoomProfile>, nodes: Vec<NodeSpec>) -> Scenario {
    let mut s = preset("lossless").unwrap();
    s.name = name.into();
    s.duration_s = duration_s;
    s.rooms = rooms;
    s.events.clear();
    s.nodes = nodes;
    s.sensors.temp_sigma = 0.0;
    s.sensors.humidity_sigma = 0.0;
    s.sensors.gas.measurement_sigma = 0.0;
    s.link_defaults = LinkSpec::default();
    s
}

pub fn node(id: &str, room: Option<&str>, role: Role, parent: Option<&str>) -> NodeSpec {
    NodeSpec::new(id, room, role, parent)
}

pub fn deliveries(log: &[EventRecord]) -> impl Iterator<Item = (&EventRecord, &Detail)> {
    log.iter().filter(|r| matches!(r.detail, Detail::Delivery { .. })).map(|r| (r, &r.detail))
}
