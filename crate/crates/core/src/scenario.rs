//! Scenario files.
//!
//! A scenario is a TOML document. Unknown keys are rejected so a typo
//! never silently falls back to a default. Parsing gives a [`Scenario`];
//! [`Scenario::validate`] checks every cross-reference and range and
//! reports all violations at once, each tagged with its field path.
//!
//! ```toml
//! name = "example"
//! duration_s = 86400
//! master_seed = 7
//!
//! [[rooms]]
//! id = "kitchen"
//! base_temp = 22.0
//! temp_diurnal_amplitude = 1.5
//! base_humidity = 45.0
//! base_gas = 110.0
//!
//! [[events]]
//! room = "kitchen"
//! start = "13:00"
//! end = "18:00"
//! temp_boost = 5.0
//! gas_boost = 220.0
//!
//! [[nodes]]
//! id = "sink"
//! role = "coordinator"
//!
//! [[nodes]]
//! id = "kitchen"
//! room = "kitchen"
//! role = "router"
//! parent = "sink"
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{PowerProfile, RadioPreset};
use crate::environment::{ActivityEvent, Recurrence, RoomProfile};
use crate::network::{validate_topology, LinkParams, Topology, TopologyViolation};
use crate::node::{NodeConfig, Role, Thresholds};
use crate::sensor::SensorModels;
use crate::time::{SimDuration, SimTime, MS_PER_DAY};
use crate::{NodeId, RoomId};

pub const DEFAULT_DURATION_S: f64 = 30.0 * 86_400.0;

/// Scenario presets shipped with the simulator, by name.
pub const PRESETS: [(&str, &str); 3] = [
    ("paper-default", include_str!("../scenarios/paper-default.toml")),
    ("kitchen-forwarder", include_str!("../scenarios/kitchen-forwarder.toml")),
    ("lossless", include_str!("../scenarios/lossless.toml")),
];

pub fn preset(name: &str) -> Option<Scenario> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::from_toml(text).expect("shipped presets parse"))
}

/// One problem found in a scenario, located by field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(String),
    #[error("scenario is invalid:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
    #[error("unknown parameter '{path}'; valid parameters: {}", .valid.join(", "))]
    UnknownParameter { path: String, valid: Vec<&'static str> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    /// Radio busy time per frame sent or received.
    #[serde(default = "default_airtime_ms")]
    pub airtime_ms: u64,
    /// MCU active time per sample.
    #[serde(default = "default_processing_ms")]
    pub sample_processing_ms: u64,
}

fn default_airtime_ms() -> u64 {
    10
}

fn default_processing_ms() -> u64 {
    10
}

impl Default for Timing {
    fn default() -> Self {
        Timing { airtime_ms: default_airtime_ms(), sample_processing_ms: default_processing_ms() }
    }
}

/// Radio preset plus optional overrides of any hardware figure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<RadioPreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gas_sensor_active_mw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub humidity_sensor_active_mw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temp_sensor_active_ua: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radio_active_ma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radio_listen_ma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcu_active_ua: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logic_supply_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gas_sensor_sleep_mw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub humidity_sensor_sleep_mw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temp_sensor_sleep_ua: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radio_sleep_ua: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcu_sleep_ua: Option<f64>,
}

impl PowerSpec {
    pub fn resolve(&self) -> PowerProfile {
        let mut p = PowerProfile::with_radio(self.preset.unwrap_or(RadioPreset::XbeeSeries2));
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut p.gas_sensor_active_mw, self.gas_sensor_active_mw);
        set(&mut p.humidity_sensor_active_mw, self.humidity_sensor_active_mw);
        set(&mut p.temp_sensor_active_ua, self.temp_sensor_active_ua);
        if self.radio_active_ma.is_some() {
            p.radio_active_ma = self.radio_active_ma;
        }
        p.radio_listen_ma = self.radio_listen_ma;
        set(&mut p.mcu_active_ua, self.mcu_active_ua);
        set(&mut p.logic_supply_v, self.logic_supply_v);
        set(&mut p.gas_sensor_sleep_mw, self.gas_sensor_sleep_mw);
        set(&mut p.humidity_sensor_sleep_mw, self.humidity_sensor_sleep_mw);
        set(&mut p.temp_sensor_sleep_ua, self.temp_sensor_sleep_ua);
        set(&mut p.radio_sleep_ua, self.radio_sleep_ua);
        set(&mut p.mcu_sleep_ua, self.mcu_sleep_ua);
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDefaults {
    #[serde(default = "default_sampling_s")]
    pub sampling_period_s: f64,
    #[serde(default = "default_reporting_s")]
    pub reporting_interval_s: f64,
    #[serde(default = "default_wake_s")]
    pub wake_interval_s: f64,
    #[serde(default = "default_window_s")]
    pub awake_window_s: f64,
    #[serde(default)]
    pub phase_offset_s: f64,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_sampling_s() -> f64 {
    60.0
}
fn default_reporting_s() -> f64 {
    900.0
}
fn default_wake_s() -> f64 {
    60.0
}
fn default_window_s() -> f64 {
    2.0
}

impl Default for NodeDefaults {
    fn default() -> Self {
        NodeDefaults {
            sampling_period_s: default_sampling_s(),
            reporting_interval_s: default_reporting_s(),
            wake_interval_s: default_wake_s(),
            awake_window_s: default_window_s(),
            phase_offset_s: 0.0,
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room: Option<RoomId>,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_period_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reporting_interval_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wake_interval_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub awake_window_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_offset_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub always_on: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Thresholds>,
}

impl NodeSpec {
    pub fn new(id: &str, room: Option<&str>, role: Role, parent: Option<&str>) -> Self {
        NodeSpec {
            id: id.into(),
            room: room.map(Into::into),
            role,
            parent: parent.map(Into::into),
            sampling_period_s: None,
            reporting_interval_s: None,
            wake_interval_s: None,
            awake_window_s: None,
            phase_offset_s: None,
            always_on: None,
            thresholds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    #[serde(default = "one")]
    pub delivery_probability: f64,
    #[serde(default = "default_latency_ms")]
    pub latency_ms: u64,
}

fn one() -> f64 {
    1.0
}
fn default_latency_ms() -> u64 {
    50
}

impl Default for LinkSpec {
    fn default() -> Self {
        LinkSpec { delivery_probability: 1.0, latency_ms: default_latency_ms() }
    }
}

impl From<&LinkSpec> for LinkParams {
    fn from(l: &LinkSpec) -> Self {
        LinkParams { delivery_probability: l.delivery_probability, latency: SimDuration::from_millis(l.latency_ms) }
    }
}

/// Parameters of one node's uplink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkOverride {
    pub child: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivery_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub room: RoomId,
    /// `HH:MM` or `HH:MM:SS`.
    pub start: String,
    pub end: String,
    #[serde(default)]
    pub temp_boost: f64,
    #[serde(default)]
    pub gas_boost: f64,
    #[serde(default = "daily")]
    pub recurrence: Recurrence,
}

fn daily() -> Recurrence {
    Recurrence::Daily
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestSpec {
    pub at_s: f64,
    pub target: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub master_seed: u64,
    /// Calendar date of simulation day 0, used for exported timestamps.
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
    #[serde(default)]
    pub timing: Timing,
    #[serde(default)]
    pub power: PowerSpec,
    #[serde(default)]
    pub sensors: SensorModels,
    #[serde(default)]
    pub node_defaults: NodeDefaults,
    #[serde(default)]
    pub link_defaults: LinkSpec,
    pub rooms: Vec<RoomProfile>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub links: Vec<LinkOverride>,
    #[serde(default)]
    pub requests: Vec<RequestSpec>,
}

fn default_duration() -> f64 {
    DEFAULT_DURATION_S
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 2, 11).expect("valid date")
}

/// Everything the engine needs, resolved and cross-checked.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub name: String,
    pub horizon: SimDuration,
    pub master_seed: u64,
    pub start_date: NaiveDate,
    pub airtime: SimDuration,
    pub sample_processing: SimDuration,
    pub power: PowerProfile,
    pub sensors: SensorModels,
    pub rooms: Vec<RoomProfile>,
    pub events: Vec<ActivityEvent>,
    /// Sorted by node id; this order is the scheduler's tie-break order.
    pub nodes: Vec<NodeConfig>,
    pub topology: Topology,
    pub requests: Vec<(SimTime, NodeId)>,
}

impl ResolvedScenario {
    pub fn days(&self) -> u64 {
        self.horizon.as_millis().div_ceil(MS_PER_DAY)
    }

    pub fn coordinator(&self) -> &NodeConfig {
        self.nodes.iter().find(|n| n.role == Role::Coordinator).expect("validated")
    }
}

/// Parses `HH:MM` or `HH:MM:SS` into ms since midnight; `24:00` is allowed.
pub fn parse_time_of_day(s: &str) -> Option<u64> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return None;
    }
    let mut nums = parts.iter().map(|p| p.parse::<u64>().ok());
    let h = nums.next()??;
    let m = nums.next()??;
    let sec = nums.next().unwrap_or(Some(0))?;
    if m >= 60 || sec >= 60 || h > 24 || (h == 24 && (m, sec) != (0, 0)) {
        return None;
    }
    Some(((h * 60 + m) * 60 + sec) * 1_000)
}

fn secs_ok(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

pub const SWEEP_PARAMETERS: [&str; 10] = [
    "links.delivery_probability",
    "links.latency_ms",
    "sensors.gas.warmup_s",
    "sensors.gas.duty_fraction",
    "node_defaults.sampling_period_s",
    "node_defaults.reporting_interval_s",
    "node_defaults.wake_interval_s",
    "node_defaults.awake_window_s",
    "power.radio_active_ma",
    "power.gas_sensor_active_mw",
];

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn duration(&self) -> SimDuration {
        SimDuration::from_secs_f64(self.duration_s)
    }

    /// Sets a sweepable parameter across the whole scenario.
    ///
    /// `sensors.gas.duty_fraction` sets the sensor warm-up to that
    /// fraction of the default sampling period, which is the fraction of
    /// time the sensors are powered.
    pub fn set_parameter(&mut self, path: &str, value: f64) -> Result<(), ScenarioError> {
        match path {
            "links.delivery_probability" => {
                self.link_defaults.delivery_probability = value;
                for l in &mut self.links {
                    l.delivery_probability = Some(value);
                }
            }
            "links.latency_ms" => {
                let ms = value.round().max(0.0) as u64;
                self.link_defaults.latency_ms = ms;
                for l in &mut self.links {
                    l.latency_ms = Some(ms);
                }
            }
            "sensors.gas.warmup_s" => self.sensors.gas.warmup_s = value,
            "sensors.gas.duty_fraction" => {
                self.sensors.gas.warmup_s = value * self.node_defaults.sampling_period_s;
            }
            "node_defaults.sampling_period_s" => self.node_defaults.sampling_period_s = value,
            "node_defaults.reporting_interval_s" => self.node_defaults.reporting_interval_s = value,
            "node_defaults.wake_interval_s" => self.node_defaults.wake_interval_s = value,
            "node_defaults.awake_window_s" => self.node_defaults.awake_window_s = value,
            "power.radio_active_ma" => self.power.radio_active_ma = Some(value),
            "power.gas_sensor_active_mw" => self.power.gas_sensor_active_mw = Some(value),
            _ => {
                return Err(ScenarioError::UnknownParameter { path: path.to_string(), valid: SWEEP_PARAMETERS.to_vec() })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<ResolvedScenario, ScenarioError> {
        let mut v: Vec<Violation> = Vec::new();
        let mut bad = |path: String, message: String| v.push(Violation { path, message });

        if !(self.duration_s.is_finite() && self.duration() > SimDuration::ZERO) {
            bad("duration_s".into(), format!("must be positive, got {}", self.duration_s));
        }
        let horizon = self.duration();

        // Rooms.
        let mut room_ids = BTreeSet::new();
        for (i, r) in self.rooms.iter().enumerate() {
            let p = |f: &str| format!("rooms[{i}].{f}");
            if !room_ids.insert(r.id.clone()) {
                bad(p("id"), format!("duplicate room id {}", r.id));
            }
            if !(0.0..=100.0).contains(&r.base_humidity) {
                bad(p("base_humidity"), format!("must lie in [0, 100], got {}", r.base_humidity));
            }
            if !(r.base_gas.is_finite() && r.base_gas >= 0.0) {
                bad(p("base_gas"), format!("must be non-negative, got {}", r.base_gas));
            }
            for (f, x) in [
                ("noise_sigma_temp", r.noise_sigma_temp),
                ("noise_sigma_gas", r.noise_sigma_gas),
                ("humidity_diurnal_amplitude", r.humidity_diurnal_amplitude),
            ] {
                if !secs_ok(x) {
                    bad(p(f), format!("must be non-negative, got {x}"));
                }
            }
            for (f, x) in [("base_temp", r.base_temp), ("temp_diurnal_amplitude", r.temp_diurnal_amplitude)] {
                if !x.is_finite() {
                    bad(p(f), format!("must be finite, got {x}"));
                }
            }
        }

        // Events.
        let mut events = Vec::new();
        let days = horizon.as_millis().div_ceil(MS_PER_DAY);
        for (i, e) in self.events.iter().enumerate() {
            let p = |f: &str| format!("events[{i}].{f}");
            if !room_ids.contains(&e.room) {
                bad(p("room"), format!("unknown room {}", e.room));
            }
            let start = parse_time_of_day(&e.start);
            let end = parse_time_of_day(&e.end);
            if start.is_none() {
                bad(p("start"), format!("expected HH:MM[:SS], got {:?}", e.start));
            }
            if end.is_none() {
                bad(p("end"), format!("expected HH:MM[:SS], got {:?}", e.end));
            }
            if let (Some(s), Some(en)) = (start, end) {
                if s >= en {
                    bad(p("end"), format!("window must end after it starts ({} >= {})", e.start, e.end));
                }
            }
            for (f, x) in [("temp_boost", e.temp_boost), ("gas_boost", e.gas_boost)] {
                if !secs_ok(x) {
                    bad(p(f), format!("must be non-negative, got {x}"));
                }
            }
            if let Recurrence::Once(day) = e.recurrence {
                if day >= days {
                    bad(p("recurrence"), format!("day {day} lies beyond the {days}-day horizon"));
                }
            }
            events.push(ActivityEvent {
                room: e.room.clone(),
                start: start.unwrap_or(0),
                end: end.unwrap_or(0),
                temp_boost: e.temp_boost,
                gas_boost: e.gas_boost,
                recurrence: e.recurrence,
            });
        }

        // Sensors.
        let g = &self.sensors.gas;
        if !(g.r0_baseline_ppm.is_finite() && g.r0_baseline_ppm > 0.0) {
            bad("sensors.gas.r0_baseline_ppm".into(), format!("must be positive, got {}", g.r0_baseline_ppm));
        }
        if !(g.exponent.is_finite() && g.exponent < 0.0) {
            bad("sensors.gas.exponent".into(), format!("must be negative, got {}", g.exponent));
        }
        if !secs_ok(g.warmup_s) {
            bad("sensors.gas.warmup_s".into(), format!("must be non-negative, got {}", g.warmup_s));
        }
        for (f, x) in [
            ("sensors.gas.measurement_sigma", g.measurement_sigma),
            ("sensors.temp_sigma", self.sensors.temp_sigma),
            ("sensors.humidity_sigma", self.sensors.humidity_sigma),
        ] {
            if !secs_ok(x) {
                bad(f.into(), format!("must be non-negative, got {x}"));
            }
        }
        let warmup = SimDuration::from_secs_f64(g.warmup_s.max(0.0));

        // Power and timing.
        let power = self.power.resolve();
        for problem in power.problems() {
            bad("power".into(), problem);
        }

        // Nodes.
        let d = &self.node_defaults;
        let mut node_ids = BTreeSet::new();
        let mut nodes = Vec::new();
        let mut topology = Topology::new();
        topology.default_link = LinkParams::from(&self.link_defaults);
        for (i, n) in self.nodes.iter().enumerate() {
            let p = |f: &str| format!("nodes[{i}].{f}");
            if !node_ids.insert(n.id.clone()) {
                bad(p("id"), format!("duplicate node id {}", n.id));
            }
            if let Some(room) = &n.room {
                if !room_ids.contains(room) {
                    bad(p("room"), format!("unknown room {room}"));
                }
            }
            let secs = |f: &str, own: Option<f64>, default: f64, bad: &mut dyn FnMut(String, String)| {
                let x = own.unwrap_or(default);
                if !secs_ok(x) {
                    bad(p(f), format!("must be a non-negative number of seconds, got {x}"));
                }
                SimDuration::from_secs_f64(x.max(0.0))
            };
            let sampling = secs("sampling_period_s", n.sampling_period_s, d.sampling_period_s, &mut bad);
            let reporting = secs("reporting_interval_s", n.reporting_interval_s, d.reporting_interval_s, &mut bad);
            let wake = secs("wake_interval_s", n.wake_interval_s, d.wake_interval_s, &mut bad);
            let window = secs("awake_window_s", n.awake_window_s, d.awake_window_s, &mut bad);
            let phase = secs("phase_offset_s", n.phase_offset_s, d.phase_offset_s, &mut bad);
            let always_on = n.role == Role::Coordinator || n.always_on.unwrap_or(false);
            if n.role == Role::Coordinator && n.always_on == Some(false) {
                bad(p("always_on"), "the coordinator is always on".into());
            }
            if n.room.is_some() {
                if sampling == SimDuration::ZERO {
                    bad(p("sampling_period_s"), "must be positive".into());
                }
                if reporting < sampling {
                    bad(
                        p("reporting_interval_s"),
                        format!(
                            "must be at least the sampling period ({} s < {} s)",
                            reporting.as_secs_f64(),
                            sampling.as_secs_f64()
                        ),
                    );
                }
                if warmup > sampling {
                    bad(
                        p("sampling_period_s"),
                        format!(
                            "sensor warm-up ({} s) exceeds the sampling period ({} s)",
                            warmup.as_secs_f64(),
                            sampling.as_secs_f64()
                        ),
                    );
                }
            }
            if !always_on {
                if wake == SimDuration::ZERO {
                    bad(p("wake_interval_s"), "must be positive".into());
                }
                if window > wake {
                    bad(p("awake_window_s"), "must not exceed the wake interval".into());
                }
            }
            let thresholds = n.thresholds.unwrap_or(d.thresholds);
            if ![thresholds.temp_high, thresholds.gas_high, thresholds.humidity_high].iter().all(|x| x.is_finite()) {
                bad(p("thresholds"), "thresholds must be finite".into());
            }
            topology.add_node(&n.id, n.role, n.parent.as_deref());
            nodes.push(NodeConfig {
                id: n.id.clone(),
                room: n.room.clone(),
                role: n.role,
                parent: n.parent.clone(),
                sampling_period: sampling,
                reporting_interval: reporting,
                thresholds,
                wake_interval: wake,
                awake_window: window,
                phase_offset: phase,
                always_on,
                warmup,
            });
        }
        if !(0.0..=1.0).contains(&self.link_defaults.delivery_probability) {
            bad(
                "link_defaults.delivery_probability".into(),
                format!("must lie in [0, 1], got {}", self.link_defaults.delivery_probability),
            );
        }
        let mut seen_links = BTreeMap::new();
        for (i, l) in self.links.iter().enumerate() {
            let p = |f: &str| format!("links[{i}].{f}");
            if !node_ids.contains(&l.child) {
                bad(p("child"), format!("unknown node {}", l.child));
                continue;
            }
            if seen_links.insert(l.child.clone(), i).is_some() {
                bad(p("child"), format!("duplicate link for {}", l.child));
            }
            let prob = l.delivery_probability.unwrap_or(self.link_defaults.delivery_probability);
            if !(0.0..=1.0).contains(&prob) {
                bad(p("delivery_probability"), format!("must lie in [0, 1], got {prob}"));
            }
            topology.set_link(
                &l.child,
                LinkParams {
                    delivery_probability: prob,
                    latency: SimDuration::from_millis(l.latency_ms.unwrap_or(self.link_defaults.latency_ms)),
                },
            );
        }
        let node_path = |id: &NodeId| {
            self.nodes.iter().position(|n| &n.id == id).map_or_else(|| "topology".to_string(), |i| format!("nodes[{i}]"))
        };
        for tv in validate_topology(&topology) {
            let path = match &tv {
                TopologyViolation::CoordinatorHasParent(n)
                | TopologyViolation::MissingParent(n)
                | TopologyViolation::Orphan(n) => format!("{}.parent", node_path(n)),
                TopologyViolation::UnknownParent { node, .. } => format!("{}.parent", node_path(node)),
                TopologyViolation::EndDeviceParent { child, .. } => format!("{}.parent", node_path(child)),
                TopologyViolation::BadLink { .. } => continue, // reported above with its own path
                _ => "nodes".to_string(),
            };
            bad(path, tv.to_string());
        }

        // Requests.
        let mut requests = Vec::new();
        for (i, r) in self.requests.iter().enumerate() {
            let p = |f: &str| format!("requests[{i}].{f}");
            match self.nodes.iter().find(|n| n.id == r.target) {
                None => bad(p("target"), format!("unknown node {}", r.target)),
                Some(n) if n.role == Role::Coordinator => bad(p("target"), "the coordinator cannot be queried".into()),
                Some(_) => {}
            }
            let at = SimDuration::from_secs_f64(r.at_s.max(0.0));
            if !secs_ok(r.at_s) || at >= horizon {
                bad(p("at_s"), format!("must lie within the run, got {}", r.at_s));
            }
            requests.push((SimTime::ZERO + at, r.target.clone()));
        }

        if !v.is_empty() {
            return Err(ScenarioError::Invalid(v));
        }
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        requests.sort();
        Ok(ResolvedScenario {
            name: self.name.clone(),
            horizon,
            master_seed: self.master_seed,
            start_date: self.start_date,
            airtime: SimDuration::from_millis(self.timing.airtime_ms),
            sample_processing: SimDuration::from_millis(self.timing.sample_processing_ms),
            power,
            sensors: self.sensors.clone(),
            rooms: self.rooms.clone(),
            events,
            nodes,
            topology,
            requests,
        })
    }
}
