//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::time::{Duration, Instant};

use common::*;
use iaqsim::engine::EngineError;
use iaqsim::log::{to_jsonl, Detail, JsonlWriter, PayloadKind};
use iaqsim::network::{route_upward, TopologyViolation};
use iaqsim::node::{
    aggregate_buffer, classify_significance, node_step, Action, NodeConfig, NodeEvent, NodeState, ReportKind, Role,
    Sample, SensorFrontEnd, Thresholds,
};
use iaqsim::rng::{seed_stream, unit_f64, Stream};
use iaqsim::scenario::{preset, LinkOverride, NodeSpec, RequestSpec, Scenario, ScenarioError};
use iaqsim::sensor::{SensorError, SensorPower, SensorReading};
use iaqsim::{run, run_with_sink, SimDuration, SimTime};

const THROUGHPUT_BAND: (f64, f64) = (0.75, 0.85);
const SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
const MAX_RUN_TIME: Duration = Duration::from_secs(60);
const LEAF_SPREAD: f64 = 0.05;
const COOKING_HOURS: std::ops::RangeInclusive<usize> = 13..=17;
const ENERGY_TOLERANCE: f64 = 0.001;
const DELIVERY_MESSAGES: u64 = 100_000;
const DELIVERY_P: f64 = 0.9;
const DELIVERY_TOLERANCE: f64 = 0.01;
const AGGREGATE_TOLERANCE: f64 = 1e-9;
const RANDOM_TOPOLOGIES: u64 = 1_000;

// Hardware figures used by the closed-form energy oracle.
const V: f64 = 3.3;
const GAS_W: f64 = 0.900;
const HUMIDITY_W: f64 = 0.200;
const TEMP_A: f64 = 80e-6;
const RADIO_A: f64 = 40e-3;
const MCU_A: f64 = 300e-6;
const RADIO_SLEEP_A: f64 = 1e-6;
const MCU_SLEEP_A: f64 = 0.5e-6;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("throughput reproduction", throughput_reproduction),
        ("energy asymmetry", energy_asymmetry),
        ("kitchen diurnal signature", kitchen_signature),
        ("energy oracle", energy_oracle),
        ("delivery oracle", delivery_oracle),
        ("aggregation correctness", aggregation_correctness),
        ("determinism", determinism),
        ("structural invariants", structural_invariants),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = check();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}) [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail}) [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn throughput_reproduction() -> Outcome {
    let mut values = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in SEEDS {
        let mut s = preset("paper-default").unwrap();
        s.master_seed = seed;
        let started = Instant::now();
        let mut sink = JsonlWriter::new(io::BufWriter::new(io::sink()));
        let out = run_with_sink(&s, &mut sink).map_err(|e| e.to_string())?;
        slowest = slowest.max(started.elapsed());
        values.push(out.metrics.throughput.ok_or("nothing generated")?);
    }
    let inside = values.iter().all(|v| (THROUGHPUT_BAND.0..=THROUGHPUT_BAND.1).contains(v));
    let (lo, hi) = values.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    ensure(
        inside && slowest < MAX_RUN_TIME,
        format!(
            "{} seeds, throughput {lo:.4}..{hi:.4}, band {:?}, slowest run {:.2} s",
            values.len(),
            THROUGHPUT_BAND,
            slowest.as_secs_f64()
        ),
    )
}

fn energy_asymmetry() -> Outcome {
    let out = run_with_sink(&preset("paper-default").unwrap(), &mut iaqsim::log::NullSink).map_err(|e| e.to_string())?;
    let sensing: Vec<_> = out.metrics.nodes.iter().filter(|n| n.room.is_some()).collect();
    let forwarder = out.metrics.forwarder().ok_or("no node forwarded")?;
    let leaves: Vec<_> = sensing.iter().filter(|n| n.node != forwarder.node).collect();
    let strictly_greatest = leaves.iter().all(|l| forwarder.energy_j > l.energy_j);
    let (lo, hi) = leaves.iter().fold((f64::MAX, f64::MIN), |(l, h), n| (l.min(n.energy_j), h.max(n.energy_j)));
    let spread = hi / lo - 1.0;
    ensure(
        strictly_greatest && spread <= LEAF_SPREAD && leaves.len() == 3,
        format!(
            "forwarder {} {:.3} J, leaves {:.3}..{:.3} J, leaf spread {:.2e} (limit {LEAF_SPREAD})",
            forwarder.node, forwarder.energy_j, lo, hi, spread
        ),
    )
}

fn kitchen_signature() -> Outcome {
    let out = run_with_sink(&preset("paper-default").unwrap(), &mut iaqsim::log::NullSink).map_err(|e| e.to_string())?;
    let m = &out.metrics;
    let mut bad_argmax = Vec::new();
    for series in &m.hourly["kitchen"] {
        match series.temp_argmax() {
            Some(h) if COOKING_HOURS.contains(&h) => {}
            other => bad_argmax.push((series.day, other)),
        }
    }
    let kitchen = &m.daily_aqi["kitchen"];
    let mut bad_days = Vec::new();
    for (d, k) in kitchen.iter().enumerate() {
        let k = k.ok_or(format!("kitchen has no samples on day {d}"))?;
        let dominated = m.daily_aqi.iter().filter(|(r, _)| *r != "kitchen").all(|(_, v)| v[d].is_some_and(|o| k > o));
        if !dominated {
            bad_days.push(d);
        }
    }
    ensure(
        bad_argmax.is_empty() && bad_days.is_empty() && kitchen.len() == 30,
        format!(
            "{} days; argmax outside 13-17 on {:?}; AQI not dominant on days {:?}",
            kitchen.len(),
            bad_argmax,
            bad_days
        ),
    )
}

fn energy_oracle() -> Outcome {
    let mut s = preset("lossless").unwrap();
    s.node_defaults.reporting_interval_s = s.duration_s;
    let out = run_with_sink(&s, &mut iaqsim::log::NullSink).map_err(|e| e.to_string())?;
    if out.metrics.generated != 0 {
        return Err(format!("{} messages generated, expected none", out.metrics.generated));
    }
    let r = s.validate().unwrap();
    let h = r.horizon.as_secs_f64();
    let mut worst = 0.0f64;
    for cfg in &r.nodes {
        let expected = if cfg.always_on {
            V * RADIO_A * h + V * MCU_A * h
        } else {
            let period = cfg.sampling_period.as_secs_f64();
            let samples = (h / period).ceil() - 1.0;
            let wakes = (h / cfg.wake_interval.as_secs_f64()).ceil();
            let warm = cfg.warmup.as_secs_f64();
            let listen = wakes * cfg.awake_window.as_secs_f64();
            let mcu = listen + samples * r.sample_processing.as_secs_f64();
            samples * warm * (GAS_W + HUMIDITY_W + V * TEMP_A)
                + V * RADIO_A * listen
                + V * RADIO_SLEEP_A * (h - listen)
                + V * MCU_A * mcu
                + V * MCU_SLEEP_A * (h - mcu)
        };
        let got = out.ledger(&cfg.id).unwrap().total_j();
        worst = worst.max((got - expected).abs() / expected);
    }
    ensure(
        worst <= ENERGY_TOLERANCE,
        format!("{} nodes, worst relative error {worst:.2e} (limit {ENERGY_TOLERANCE})", r.nodes.len()),
    )
}

fn delivery_oracle() -> Outcome {
    let horizon = DELIVERY_MESSAGES + 1_000;
    let mut s = bare(
        "delivery",
        horizon as f64,
        vec![room("lab", 20.0, 90.0)],
        vec![
            node("sink", None, Role::Coordinator, None),
            node("relay", None, Role::Router, Some("sink")),
            node("leaf", Some("lab"), Role::Router, Some("relay")),
        ],
    );
    s.sensors.gas.warmup_s = 0.0;
    s.link_defaults.delivery_probability = DELIVERY_P;
    for n in &mut s.nodes[1..] {
        n.always_on = Some(true);
        n.sampling_period_s = Some(1.0);
        n.reporting_interval_s = Some(1.0);
    }
    let out = run_with_sink(&s, &mut iaqsim::log::NullSink).map_err(|e| e.to_string())?;
    let leaf = out.metrics.node("leaf").unwrap();
    let rate = leaf.delivered as f64 / leaf.generated as f64;
    let expected = DELIVERY_P * DELIVERY_P;
    ensure(
        leaf.generated >= DELIVERY_MESSAGES && (rate - expected).abs() <= DELIVERY_TOLERANCE,
        format!("{} messages over 2 hops, rate {rate:.4}, expected {expected:.4} +/- {DELIVERY_TOLERANCE}", leaf.generated),
    )
}

struct Fixed(SensorReading);

impl SensorFrontEnd for Fixed {
    fn read(&mut self, _: &NodeConfig, _: SimTime, _: SensorPower) -> Result<SensorReading, SensorError> {
        Ok(self.0)
    }
}

fn relative(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn aggregation_correctness() -> Outcome {
    let mut rng = seed_stream(6, "acceptance", "aggregation");
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let n = 1 + (unit_f64(&mut rng) * 60.0) as usize;
        let mut buffer: Vec<Sample> = (0..n)
            .map(|i| Sample {
                t: SimTime::from_secs(60 * i as u64),
                temp: -20.0 + 80.0 * unit_f64(&mut rng),
                humidity: 100.0 * unit_f64(&mut rng),
                gas_ppm: 1_000.0 * unit_f64(&mut rng),
                aqi: 500.0 * unit_f64(&mut rng),
            })
            .collect();
        // Oracle: compensated summation, independent of the code under test.
        let mean = |f: fn(&Sample) -> f64| {
            let (mut sum, mut c) = (0.0f64, 0.0f64);
            for s in &buffer {
                let y = f(s) - c;
                let t = sum + y;
                c = (t - sum) - y;
                sum = t;
            }
            sum / n as f64
        };
        let want = (mean(|s| s.temp), mean(|s| s.humidity), mean(|s| s.aqi));
        let (first, last) = (buffer[0].t, buffer[n - 1].t);
        let r = aggregate_buffer(&mut buffer, &"x".to_string(), 0).ok_or("no report for a non-empty buffer")?;
        if !buffer.is_empty() || r.window != Some((first, last)) || r.samples as usize != n {
            return Err("buffer not drained or window wrong".into());
        }
        worst = worst.max(relative(r.temp, want.0)).max(relative(r.humidity, want.1)).max(relative(r.aqi, want.2));
    }
    if aggregate_buffer(&mut Vec::new(), &"x".to_string(), 0).is_some() {
        return Err("empty buffer produced a report".into());
    }

    // Alerts leave in the same step as the sample that triggered them.
    let mut cfg = NodeConfig::new("n", Some("r"), Role::Router, Some("sink"));
    cfg.warmup = SimDuration::ZERO;
    let mut st = NodeState::new(&cfg);
    let hot = SensorReading { temp: 80.0, humidity: 40.0, gas_ppm: 100.0, aqi: 50.0 };
    let t = st.next_sample_at;
    let actions = node_step(&mut st, &cfg, t, NodeEvent::SampleDue, &mut Fixed(hot)).map_err(|e| e.to_string())?;
    let alerts = actions
        .iter()
        .filter(|a| matches!(a, Action::Transmit(r) if r.kind == ReportKind::Alert && r.temp == 80.0))
        .count();
    if alerts != 1 || !st.buffer.is_empty() {
        return Err(format!("significant sample gave {alerts} alerts in its step"));
    }

    // The threshold itself is not significant.
    let th = Thresholds::default();
    let at = Sample { t: SimTime::ZERO, temp: th.temp_high, humidity: th.humidity_high, gas_ppm: th.gas_high, aqi: 0.0 };
    let above = Sample { temp: th.temp_high.next_up(), ..at };
    if classify_significance(&at, &th) || !classify_significance(&above, &th) {
        return Err("threshold boundary is not strict".into());
    }
    ensure(
        worst <= AGGREGATE_TOLERANCE,
        format!("1000 buffers, worst relative error {worst:.1e} (limit {AGGREGATE_TOLERANCE:e}); alert same-step; strict boundary"),
    )
}

fn determinism() -> Outcome {
    let s = golden_scenario();
    let a = run(&s).map_err(|e| e.to_string())?;
    let b = run(&s).map_err(|e| e.to_string())?;
    let (da, db) = (sha256_hex(&to_jsonl(&a.log)), sha256_hex(&to_jsonl(&b.log)));
    ensure(
        da == db && da == GOLDEN_SHA256,
        format!("{} records, sha256 {da}, golden {GOLDEN_SHA256}", a.log.len()),
    )
}

fn pick<'a, T>(rng: &mut Stream, items: &'a [T]) -> &'a T {
    &items[(unit_f64(rng) * items.len() as f64) as usize]
}

fn random_scenario(rng: &mut Stream, trial: u64) -> Scenario {
    let mut s = bare("random", 7_200.0, Vec::new(), vec![node("n0", None, Role::Coordinator, None)]);
    s.master_seed = trial;
    s.sensors.gas.warmup_s = *pick(rng, &[0.0, 10.0, 30.0]);
    let others = 1 + (unit_f64(rng) * 7.0) as usize;
    for i in 1..=others {
        let id = format!("n{i}");
        let parents: Vec<&NodeSpec> = s.nodes.iter().filter(|n| n.role != Role::EndDevice).collect();
        let parent = pick(rng, &parents).id.clone();
        let role = if unit_f64(rng) < 0.5 { Role::Router } else { Role::EndDevice };
        let senses = role == Role::EndDevice || unit_f64(rng) < 0.8;
        let mut ns = NodeSpec::new(&id, None, role, Some(&parent));
        if senses {
            let r = format!("r{i}");
            let mut profile = room(&r, 18.0 + 6.0 * unit_f64(rng), 80.0 + 200.0 * unit_f64(rng));
            profile.noise_sigma_temp = unit_f64(rng);
            profile.noise_sigma_gas = 10.0 * unit_f64(rng);
            s.rooms.push(profile);
            ns.room = Some(r);
            let period = *pick(rng, &[30.0, 60.0, 120.0]);
            ns.sampling_period_s = Some(period);
            ns.reporting_interval_s = Some(period * (1.0 + (unit_f64(rng) * 10.0).floor()));
            ns.thresholds = Some(Thresholds { temp_high: 19.0 + 6.0 * unit_f64(rng), ..Thresholds::default() });
        }
        let wake = *pick(rng, &[20.0, 60.0, 120.0]);
        ns.wake_interval_s = Some(wake);
        ns.awake_window_s = Some(wake * unit_f64(rng) * 0.2);
        ns.phase_offset_s = Some((unit_f64(rng) * 60.0).floor());
        ns.always_on = Some(role == Role::Router && unit_f64(rng) < 0.3);
        s.links.push(LinkOverride {
            child: id,
            delivery_probability: Some(0.5 + 0.5 * unit_f64(rng)),
            latency_ms: Some((unit_f64(rng) * 200.0) as u64),
        });
        s.nodes.push(ns);
    }
    for _ in 0..(unit_f64(rng) * 4.0) as usize {
        let target = format!("n{}", 1 + (unit_f64(rng) * others as f64) as usize);
        s.requests.push(RequestSpec { at_s: (unit_f64(rng) * 7_000.0).floor() + 0.5, target });
    }
    s
}

fn structural_invariants() -> Outcome {
    let mut rng = seed_stream(8, "acceptance", "topologies");
    let (mut rejected, mut records, mut delivered) = (0u64, 0u64, 0u64);
    for trial in 0..RANDOM_TOPOLOGIES {
        let mut s = random_scenario(&mut rng, trial);
        let fail = |what: String| Err(format!("trial {trial}: {what}"));

        // Every fourth trial also checks that a second coordinator is refused.
        if trial % 4 == 0 {
            let mut twice = s.clone();
            twice.nodes.push(NodeSpec::new("extra", None, Role::Coordinator, None));
            match run(&twice) {
                Err(EngineError::Scenario(ScenarioError::Invalid(v)))
                    if v.iter().any(|v| v.message == TopologyViolation::MultipleCoordinators(vec!["extra".into(), "n0".into()]).to_string()) =>
                {
                    rejected += 1
                }
                other => return fail(format!("second coordinator accepted: {:?}", other.map(|_| ()))),
            }
        }
        s.name = format!("random-{trial}");
        let resolved = match s.validate() {
            Ok(r) => r,
            Err(e) => return fail(e.to_string()),
        };
        let out = match run(&s) {
            Ok(o) => o,
            Err(e) => return fail(e.to_string()),
        };
        records += out.log.len() as u64;
        if out.stats.scheduled != out.stats.processed {
            return fail("scheduled and processed counts differ".into());
        }
        if out.log.windows(2).any(|w| w[0].t > w[1].t) {
            return fail("log out of time order".into());
        }
        let roles: BTreeMap<&str, Role> = resolved.nodes.iter().map(|n| (n.id.as_str(), n.role)).collect();
        let mut seen = BTreeSet::new();
        for r in &out.log {
            match &r.detail {
                Detail::Forward { .. } if roles[r.node.as_str()] == Role::EndDevice => {
                    return fail(format!("end device {} forwarded", r.node));
                }
                Detail::Delivery { origin, seq, payload, path, .. } if *payload != PayloadKind::Request => {
                    delivered += 1;
                    if !seen.insert((origin.clone(), *seq)) {
                        return fail(format!("duplicate delivery {origin}#{seq}"));
                    }
                    let route = route_upward(&resolved.topology, origin).map_err(|e| e.to_string())?;
                    if *path != route {
                        return fail(format!("path {path:?} differs from route {route:?}"));
                    }
                    if path[1..path.len() - 1].iter().any(|n| roles[n.as_str()] == Role::EndDevice) {
                        return fail(format!("end device inside path {path:?}"));
                    }
                }
                _ => {}
            }
        }
        for n in &out.metrics.nodes {
            if n.delivered > n.generated {
                return fail(format!("{} delivered {} of {} generated", n.node, n.delivered, n.generated));
            }
        }
    }
    Ok(format!(
        "{RANDOM_TOPOLOGIES} topologies, {records} records, {delivered} deliveries checked, {rejected} double-coordinator scenarios refused"
    ))
}
