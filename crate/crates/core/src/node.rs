//! Per-node duty-cycled state machine.
//!
//! A node sleeps between timers. Ahead of every sample the interface
//! circuit powers the sensors for the warm-up period; at the sample the
//! node wakes, reads, powers the sensors down and classifies the reading.
//! Significant readings leave immediately as alerts; normal readings are
//! buffered and averaged into one aggregate per reporting interval. On a
//! periodic wake the node opens a short listening window, answers any
//! queued requests and then returns to sleep. Routers forward traffic
//! from their children.
//!
//! Timers are driven by the engine: after every step it reads
//! `next_sample_at`, `next_report_at` and `next_wake_at` back from the
//! state.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::Message;
use crate::sensor::{SensorError, SensorPower, SensorReading};
use crate::time::{SimDuration, SimTime};
use crate::{NodeId, RoomId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Coordinator,
    Router,
    EndDevice,
}

impl Role {
    pub fn can_route(self) -> bool {
        !matches!(self, Role::EndDevice)
    }
}

/// Readings strictly above any of these are significant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub temp_high: f64,
    /// Estimated concentration, ppm.
    pub gas_high: f64,
    pub humidity_high: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { temp_high: 50.0, gas_high: 1_000.0, humidity_high: 90.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub id: NodeId,
    /// Room the node senses. Nodes without a room do not sample.
    pub room: Option<RoomId>,
    pub role: Role,
    pub parent: Option<NodeId>,
    pub sampling_period: SimDuration,
    pub reporting_interval: SimDuration,
    pub thresholds: Thresholds,
    pub wake_interval: SimDuration,
    pub awake_window: SimDuration,
    /// Shifts every timer of this node.
    pub phase_offset: SimDuration,
    /// Radio never sleeps. Always true for the coordinator.
    pub always_on: bool,
    /// Sensor power-on lead before each sample.
    pub warmup: SimDuration,
}

impl NodeConfig {
    /// Defaults: 60 s sampling, 900 s reporting, 2 s window every 60 s, 30 s warm-up.
    pub fn new(id: &str, room: Option<&str>, role: Role, parent: Option<&str>) -> Self {
        NodeConfig {
            id: id.to_string(),
            room: room.map(str::to_string),
            role,
            parent: parent.map(str::to_string),
            sampling_period: SimDuration::from_secs(60),
            reporting_interval: SimDuration::from_secs(900),
            thresholds: Thresholds::default(),
            wake_interval: SimDuration::from_secs(60),
            awake_window: SimDuration::from_secs(2),
            phase_offset: SimDuration::ZERO,
            always_on: role == Role::Coordinator,
            warmup: SimDuration::from_secs(30),
        }
    }

    pub fn senses(&self) -> bool {
        self.room.is_some()
    }

    pub fn duty_cycled(&self) -> bool {
        !self.always_on
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerState {
    Sleeping,
    Waking,
    Sampling,
    Transmitting,
    Listening,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: SimTime,
    pub temp: f64,
    pub humidity: f64,
    pub gas_ppm: f64,
    pub aqi: f64,
}

impl Sample {
    pub fn new(t: SimTime, r: SensorReading) -> Self {
        Sample { t, temp: r.temp, humidity: r.humidity, gas_ppm: r.gas_ppm, aqi: r.aqi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Aggregate,
    Alert,
    RequestReply,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReport {
    pub origin: NodeId,
    pub seq: u64,
    pub kind: ReportKind,
    pub temp: f64,
    pub humidity: f64,
    pub aqi: f64,
    /// First and last sample times covered by an aggregate.
    pub window: Option<(SimTime, SimTime)>,
    pub samples: u32,
    /// Set on a reply from a node that has never sampled.
    pub empty: bool,
}

impl SensorReport {
    fn single(origin: &NodeId, seq: u64, kind: ReportKind, s: &Sample) -> Self {
        SensorReport {
            origin: origin.clone(),
            seq,
            kind,
            temp: s.temp,
            humidity: s.humidity,
            aqi: s.aqi,
            window: Some((s.t, s.t)),
            samples: 1,
            empty: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub target: NodeId,
    pub issued_at: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeEvent {
    /// Periodic wake: open the listening window.
    Wake,
    /// End of the listening window.
    WindowClose,
    /// Interface circuit powers the sensors ahead of a sample.
    SensorsOn,
    SampleDue,
    ReportDue,
    RequestArrived(Request),
    MessageToForward(Message),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    SensorPower { on: bool },
    Sampled { sample: Sample, significant: bool },
    /// Origin-generated message (alert, aggregate or reply).
    Transmit(SensorReport),
    Forward(Message),
    /// The listening window opened by a wake closes at `at`.
    ReturnToSleep { at: SimTime },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NodeError {
    #[error("node {node}: protocol violation: {reason}")]
    ProtocolViolation { node: NodeId, reason: String },
    #[error("node {node}: event at {event} precedes node time {now}")]
    TimeWentBackwards { node: NodeId, event: SimTime, now: SimTime },
    #[error("node {node} has no sensors")]
    NoSensors { node: NodeId },
    #[error("node {node}: {source}")]
    Sensor { node: NodeId, source: SensorError },
}

/// Source of readings for [`node_step`]; the engine backs it with the
/// environment and sensor models.
pub trait SensorFrontEnd {
    fn read(&mut self, node: &NodeConfig, t: SimTime, power: SensorPower) -> Result<SensorReading, SensorError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub power: PowerState,
    pub buffer: Vec<Sample>,
    pub pending_requests: VecDeque<Request>,
    pub next_sample_at: SimTime,
    pub next_report_at: SimTime,
    pub next_wake_at: SimTime,
    /// Sequence number the next generated message receives.
    pub seq_counter: u64,
    pub sensors_on_since: Option<SimTime>,
    pub awake_until: Option<SimTime>,
    pub last_sample: Option<Sample>,
    pub last_aggregate: Option<SensorReport>,
    pub now: SimTime,
}

impl NodeState {
    pub fn new(config: &NodeConfig) -> Self {
        let phase = SimTime::ZERO + config.phase_offset;
        NodeState {
            power: if config.always_on { PowerState::Listening } else { PowerState::Sleeping },
            buffer: Vec::new(),
            pending_requests: VecDeque::new(),
            next_sample_at: phase + config.sampling_period,
            next_report_at: phase + config.reporting_interval,
            next_wake_at: phase,
            seq_counter: 0,
            sensors_on_since: None,
            awake_until: None,
            last_sample: None,
            last_aggregate: None,
            now: SimTime::ZERO,
        }
    }

    pub fn is_awake(&self, config: &NodeConfig, t: SimTime) -> bool {
        config.always_on || self.awake_until.is_some_and(|until| t < until)
    }

    /// When the sensors must be switched on for the next sample.
    pub fn next_sensors_on_at(&self, config: &NodeConfig) -> SimTime {
        SimTime(self.next_sample_at.0.saturating_sub(config.warmup.as_millis()))
    }

    fn next_seq(&mut self) -> u64 {
        let s = self.seq_counter;
        self.seq_counter += 1;
        s
    }

    fn settle(&mut self, config: &NodeConfig) {
        self.power = if self.is_awake(config, self.now) { PowerState::Listening } else { PowerState::Sleeping };
    }
}

/// True iff any quantity is strictly above its threshold.
pub fn classify_significance(sample: &Sample, thresholds: &Thresholds) -> bool {
    sample.temp > thresholds.temp_high
        || sample.gas_ppm > thresholds.gas_high
        || sample.humidity > thresholds.humidity_high
}

/// Averages and drains the buffer. An empty buffer yields no report.
pub fn aggregate_buffer(buffer: &mut Vec<Sample>, origin: &NodeId, seq: u64) -> Option<SensorReport> {
    let (first, last) = (buffer.first()?.t, buffer.last()?.t);
    let n = buffer.len() as f64;
    let (mut temp, mut humidity, mut aqi) = (0.0, 0.0, 0.0);
    for s in buffer.iter() {
        temp += s.temp;
        humidity += s.humidity;
        aqi += s.aqi;
    }
    let report = SensorReport {
        origin: origin.clone(),
        seq,
        kind: ReportKind::Aggregate,
        temp: temp / n,
        humidity: humidity / n,
        aqi: aqi / n,
        window: Some((first, last)),
        samples: buffer.len() as u32,
        empty: false,
    };
    buffer.clear();
    Some(report)
}

/// Reply with the freshest data: latest buffered sample, else the last
/// aggregate, else the last sample of any kind.
pub fn handle_request(state: &mut NodeState, config: &NodeConfig, _request: &Request) -> SensorReport {
    let seq = state.next_seq();
    let kind = ReportKind::RequestReply;
    if let Some(s) = state.buffer.last() {
        return SensorReport::single(&config.id, seq, kind, s);
    }
    if let Some(agg) = &state.last_aggregate {
        return SensorReport { seq, kind, ..agg.clone() };
    }
    if let Some(s) = state.last_sample {
        return SensorReport::single(&config.id, seq, kind, &s);
    }
    SensorReport {
        origin: config.id.clone(),
        seq,
        kind,
        temp: f64::NAN,
        humidity: f64::NAN,
        aqi: f64::NAN,
        window: None,
        samples: 0,
        empty: true,
    }
}

pub fn node_step(
    state: &mut NodeState,
    config: &NodeConfig,
    now: SimTime,
    event: NodeEvent,
    sensors: &mut dyn SensorFrontEnd,
) -> Result<Vec<Action>, NodeError> {
    if now < state.now {
        return Err(NodeError::TimeWentBackwards { node: config.id.clone(), event: now, now: state.now });
    }
    state.now = now;
    let mut actions = Vec::new();

    match event {
        NodeEvent::SensorsOn => {
            if !config.senses() {
                return Err(NodeError::NoSensors { node: config.id.clone() });
            }
            if state.sensors_on_since.is_none() {
                state.sensors_on_since = Some(now);
                actions.push(Action::SensorPower { on: true });
            }
        }
        NodeEvent::SampleDue => {
            if !config.senses() {
                return Err(NodeError::NoSensors { node: config.id.clone() });
            }
            state.power = PowerState::Sampling;
            state.next_sample_at += config.sampling_period;
            let powered_for = state.sensors_on_since.map_or(SimDuration::ZERO, |on| now - on);
            let power = SensorPower { node_awake: true, powered_for };
            let reading = sensors
                .read(config, now, power)
                .map_err(|source| NodeError::Sensor { node: config.id.clone(), source })?;
            if state.sensors_on_since.take().is_some() {
                actions.push(Action::SensorPower { on: false });
            }
            let sample = Sample::new(now, reading);
            let significant = classify_significance(&sample, &config.thresholds);
            state.last_sample = Some(sample);
            actions.push(Action::Sampled { sample, significant });
            if significant {
                state.power = PowerState::Transmitting;
                let seq = state.next_seq();
                actions.push(Action::Transmit(SensorReport::single(&config.id, seq, ReportKind::Alert, &sample)));
            } else {
                state.buffer.push(sample);
            }
        }
        NodeEvent::ReportDue => {
            state.next_report_at += config.reporting_interval;
            if !state.buffer.is_empty() {
                state.power = PowerState::Transmitting;
                let seq = state.next_seq();
                let report = aggregate_buffer(&mut state.buffer, &config.id, seq).expect("buffer is non-empty");
                state.last_aggregate = Some(report.clone());
                actions.push(Action::Transmit(report));
            }
        }
        NodeEvent::Wake => {
            state.power = PowerState::Waking;
            state.next_wake_at += config.wake_interval;
            let until = now + config.awake_window;
            state.awake_until = Some(state.awake_until.map_or(until, |u| u.max(until)));
            while let Some(req) = state.pending_requests.pop_front() {
                state.power = PowerState::Transmitting;
                actions.push(Action::Transmit(handle_request(state, config, &req)));
            }
            actions.push(Action::ReturnToSleep { at: state.awake_until.expect("set above") });
        }
        NodeEvent::WindowClose => {
            if state.awake_until.is_some_and(|until| until <= now) {
                state.awake_until = None;
            }
        }
        NodeEvent::RequestArrived(req) => {
            if state.is_awake(config, now) {
                state.power = PowerState::Transmitting;
                actions.push(Action::Transmit(handle_request(state, config, &req)));
            } else {
                // Held by the parent until the node next polls.
                state.pending_requests.push_back(req);
            }
        }
        NodeEvent::MessageToForward(msg) => {
            if !config.role.can_route() {
                return Err(NodeError::ProtocolViolation {
                    node: config.id.clone(),
                    reason: format!("end device asked to forward message {}#{}", msg.origin, msg.seq),
                });
            }
            state.power = PowerState::Transmitting;
            actions.push(Action::Forward(msg));
        }
    }

    state.settle(config);
    Ok(actions)
}
