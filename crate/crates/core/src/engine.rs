//! The discrete-event scheduler.
//!
//! Time advances in whole milliseconds. Pending events are ordered by
//! `(time, node, priority, insertion)`: node is the node's index in
//! id-sorted order, and priority runs window close, wake, sensors on,
//! sample, report, frame arrival, request issue. The order is part of the
//! golden-log contract.
//!
//! Node timers are re-armed from the node state after every step, and
//! only while they fall before the horizon. Sensors are only powered for
//! samples that fall inside the run. Frames travel hop by hop as
//! separate arrival events and are allowed to land after the horizon, so
//! the queue always drains.
//!
//! Energy is charged as follows:
//! - sensors draw their active power from power-on to the sample;
//! - a duty-cycled node's radio listens and its MCU runs for each wake
//!   window; an always-on node listens for the whole run;
//! - every frame sent or received costs one airtime of radio active power
//!   on top of any listening;
//! - every sample costs `sample_processing` of MCU active time;
//! - the rest of the run is charged at sleep power.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::io;

use thiserror::Error;

use crate::energy::{accrue, Component, ComponentState, EnergyError, EnergyLedger};
use crate::environment::{sample_environment, ActivityEvent, RoomProfile};
use crate::log::{Cause, Detail, EventRecord, EventSink, PayloadKind};
use crate::metrics::{Metrics, MetricsCollector, RunContext};
use crate::network::{attempt_delivery, hop_admits, route_upward, HopOutcome, LinkStreams, Message, NetworkError, Payload};
use crate::node::{node_step, Action, NodeConfig, NodeError, NodeEvent, NodeState, ReportKind, Request, SensorFrontEnd};
use crate::rng::{seed_stream, Stream};
use crate::scenario::{ResolvedScenario, Scenario, ScenarioError};
use crate::sensor::{read_sensors, AqiMapping, SensorError, SensorModels, SensorPower, SensorReading};
use crate::time::{SimDuration, SimTime};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("writing the event log: {0}")]
    Sink(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunStats {
    pub scheduled: u64,
    pub processed: u64,
    pub records: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Filled by [`run`]; empty when the records went to a caller's sink.
    pub log: Vec<EventRecord>,
    pub ledgers: Vec<EnergyLedger>,
    pub metrics: Metrics,
    pub context: RunContext,
    pub stats: RunStats,
}

impl RunOutput {
    pub fn ledger(&self, node: &str) -> Option<&EnergyLedger> {
        self.ledgers.iter().find(|l| l.node == node)
    }
}

/// Validates and runs `scenario`, keeping the full log in memory.
pub fn run(scenario: &Scenario) -> Result<RunOutput, EngineError> {
    let mut log = Vec::new();
    let mut out = run_with_sink(scenario, &mut log)?;
    out.log = log;
    Ok(out)
}

/// Validates and runs `scenario`, streaming records into `sink`.
pub fn run_with_sink(scenario: &Scenario, sink: &mut dyn EventSink) -> Result<RunOutput, EngineError> {
    let resolved = scenario.validate()?;
    run_resolved(&resolved, sink)
}

pub fn run_resolved(scenario: &ResolvedScenario, sink: &mut dyn EventSink) -> Result<RunOutput, EngineError> {
    let mut engine = Engine::new(scenario, sink)?;
    engine.start();
    while let Some(item) = engine.queue.pop() {
        engine.stats.processed += 1;
        engine.handle(item)?;
    }
    engine.finish()
}

const PRIO_WINDOW_CLOSE: u8 = 0;
const PRIO_WAKE: u8 = 1;
const PRIO_SENSORS_ON: u8 = 2;
const PRIO_SAMPLE: u8 = 3;
const PRIO_REPORT: u8 = 4;
const PRIO_ARRIVAL: u8 = 5;
const PRIO_ISSUE: u8 = 6;

#[derive(Debug)]
enum Event {
    Timer(NodeEvent),
    /// A frame reaches node `node` of the queue entry.
    Arrival(Message),
    IssueRequest(Request),
}

#[derive(Debug)]
struct Item {
    key: (u64, usize, u8, u64),
    event: Event,
}

impl PartialEq for Item {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Item {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.cmp(&self.key)
    }
}

/// Ground truth and sensor noise for every node.
struct Sensors<'a> {
    rooms: BTreeMap<&'a str, &'a RoomProfile>,
    events: &'a [ActivityEvent],
    models: &'a SensorModels,
    mapping: AqiMapping,
    env_streams: BTreeMap<String, Stream>,
    sensor_streams: BTreeMap<String, Stream>,
    seed: u64,
}

impl SensorFrontEnd for Sensors<'_> {
    fn read(&mut self, node: &NodeConfig, t: SimTime, power: SensorPower) -> Result<SensorReading, SensorError> {
        let room = node.room.as_deref().expect("only sensing nodes sample");
        let profile = self.rooms[room];
        let seed = self.seed;
        let env_rng = self.env_streams.entry(room.to_string()).or_insert_with(|| seed_stream(seed, "environment", room));
        let env = sample_environment(profile, self.events, t, env_rng);
        let rng = self.sensor_streams.entry(node.id.clone()).or_insert_with(|| seed_stream(seed, "sensor", &node.id));
        read_sensors(power, &env, self.models, &self.mapping, rng)
    }
}

struct Engine<'a> {
    sc: &'a ResolvedScenario,
    horizon: SimTime,
    index: BTreeMap<&'a str, usize>,
    states: Vec<NodeState>,
    ledgers: Vec<EnergyLedger>,
    sensors_on: Vec<Option<SimTime>>,
    sink_idx: usize,
    queue: BinaryHeap<Item>,
    insertion: u64,
    up: LinkStreams,
    down: LinkStreams,
    front: Sensors<'a>,
    next_request: u64,
    out: &'a mut dyn EventSink,
    metrics: MetricsCollector,
    stats: RunStats,
}

impl<'a> Engine<'a> {
    fn new(sc: &'a ResolvedScenario, out: &'a mut dyn EventSink) -> Result<Self, EngineError> {
        let index = sc.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect::<BTreeMap<_, _>>();
        let sink_idx = index[sc.coordinator().id.as_str()];
        let context = RunContext {
            start_date: sc.start_date,
            horizon: sc.horizon,
            nodes: sc.nodes.iter().map(|n| (n.id.clone(), n.room.clone())).collect(),
        };
        // Fail on an unusable power profile before anything runs.
        for c in Component::ALL {
            for s in ComponentState::ALL {
                sc.power.power_w(c, s)?;
            }
        }
        Ok(Engine {
            sc,
            horizon: SimTime::ZERO + sc.horizon,
            index,
            states: sc.nodes.iter().map(NodeState::new).collect(),
            ledgers: sc.nodes.iter().map(|n| EnergyLedger::new(&n.id)).collect(),
            sensors_on: vec![None; sc.nodes.len()],
            sink_idx,
            queue: BinaryHeap::new(),
            insertion: 0,
            up: LinkStreams::new(sc.master_seed),
            down: LinkStreams::with_purpose(sc.master_seed, "link-down"),
            front: Sensors {
                rooms: sc.rooms.iter().map(|r| (r.id.as_str(), r)).collect(),
                events: &sc.events,
                models: &sc.sensors,
                mapping: sc.sensors.mapping(),
                env_streams: BTreeMap::new(),
                sensor_streams: BTreeMap::new(),
                seed: sc.master_seed,
            },
            next_request: 0,
            out,
            metrics: MetricsCollector::new(context),
            stats: RunStats::default(),
        })
    }

    fn push(&mut self, t: SimTime, node: usize, prio: u8, event: Event) {
        self.queue.push(Item { key: (t.as_millis(), node, prio, self.insertion), event });
        self.insertion += 1;
        self.stats.scheduled += 1;
    }

    fn timer(&mut self, t: SimTime, node: usize, prio: u8, event: NodeEvent) {
        if t < self.horizon {
            self.push(t, node, prio, Event::Timer(event));
        }
    }

    fn emit(&mut self, t: SimTime, node: usize, detail: Detail) -> Result<(), EngineError> {
        let rec = EventRecord::new(t, &self.sc.nodes[node].id, detail);
        self.metrics.observe(&rec);
        self.out.record(&rec)?;
        self.stats.records += 1;
        Ok(())
    }

    fn charge(&mut self, node: usize, c: Component, s: ComponentState, d: SimDuration) -> Result<(), EngineError> {
        accrue(&mut self.ledgers[node], c, s, d, &self.sc.power)?;
        Ok(())
    }

    fn airtime(&mut self, node: usize) -> Result<(), EngineError> {
        self.charge(node, Component::Radio, ComponentState::Active, self.sc.airtime)
    }

    fn start(&mut self) {
        let sc = self.sc;
        for (i, cfg) in sc.nodes.iter().enumerate() {
            let st = &self.states[i];
            let (on, sample, report, wake) =
                (st.next_sensors_on_at(cfg), st.next_sample_at, st.next_report_at, st.next_wake_at);
            if cfg.senses() && sample < self.horizon {
                self.timer(on, i, PRIO_SENSORS_ON, NodeEvent::SensorsOn);
                self.timer(sample, i, PRIO_SAMPLE, NodeEvent::SampleDue);
                self.timer(report, i, PRIO_REPORT, NodeEvent::ReportDue);
            }
            if cfg.duty_cycled() {
                self.timer(wake, i, PRIO_WAKE, NodeEvent::Wake);
            }
        }
        for (t, target) in self.sc.requests.clone() {
            let req = Request { id: self.next_request, target, issued_at: t };
            self.next_request += 1;
            self.push(t, self.sink_idx, PRIO_ISSUE, Event::IssueRequest(req));
        }
    }

    fn handle(&mut self, item: Item) -> Result<(), EngineError> {
        let (t, node) = (SimTime(item.key.0), item.key.1);
        match item.event {
            Event::Timer(ev) => self.on_timer(t, node, ev),
            Event::Arrival(msg) => self.on_arrival(t, node, msg),
            Event::IssueRequest(req) => self.on_issue(t, req),
        }
    }

    fn step(&mut self, t: SimTime, node: usize, ev: NodeEvent) -> Result<Vec<Action>, EngineError> {
        let cfg = &self.sc.nodes[node];
        Ok(node_step(&mut self.states[node], cfg, t, ev, &mut self.front)?)
    }

    fn on_timer(&mut self, t: SimTime, node: usize, ev: NodeEvent) -> Result<(), EngineError> {
        let cfg = &self.sc.nodes[node];
        let was_awake_until = self.states[node].awake_until.filter(|&u| u > t);
        let kind = match ev {
            NodeEvent::Wake => PRIO_WAKE,
            NodeEvent::WindowClose => PRIO_WINDOW_CLOSE,
            NodeEvent::SensorsOn => PRIO_SENSORS_ON,
            NodeEvent::SampleDue => PRIO_SAMPLE,
            NodeEvent::ReportDue => PRIO_REPORT,
            _ => unreachable!("only timers are scheduled as timers"),
        };
        if kind == PRIO_WAKE {
            self.emit(t, node, Detail::Wake)?;
        }
        let actions = self.step(t, node, ev)?;
        self.apply(t, node, actions)?;

        let st = &self.states[node];
        match kind {
            PRIO_WAKE => {
                let next = st.next_wake_at;
                let until = st.awake_until.expect("a wake opens a window");
                // Charge only the part of the window not already paid for.
                let from = was_awake_until.unwrap_or(t).max(t);
                let span = SimTime(until.as_millis().min(self.horizon.as_millis())).saturating_since(from);
                self.charge(node, Component::Radio, ComponentState::Listen, span)?;
                self.charge(node, Component::Mcu, ComponentState::Active, span)?;
                self.timer(next, node, PRIO_WAKE, NodeEvent::Wake);
            }
            PRIO_WINDOW_CLOSE => {
                if st.awake_until.is_none() {
                    self.emit(t, node, Detail::Sleep)?;
                }
            }
            PRIO_SAMPLE => {
                let (on, next) = (st.next_sensors_on_at(cfg), st.next_sample_at);
                if next < self.horizon {
                    self.timer(on, node, PRIO_SENSORS_ON, NodeEvent::SensorsOn);
                    self.timer(next, node, PRIO_SAMPLE, NodeEvent::SampleDue);
                }
            }
            PRIO_REPORT => {
                let next = st.next_report_at;
                self.timer(next, node, PRIO_REPORT, NodeEvent::ReportDue);
            }
            _ => {}
        }
        Ok(())
    }

    fn apply(&mut self, t: SimTime, node: usize, actions: Vec<Action>) -> Result<(), EngineError> {
        for action in actions {
            match action {
                Action::SensorPower { on: true } => self.sensors_on[node] = Some(t),
                Action::SensorPower { on: false } => {
                    if let Some(since) = self.sensors_on[node].take() {
                        self.sensors_powered(node, t - since)?;
                    }
                }
                Action::Sampled { sample, significant } => {
                    let room = self.sc.nodes[node].room.clone().expect("sampling node has a room");
                    self.charge(node, Component::Mcu, ComponentState::Active, self.sc.sample_processing)?;
                    let d = Detail::Sample {
                        room,
                        temp: sample.temp,
                        humidity: sample.humidity,
                        gas_ppm: sample.gas_ppm,
                        aqi: sample.aqi,
                        significant,
                    };
                    self.emit(t, node, d)?;
                }
                Action::Transmit(report) => {
                    let d = match report.kind {
                        ReportKind::Alert => Detail::AlertTx { seq: report.seq },
                        ReportKind::Aggregate => Detail::AggregateTx { seq: report.seq, samples: report.samples },
                        ReportKind::RequestReply => Detail::Reply { seq: report.seq, empty: report.empty },
                    };
                    self.emit(t, node, d)?;
                    let msg = Message::report(report, t);
                    if node == self.sink_idx {
                        self.deliver(t, msg)?;
                    } else {
                        self.send_up(t, node, msg)?;
                    }
                }
                Action::Forward(msg) => self.send_up(t, node, msg)?,
                Action::ReturnToSleep { at } => {
                    if at > t {
                        self.timer(at, node, PRIO_WINDOW_CLOSE, NodeEvent::WindowClose);
                    }
                }
            }
        }
        Ok(())
    }

    fn sensors_powered(&mut self, node: usize, d: SimDuration) -> Result<(), EngineError> {
        for c in [Component::GasSensor, Component::HumiditySensor, Component::TempSensor] {
            self.charge(node, c, ComponentState::Active, d)?;
        }
        Ok(())
    }

    /// Puts `msg` on `node`'s uplink.
    fn send_up(&mut self, t: SimTime, node: usize, msg: Message) -> Result<(), EngineError> {
        let from = &self.sc.nodes[node].id;
        let parent = self.sc.nodes[node].parent.as_deref().ok_or_else(|| NetworkError::NoRoute(from.clone()))?;
        let to = self.index[parent];
        if msg.origin != *from {
            let d = Detail::Forward {
                origin: msg.origin.clone(),
                seq: msg.seq,
                payload: PayloadKind::of(&msg),
                to: parent.to_string(),
            };
            self.emit(t, node, d)?;
        }
        self.airtime(node)?;
        let link = self.sc.topology.link(from);
        match attempt_delivery(&link, self.up.stream(from)) {
            HopOutcome::Delivered { latency } => self.push(t + latency, to, PRIO_ARRIVAL, Event::Arrival(msg)),
            HopOutcome::Lost => self.lose(t, node, &msg, Cause::Link)?,
        }
        Ok(())
    }

    /// Puts a request on the downlink from `node` towards `next`.
    fn send_down(&mut self, t: SimTime, node: usize, next: usize, msg: Message) -> Result<(), EngineError> {
        let child = &self.sc.nodes[next].id;
        if node != self.sink_idx {
            let d = Detail::Forward { origin: msg.origin.clone(), seq: msg.seq, payload: PayloadKind::Request, to: child.clone() };
            self.emit(t, node, d)?;
        }
        self.airtime(node)?;
        let link = self.sc.topology.link(child);
        match attempt_delivery(&link, self.down.stream(child)) {
            HopOutcome::Delivered { latency } => self.push(t + latency, next, PRIO_ARRIVAL, Event::Arrival(msg)),
            HopOutcome::Lost => self.lose(t, node, &msg, Cause::Link)?,
        }
        Ok(())
    }

    fn lose(&mut self, t: SimTime, node: usize, msg: &Message, cause: Cause) -> Result<(), EngineError> {
        let d = Detail::Loss {
            origin: msg.origin.clone(),
            seq: msg.seq,
            payload: PayloadKind::of(msg),
            hop: msg.hop_path.len(),
            cause,
        };
        self.emit(t, node, d)
    }

    fn deliver(&mut self, t: SimTime, mut msg: Message) -> Result<(), EngineError> {
        msg.delivered_at = Some(t);
        if msg.hop_path.last() != Some(&self.sc.nodes[self.sink_idx].id) {
            msg.hop_path.push(self.sc.nodes[self.sink_idx].id.clone());
        }
        let d = Detail::Delivery {
            payload: PayloadKind::of(&msg),
            origin: msg.origin,
            seq: msg.seq,
            created: msg.created_at,
            path: msg.hop_path,
        };
        self.emit(t, self.sink_idx, d)
    }

    fn on_arrival(&mut self, t: SimTime, node: usize, mut msg: Message) -> Result<(), EngineError> {
        let cfg = &self.sc.nodes[node];
        let awake = self.states[node].is_awake(cfg, t);
        if let Payload::Request(req) = &msg.payload {
            let req = req.clone();
            if cfg.id == req.target {
                if awake {
                    self.airtime(node)?;
                }
                msg.hop_path.push(cfg.id.clone());
                self.emit(t, node, Detail::RequestRx { request: req.id })?;
                let actions = self.step(t, node, NodeEvent::RequestArrived(req))?;
                return self.apply(t, node, actions);
            }
            if !hop_admits(cfg.role, awake, &msg) {
                return self.lose(t, node, &msg, Cause::Asleep);
            }
            self.airtime(node)?;
            msg.hop_path.push(cfg.id.clone());
            let path = route_upward(&self.sc.topology, &req.target)?;
            let pos = path.iter().position(|n| *n == cfg.id).ok_or_else(|| NetworkError::NoRoute(req.target.clone()))?;
            let next = self.index[path[pos - 1].as_str()];
            return self.send_down(t, node, next, msg);
        }

        if !hop_admits(cfg.role, awake, &msg) {
            return self.lose(t, node, &msg, Cause::Asleep);
        }
        self.airtime(node)?;
        if node == self.sink_idx {
            return self.deliver(t, msg);
        }
        msg.hop_path.push(cfg.id.clone());
        let actions = self.step(t, node, NodeEvent::MessageToForward(msg))?;
        self.apply(t, node, actions)
    }

    fn on_issue(&mut self, t: SimTime, req: Request) -> Result<(), EngineError> {
        let sink = self.sink_idx;
        self.emit(t, sink, Detail::Request { request: req.id, target: req.target.clone() })?;
        let path = route_upward(&self.sc.topology, &req.target)?;
        let next = self.index[path[path.len() - 2].as_str()];
        let msg = Message::request(&self.sc.nodes[sink].id, req);
        self.send_down(t, sink, next, msg)
    }

    fn finish(mut self) -> Result<RunOutput, EngineError> {
        for i in 0..self.sc.nodes.len() {
            if let Some(since) = self.sensors_on[i].take() {
                let d = self.horizon.saturating_since(since);
                self.sensors_powered(i, d)?;
            }
            if self.sc.nodes[i].always_on {
                self.charge(i, Component::Radio, ComponentState::Listen, self.sc.horizon)?;
                self.charge(i, Component::Mcu, ComponentState::Active, self.sc.horizon)?;
            }
            self.ledgers[i].fill_sleep(self.sc.horizon, &self.sc.power)?;
        }
        self.out.flush()?;
        let context = self.metrics.context().clone();
        let metrics = self.metrics.finish(&self.ledgers);
        Ok(RunOutput { log: Vec::new(), ledgers: self.ledgers, metrics, context, stats: self.stats })
    }
}

