//! Discrete-event simulator for a ZigBee indoor air-quality sensor network.
//!
//! A scenario declares rooms, activity events, sensor nodes with their
//! ZigBee roles and parent links, per-link delivery parameters and the
//! hardware power profile. [`engine::run`] drives every node's duty-cycled
//! state machine over simulated time and produces an event log, per-node
//! energy ledgers and the headline metrics (throughput, energy, hourly and
//! daily series).

pub mod energy;
pub mod engine;
pub mod environment;
pub mod log;
pub mod metrics;
pub mod network;
pub mod node;
pub mod rng;
pub mod scenario;
pub mod sensor;
pub mod time;

pub use engine::{run, run_with_sink, RunOutput};
pub use scenario::{Scenario, ScenarioError};
pub use time::{SimDuration, SimTime};

/// Identifier of a node in the network.
pub type NodeId = String;

/// Identifier of a room in the environment model.
pub type RoomId = String;
