//! Tree topology, upward routing and the link loss model.
//!
//! Every non-coordinator node has exactly one parent, so a node's uplink
//! is identified by the child id. A hop succeeds with the link's delivery
//! probability (independent Bernoulli draw from that link's stream).
//! A router that is asleep when a frame reaches it drops the frame unless
//! it is an alert: alerts wake the path.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::node::{ReportKind, Request, Role, SensorReport};
use crate::rng::{seed_stream, unit_f64, Stream};
use crate::time::{SimDuration, SimTime};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Report(SensorReport),
    Request(Request),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub origin: NodeId,
    pub seq: u64,
    pub payload: Payload,
    /// Nodes that have held the message so far, origin first.
    pub hop_path: Vec<NodeId>,
    pub created_at: SimTime,
    pub delivered_at: Option<SimTime>,
}

impl Message {
    pub fn report(report: SensorReport, created_at: SimTime) -> Self {
        Message {
            origin: report.origin.clone(),
            seq: report.seq,
            hop_path: vec![report.origin.clone()],
            payload: Payload::Report(report),
            created_at,
            delivered_at: None,
        }
    }

    pub fn request(sink: &NodeId, request: Request) -> Self {
        Message {
            origin: sink.clone(),
            seq: request.id,
            hop_path: vec![sink.clone()],
            created_at: request.issued_at,
            payload: Payload::Request(request),
            delivered_at: None,
        }
    }

    pub fn is_alert(&self) -> bool {
        matches!(&self.payload, Payload::Report(r) if r.kind == ReportKind::Alert)
    }

    pub fn is_request(&self) -> bool {
        matches!(self.payload, Payload::Request(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub delivery_probability: f64,
    pub latency: SimDuration,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams { delivery_probability: 1.0, latency: SimDuration::from_millis(50) }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Topology {
    pub roles: BTreeMap<NodeId, Role>,
    pub parent: BTreeMap<NodeId, NodeId>,
    /// Uplink parameters keyed by child; missing entries use `default_link`.
    pub links: BTreeMap<NodeId, LinkParams>,
    pub default_link: LinkParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyViolation {
    #[error("network has no coordinator")]
    NoCoordinator,
    #[error("network has {} coordinators ({}), exactly one is required", .0.len(), .0.join(", "))]
    MultipleCoordinators(Vec<NodeId>),
    #[error("coordinator {0} must not have a parent")]
    CoordinatorHasParent(NodeId),
    #[error("node {0} has no parent")]
    MissingParent(NodeId),
    #[error("node {node} names unknown parent {parent}")]
    UnknownParent { node: NodeId, parent: NodeId },
    #[error("end device {parent} cannot be the parent of {child}")]
    EndDeviceParent { child: NodeId, parent: NodeId },
    #[error("parent links form a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<NodeId>),
    #[error("node {0} does not reach the coordinator")]
    Orphan(NodeId),
    #[error("link {child}: {reason}")]
    BadLink { child: NodeId, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("route from {0} does not reach the coordinator")]
    NoRoute(NodeId),
}

impl Topology {
    pub fn new() -> Self {
        Topology::default()
    }

    pub fn add_node(&mut self, id: &str, role: Role, parent: Option<&str>) -> &mut Self {
        self.roles.insert(id.to_string(), role);
        if let Some(p) = parent {
            self.parent.insert(id.to_string(), p.to_string());
        }
        self
    }

    pub fn set_link(&mut self, child: &str, params: LinkParams) -> &mut Self {
        self.links.insert(child.to_string(), params);
        self
    }

    pub fn link(&self, child: &NodeId) -> LinkParams {
        self.links.get(child).copied().unwrap_or(self.default_link)
    }

    pub fn role(&self, node: &NodeId) -> Option<Role> {
        self.roles.get(node).copied()
    }

    pub fn coordinator(&self) -> Option<&NodeId> {
        self.roles.iter().find(|(_, r)| **r == Role::Coordinator).map(|(id, _)| id)
    }

    pub fn children(&self, node: &NodeId) -> impl Iterator<Item = &NodeId> {
        let node = node.clone();
        self.parent.iter().filter(move |(_, p)| **p == node).map(|(c, _)| c)
    }
}

/// Every rule the tree breaks. An empty list means the topology is valid.
pub fn validate_topology(topology: &Topology) -> Vec<TopologyViolation> {
    let mut out = Vec::new();
    let coordinators: Vec<NodeId> =
        topology.roles.iter().filter(|(_, r)| **r == Role::Coordinator).map(|(id, _)| id.clone()).collect();
    match coordinators.len() {
        0 => out.push(TopologyViolation::NoCoordinator),
        1 => {}
        _ => out.push(TopologyViolation::MultipleCoordinators(coordinators.clone())),
    }

    for (node, role) in &topology.roles {
        match (role, topology.parent.get(node)) {
            (Role::Coordinator, Some(_)) => out.push(TopologyViolation::CoordinatorHasParent(node.clone())),
            (Role::Coordinator, None) => {}
            (_, None) => out.push(TopologyViolation::MissingParent(node.clone())),
            (_, Some(parent)) => match topology.roles.get(parent) {
                None => out.push(TopologyViolation::UnknownParent { node: node.clone(), parent: parent.clone() }),
                Some(Role::EndDevice) => {
                    out.push(TopologyViolation::EndDeviceParent { child: node.clone(), parent: parent.clone() })
                }
                Some(_) => {}
            },
        }
    }
    for (node, parent) in &topology.parent {
        if !topology.roles.contains_key(node) {
            out.push(TopologyViolation::UnknownParent { node: node.clone(), parent: parent.clone() });
        }
    }

    // Walk each chain; report every cycle once and every node whose chain
    // dead-ends before a coordinator.
    let mut cycles: BTreeSet<Vec<NodeId>> = BTreeSet::new();
    for (node, role) in &topology.roles {
        if *role == Role::Coordinator {
            continue;
        }
        let mut seen: Vec<&NodeId> = vec![node];
        let mut cur = node;
        loop {
            let Some(next) = topology.parent.get(cur) else {
                if topology.roles.get(cur) != Some(&Role::Coordinator) && cur != node {
                    out.push(TopologyViolation::Orphan(node.clone()));
                }
                break;
            };
            if let Some(pos) = seen.iter().position(|n| *n == next) {
                let mut cycle: Vec<NodeId> = seen[pos..].iter().map(|n| (*n).clone()).collect();
                let min = cycle.iter().enumerate().min_by_key(|(_, n)| *n).map(|(i, _)| i).unwrap_or(0);
                cycle.rotate_left(min);
                cycles.insert(cycle);
                break;
            }
            if !topology.roles.contains_key(next) {
                // The broken link itself is reported as UnknownParent.
                if cur != node {
                    out.push(TopologyViolation::Orphan(node.clone()));
                }
                break;
            }
            seen.push(next);
            cur = next;
        }
    }
    out.extend(cycles.into_iter().map(TopologyViolation::Cycle));

    let check_link = |child: &NodeId, link: &LinkParams, out: &mut Vec<TopologyViolation>| {
        let p = link.delivery_probability;
        if !(0.0..=1.0).contains(&p) {
            out.push(TopologyViolation::BadLink {
                child: child.clone(),
                reason: format!("delivery probability {p} outside [0, 1]"),
            });
        }
    };
    check_link(&"<default>".to_string(), &topology.default_link, &mut out);
    for (child, link) in &topology.links {
        check_link(child, link, &mut out);
        if !topology.parent.contains_key(child) {
            out.push(TopologyViolation::BadLink { child: child.clone(), reason: "node has no uplink".into() });
        }
    }
    out
}

/// `origin, parent(origin), ..., coordinator`.
pub fn route_upward(topology: &Topology, origin: &NodeId) -> Result<Vec<NodeId>, NetworkError> {
    if !topology.roles.contains_key(origin) {
        return Err(NetworkError::UnknownNode(origin.clone()));
    }
    let mut path = vec![origin.clone()];
    let mut cur = origin;
    while topology.roles.get(cur) != Some(&Role::Coordinator) {
        let next = topology.parent.get(cur).ok_or_else(|| NetworkError::NoRoute(origin.clone()))?;
        if path.len() >= topology.roles.len() || !topology.roles.contains_key(next) {
            return Err(NetworkError::NoRoute(origin.clone()));
        }
        path.push(next.clone());
        cur = next;
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopOutcome {
    Delivered { latency: SimDuration },
    Lost,
}

/// One Bernoulli trial on a link. Always consumes exactly one draw.
pub fn attempt_delivery(link: &LinkParams, rng: &mut Stream) -> HopOutcome {
    if unit_f64(rng) < link.delivery_probability {
        HopOutcome::Delivered { latency: link.latency }
    } else {
        HopOutcome::Lost
    }
}

/// Whether a frame reaching `receiver` is accepted.
pub fn hop_admits(receiver_role: Role, receiver_awake: bool, message: &Message) -> bool {
    receiver_role == Role::Coordinator || receiver_awake || message.is_alert()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossCause {
    /// Bernoulli failure on the link.
    Link,
    /// Next-hop router was asleep.
    Asleep,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SendOutcome {
    Delivered { at: SimTime, path: Vec<NodeId> },
    /// `hop` is 1-based: hop 1 is origin to its parent.
    Lost { hop: usize, cause: LossCause },
}

/// Uplink streams for every node, created on first use.
#[derive(Debug, Clone)]
pub struct LinkStreams {
    master_seed: u64,
    purpose: &'static str,
    streams: BTreeMap<NodeId, Stream>,
}

impl LinkStreams {
    pub fn new(master_seed: u64) -> Self {
        Self::with_purpose(master_seed, "link")
    }

    /// Separate family, e.g. for the downlink direction.
    pub fn with_purpose(master_seed: u64, purpose: &'static str) -> Self {
        LinkStreams { master_seed, purpose, streams: BTreeMap::new() }
    }

    pub fn stream(&mut self, child: &NodeId) -> &mut Stream {
        let (seed, purpose) = (self.master_seed, self.purpose);
        self.streams.entry(child.clone()).or_insert_with(|| seed_stream(seed, purpose, child))
    }
}

/// Walks `message` up the tree hop by hop in one go.
///
/// `is_awake(node, t)` reports whether a router is listening when the
/// frame reaches it. The engine runs the same per-hop rules as separate
/// timed events; this function is the closed-loop version used for
/// analysis and tests.
pub fn send_to_sink(
    topology: &Topology,
    message: &Message,
    streams: &mut LinkStreams,
    is_awake: impl Fn(&NodeId, SimTime) -> bool,
) -> Result<SendOutcome, NetworkError> {
    let path = route_upward(topology, &message.origin)?;
    let mut t = message.created_at;
    for (i, pair) in path.windows(2).enumerate() {
        let (from, to) = (&pair[0], &pair[1]);
        match attempt_delivery(&topology.link(from), streams.stream(from)) {
            HopOutcome::Lost => return Ok(SendOutcome::Lost { hop: i + 1, cause: LossCause::Link }),
            HopOutcome::Delivered { latency } => t += latency,
        }
        let role = topology.role(to).ok_or_else(|| NetworkError::UnknownNode(to.clone()))?;
        if !hop_admits(role, is_awake(to, t), message) {
            return Ok(SendOutcome::Lost { hop: i + 1, cause: LossCause::Asleep });
        }
    }
    Ok(SendOutcome::Delivered { at: t, path })
}
