//! Topological orchestration of critic/actor interactions.
//!
//! The schedule fixes a control order in which every edge critic sits between
//! the actors it connects. Execution follows the data flow instead: an edge's
//! interaction may start as soon as its source node holds an artifact, so
//! independent branches run concurrently without changing any result.

mod execute;
mod interaction;

use std::collections::{BinaryHeap, HashMap};
use std::cmp::Reverse;

use serde::Serialize;
use thiserror::Error;

use crate::agentization::AgentId;
use crate::memory::count_tokens;
use crate::topology::{validate, Edge, NodeId, Topology, Violation};

pub use execute::{execute, ExecuteError, ExecuteOptions, RunTrace};
pub use interaction::{
    aggregate_incoming, run_edge_interaction, AggregationMode, AggregationOutput, EdgeTranscript, FoldStep, UnitContext,
    UnitOutput,
};

/// Exchange rounds per leg when nothing else is configured.
pub const DEFAULT_ROUNDS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase", tag = "type", content = "node")]
pub enum Producer {
    Node(NodeId),
    Aggregation(NodeId),
}

impl From<NodeId> for Producer {
    fn from(node: NodeId) -> Self {
        Producer::Node(node)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Artifact {
    pub id: String,
    pub content: String,
    pub producer: Producer,
    pub version: u32,
    pub token_count: usize,
    pub lineage: Vec<String>,
}

impl Artifact {
    pub fn new(id: impl Into<String>, content: impl Into<String>, producer: Producer, version: u32, lineage: Vec<String>) -> Self {
        let content = content.into();
        Self { id: id.into(), token_count: count_tokens(&content), content, producer, version, lineage }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Request,
    Reply,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptMessage {
    pub unit: String,
    pub leg: u8,
    pub round: u32,
    pub speaker: AgentId,
    pub direction: Direction,
    pub text: String,
    pub token_count: usize,
    /// True when the text came out of a backend call inside this unit; false
    /// for presenting the stored input artifact or forwarding an instruction.
    pub generated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InteractionUnit {
    pub edge: Edge,
    /// Position of the edge's critic in the agent sequence.
    pub order_index: usize,
    pub upstream_artifact_sources: Vec<NodeId>,
    pub rounds_budget: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub units: Vec<InteractionUnit>,
    pub node_order: Vec<NodeId>,
    node_count: usize,
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
    /// Agent-sequence index of each node's actor.
    node_index: Vec<usize>,
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("topology has a cycle: {witness:?}")]
    Cycle { witness: Vec<NodeId> },
    #[error("topology has no nodes")]
    Empty,
    #[error("rounds budget must be positive")]
    ZeroRounds,
}

/// Linearizes the network so that for every edge `(i, j)` the actor of `i`
/// precedes the edge critic, which precedes the actor of `j`.
///
/// Nodes are peeled by in-degree, lowest id first among ready nodes; each
/// node's outgoing units follow it directly, by ascending destination.
pub fn compute_schedule(t: &Topology) -> Result<Schedule, ScheduleError> {
    let n = t.node_count();
    if n == 0 {
        return Err(ScheduleError::Empty);
    }
    let parents = t.parents();
    let children = t.children();
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&v| indeg[v] == 0).map(Reverse).collect();
    let mut node_order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = ready.pop() {
        node_order.push(NodeId(v));
        for c in &children[v] {
            indeg[c.0] -= 1;
            if indeg[c.0] == 0 {
                ready.push(Reverse(c.0));
            }
        }
    }
    if node_order.len() < n {
        let witness = validate(t)
            .violations
            .into_iter()
            .find_map(|v| match v {
                Violation::CycleFound { witness } => Some(witness),
                _ => None,
            })
            .unwrap_or_default();
        return Err(ScheduleError::Cycle { witness });
    }

    let mut units = Vec::with_capacity(t.edge_count());
    let mut node_index = vec![0; n];
    let mut position = 0;
    for &v in &node_order {
        node_index[v.0] = position;
        position += 1;
        for &dst in &children[v.0] {
            units.push(InteractionUnit {
                edge: (v, dst),
                order_index: position,
                upstream_artifact_sources: parents[v.0].clone(),
                rounds_budget: DEFAULT_ROUNDS,
            });
            position += 1;
        }
    }

    Ok(Schedule { units, node_order, node_count: n, parents, children, node_index })
}

impl Schedule {
    pub fn with_rounds_budget(mut self, rounds: u32) -> Result<Self, ScheduleError> {
        if rounds == 0 {
            return Err(ScheduleError::ZeroRounds);
        }
        for unit in &mut self.units {
            unit.rounds_budget = rounds;
        }
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.units.len()
    }

    pub fn parents(&self, node: NodeId) -> &[NodeId] {
        &self.parents[node.0]
    }

    pub fn children(&self, node: NodeId) -> &[NodeId] {
        &self.children[node.0]
    }

    pub fn sinks(&self) -> Vec<NodeId> {
        (0..self.node_count).filter(|&v| self.children[v].is_empty()).map(NodeId).collect()
    }

    pub fn sources(&self) -> Vec<NodeId> {
        (0..self.node_count).filter(|&v| self.parents[v].is_empty()).map(NodeId).collect()
    }

    /// Full agent sequence: actors and edge critics interleaved.
    pub fn agent_sequence(&self) -> Vec<AgentId> {
        let mut seq = vec![AgentId::Actor(NodeId(0)); self.node_count + self.units.len()];
        for v in 0..self.node_count {
            seq[self.node_index[v]] = AgentId::Actor(NodeId(v));
        }
        for unit in &self.units {
            seq[unit.order_index] = AgentId::Critic(unit.edge.0, unit.edge.1);
        }
        seq
    }

    /// Index of an agent in [`Schedule::agent_sequence`].
    pub fn agent_index(&self, agent: AgentId) -> Option<usize> {
        match agent {
            AgentId::Actor(v) => self.node_index.get(v.0).copied(),
            AgentId::Critic(a, b) => self.units.iter().find(|u| u.edge == (a, b)).map(|u| u.order_index),
        }
    }

    pub(crate) fn unit_positions(&self) -> HashMap<Edge, usize> {
        self.units.iter().enumerate().map(|(i, u)| (u.edge, i)).collect()
    }

    pub(crate) fn node_priority(&self, node: NodeId) -> usize {
        self.node_index[node.0]
    }
}

impl From<ScheduleError> for ExecuteError {
    fn from(e: ScheduleError) -> Self {
        ExecuteError::Precondition(e.to_string())
    }
}
