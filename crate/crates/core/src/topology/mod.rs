//! Directed acyclic graphs that organize agents.
//!
//! A [`Topology`] is a plain value: a node count (nodes are always the
//! contiguous range `0..n`), a canonically ordered edge list and the recipe it
//! was generated from. Construction never enforces the DAG invariants; call
//! [`validate`] to get a report of every violation.

mod generate;
mod io;
mod metrics;
mod validate;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate, generate_random, random_target_edges, layer_sizes};
pub use io::{from_dot, from_json, to_dot, to_json};
pub use metrics::{metrics, TopologyMetrics};
pub use validate::{validate, ValidationReport, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type Edge = (NodeId, NodeId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Chain,
    Star,
    Tree,
    Mesh,
    Layer,
    Random,
    Custom,
}

impl TopologyKind {
    /// Every kind that [`generate`] can build.
    pub const GENERATED: [TopologyKind; 6] = [
        TopologyKind::Chain,
        TopologyKind::Star,
        TopologyKind::Tree,
        TopologyKind::Mesh,
        TopologyKind::Layer,
        TopologyKind::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Chain => "chain",
            TopologyKind::Star => "star",
            TopologyKind::Tree => "tree",
            TopologyKind::Mesh => "mesh",
            TopologyKind::Layer => "layer",
            TopologyKind::Random => "random",
            TopologyKind::Custom => "custom",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopologyKind {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chain" => Ok(TopologyKind::Chain),
            "star" => Ok(TopologyKind::Star),
            "tree" => Ok(TopologyKind::Tree),
            "mesh" => Ok(TopologyKind::Mesh),
            "layer" => Ok(TopologyKind::Layer),
            "random" => Ok(TopologyKind::Random),
            "custom" => Ok(TopologyKind::Custom),
            other => Err(TopologyError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("invalid topology size {0}: at least one node is required")]
    InvalidSize(usize),
    #[error("unknown topology kind `{0}`")]
    UnknownKind(String),
    #[error("kind `{0}` cannot be generated")]
    NotGenerable(TopologyKind),
    #[error("random target of {target} edges is outside [{min}, {max}]")]
    InvalidTarget { target: usize, min: usize, max: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid topology: {0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    kind: TopologyKind,
    node_count: usize,
    seed: Option<u64>,
    edges: Vec<Edge>,
}

impl Topology {
    /// Builds a topology from raw parts. Edges are sorted into canonical
    /// (lexicographic) order; duplicates and self-loops are kept so that
    /// [`validate`] can report them.
    pub fn new(kind: TopologyKind, node_count: usize, seed: Option<u64>, mut edges: Vec<Edge>) -> Self {
        edges.sort();
        Self { kind, node_count, seed, edges }
    }

    /// Convenience constructor for hand-written graphs.
    pub fn custom(node_count: usize, edges: &[(usize, usize)]) -> Self {
        Self::new(
            TopologyKind::Custom,
            node_count,
            None,
            edges.iter().map(|&(a, b)| (NodeId(a), NodeId(b))).collect(),
        )
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.node_count).map(NodeId)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains_edge(&self, src: NodeId, dst: NodeId) -> bool {
        self.edges.binary_search(&(src, dst)).is_ok()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count];
        for &(_, dst) in &self.edges {
            if dst.0 < self.node_count {
                deg[dst.0] += 1;
            }
        }
        deg
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count];
        for &(src, _) in &self.edges {
            if src.0 < self.node_count {
                deg[src.0] += 1;
            }
        }
        deg
    }

    /// Parents of every node, each list ascending.
    pub fn parents(&self) -> Vec<Vec<NodeId>> {
        let mut parents = vec![Vec::new(); self.node_count];
        for &(src, dst) in &self.edges {
            if dst.0 < self.node_count {
                parents[dst.0].push(src);
            }
        }
        parents
    }

    /// Children of every node, each list ascending.
    pub fn children(&self) -> Vec<Vec<NodeId>> {
        let mut children = vec![Vec::new(); self.node_count];
        for &(src, dst) in &self.edges {
            if src.0 < self.node_count {
                children[src.0].push(dst);
            }
        }
        children
    }

    pub fn sources(&self) -> Vec<NodeId> {
        let deg = self.in_degrees();
        self.nodes().filter(|v| deg[v.0] == 0).collect()
    }

    pub fn sinks(&self) -> Vec<NodeId> {
        let deg = self.out_degrees();
        self.nodes().filter(|v| deg[v.0] == 0).collect()
    }

    /// Fails with the full report unless every invariant holds.
    pub fn ensure_valid(&self) -> Result<(), TopologyError> {
        let report = validate(self);
        if report.is_clean() {
            Ok(())
        } else {
            Err(TopologyError::Invalid(report))
        }
    }
}

/// Flips every edge. The result is tagged `custom`.
pub fn reverse(t: &Topology) -> Topology {
    Topology::new(
        TopologyKind::Custom,
        t.node_count,
        t.seed,
        t.edges.iter().map(|&(a, b)| (b, a)).collect(),
    )
}

/// Ensures a single sink: when the graph has several, a new node `n` is added
/// with an edge from every existing sink.
pub fn append_final_sink(t: &Topology) -> Topology {
    let sinks = t.sinks();
    if sinks.len() == 1 {
        return t.clone();
    }
    let new_node = NodeId(t.node_count);
    let mut edges = t.edges.clone();
    edges.extend(sinks.into_iter().map(|s| (s, new_node)));
    Topology::new(t.kind, t.node_count + 1, t.seed, edges)
}

/// Undirected, deduplicated neighbour sets, ignoring self-loops and
/// out-of-range endpoints.
pub(crate) fn undirected_neighbours(t: &Topology) -> Vec<BTreeSet<usize>> {
    let n = t.node_count;
    let mut adj = vec![BTreeSet::new(); n];
    for &(a, b) in &t.edges {
        if a != b && a.0 < n && b.0 < n {
            adj[a.0].insert(b.0);
            adj[b.0].insert(a.0);
        }
    }
    adj
}
