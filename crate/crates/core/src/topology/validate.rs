use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::Serialize;

use super::{undirected_neighbours, NodeId, Topology};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum Violation {
    EmptyGraph,
    NodeOutOfRange { src: NodeId, dst: NodeId },
    SelfLoop { node: NodeId },
    DuplicateEdge { src: NodeId, dst: NodeId },
    /// Closed walk `v0 -> v1 -> ... -> v0`.
    CycleFound { witness: Vec<NodeId> },
    /// Component label per node (labels are the smallest node id in each component).
    Disconnected { components: Vec<usize> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyGraph => write!(f, "graph has no nodes"),
            Violation::NodeOutOfRange { src, dst } => write!(f, "edge {src}->{dst} references a missing node"),
            Violation::SelfLoop { node } => write!(f, "self-loop on {node}"),
            Violation::DuplicateEdge { src, dst } => write!(f, "duplicate edge {src}->{dst}"),
            Violation::CycleFound { witness } => {
                let path: Vec<String> = witness.iter().map(ToString::to_string).collect();
                write!(f, "cycle {}", path.join("->"))
            }
            Violation::Disconnected { components } => {
                let distinct: BTreeSet<_> = components.iter().collect();
                write!(f, "graph has {} weakly connected components", distinct.len())
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks every topology invariant. Acyclicity uses in-degree peeling; when
/// peeling stalls, a witness cycle is recovered by walking predecessors among
/// the unpeeled nodes.
pub fn validate(t: &Topology) -> ValidationReport {
    let n = t.node_count();
    let mut violations = Vec::new();
    if n == 0 {
        violations.push(Violation::EmptyGraph);
        return ValidationReport { violations };
    }

    let mut seen = BTreeSet::new();
    let mut simple_edges = Vec::new();
    for &(src, dst) in t.edges() {
        if src.0 >= n || dst.0 >= n {
            violations.push(Violation::NodeOutOfRange { src, dst });
            continue;
        }
        if src == dst {
            violations.push(Violation::SelfLoop { node: src });
            continue;
        }
        if !seen.insert((src, dst)) {
            violations.push(Violation::DuplicateEdge { src, dst });
            continue;
        }
        simple_edges.push((src.0, dst.0));
    }

    if let Some(witness) = find_cycle(n, &simple_edges) {
        violations.push(Violation::CycleFound { witness });
    }

    let components = weak_components(t);
    if components.iter().any(|&c| c != 0) {
        violations.push(Violation::Disconnected { components });
    }

    ValidationReport { violations }
}

fn find_cycle(n: usize, edges: &[(usize, usize)]) -> Option<Vec<NodeId>> {
    let mut indeg = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        indeg[b] += 1;
        out[a].push(b);
        preds[b].push(a);
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut removed = vec![false; n];
    while let Some(v) = queue.pop_front() {
        removed[v] = true;
        for &w in &out[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    let start = (0..n).find(|&v| !removed[v])?;

    // Every unpeeled node keeps an unpeeled predecessor, so walking backwards
    // must revisit a node.
    let mut back = vec![start];
    let mut position = vec![usize::MAX; n];
    position[start] = 0;
    loop {
        let v = *back.last().unwrap();
        let p = *preds[v].iter().filter(|&&p| !removed[p]).min().unwrap();
        if position[p] != usize::MAX {
            let mut cycle: Vec<NodeId> = back[position[p]..].iter().map(|&x| NodeId(x)).collect();
            cycle.push(NodeId(p));
            cycle.reverse();
            return Some(cycle);
        }
        position[p] = back.len();
        back.push(p);
    }
}

pub(crate) fn weak_components(t: &Topology) -> Vec<usize> {
    let adj = undirected_neighbours(t);
    let n = t.node_count();
    let mut label = vec![usize::MAX; n];
    for root in 0..n {
        if label[root] != usize::MAX {
            continue;
        }
        label[root] = root;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if label[w] == usize::MAX {
                    label[w] = root;
                    stack.push(w);
                }
            }
        }
    }
    label
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{generate, TopologyKind};

    #[test]
    fn chain_is_clean() {
        assert!(validate(&generate(TopologyKind::Chain, 3, 0).unwrap()).is_clean());
    }

    #[test]
    fn two_cycle_has_witness() {
        let report = validate(&Topology::custom(2, &[(0, 1), (1, 0)]));
        assert_eq!(
            report.violations,
            vec![Violation::CycleFound { witness: vec![NodeId(0), NodeId(1), NodeId(0)] }]
        );
    }

    #[test]
    fn witness_is_a_real_cycle() {
        let t = Topology::custom(5, &[(0, 1), (1, 2), (2, 3), (3, 1), (3, 4)]);
        let report = validate(&t);
        let witness = report
            .violations
            .iter()
            .find_map(|v| match v {
                Violation::CycleFound { witness } => Some(witness.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(witness.first(), witness.last());
        for pair in witness.windows(2) {
            assert!(t.contains_edge(pair[0], pair[1]), "{pair:?} is not an edge");
        }
    }

    #[test]
    fn isolated_node_is_disconnected() {
        let report = validate(&Topology::custom(3, &[(0, 1)]));
        assert_eq!(report.violations, vec![Violation::Disconnected { components: vec![0, 0, 2] }]);
    }

    #[test]
    fn self_loops_and_duplicates_are_reported() {
        let report = validate(&Topology::custom(2, &[(0, 1), (0, 1), (1, 1)]));
        assert!(report.violations.contains(&Violation::SelfLoop { node: NodeId(1) }));
        assert!(report
            .violations
            .contains(&Violation::DuplicateEdge { src: NodeId(0), dst: NodeId(1) }));
        assert_eq!(report.violations.len(), 2);
    }

    #[test]
    fn out_of_range_and_empty() {
        let report = validate(&Topology::custom(2, &[(0, 5), (0, 1)]));
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(report.violations[0], Violation::NodeOutOfRange { .. }));
        assert_eq!(validate(&Topology::custom(0, &[])).violations, vec![Violation::EmptyGraph]);
    }
}
