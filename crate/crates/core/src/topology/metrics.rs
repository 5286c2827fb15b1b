use std::collections::VecDeque;

use serde::Serialize;

use super::{undirected_neighbours, Topology};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologyMetrics {
    pub node_count: usize,
    pub edge_count: usize,
    /// `edge_count / (n(n-1)/2)`; zero for a single node.
    pub density: f64,
    /// Mean undirected shortest-path length over unordered node pairs.
    /// `None` with fewer than two nodes or when some pair is unreachable.
    pub avg_path_length: Option<f64>,
    pub clustering_coefficient: f64,
    pub divergent_node_count: usize,
    pub convergent_node_count: usize,
    pub source_count: usize,
    pub sink_count: usize,
}

/// Structural measurements. Path length and clustering are taken on the
/// undirected projection.
pub fn metrics(t: &Topology) -> TopologyMetrics {
    let n = t.node_count();
    let m = t.edge_count();
    let pairs = n * n.saturating_sub(1) / 2;
    let density = if pairs == 0 { 0.0 } else { m as f64 / pairs as f64 };

    let indeg = t.in_degrees();
    let outdeg = t.out_degrees();
    let adj = undirected_neighbours(t);

    TopologyMetrics {
        node_count: n,
        edge_count: m,
        density,
        avg_path_length: average_path_length(&adj),
        clustering_coefficient: clustering(&adj),
        divergent_node_count: (0..n).filter(|&v| outdeg[v] > indeg[v]).count(),
        convergent_node_count: (0..n).filter(|&v| indeg[v] > outdeg[v]).count(),
        source_count: indeg.iter().filter(|&&d| d == 0).count(),
        sink_count: outdeg.iter().filter(|&&d| d == 0).count(),
    }
}

fn average_path_length(adj: &[std::collections::BTreeSet<usize>]) -> Option<f64> {
    let n = adj.len();
    if n < 2 {
        return None;
    }
    let mut total = 0usize;
    for src in 0..n {
        let mut dist = vec![usize::MAX; n];
        dist[src] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        for &d in &dist[src + 1..] {
            if d == usize::MAX {
                return None;
            }
            total += d;
        }
    }
    Some(total as f64 / (n * (n - 1) / 2) as f64)
}

fn clustering(adj: &[std::collections::BTreeSet<usize>]) -> f64 {
    let n = adj.len();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = adj
        .iter()
        .map(|neigh| {
            let k = neigh.len();
            if k < 2 {
                return 0.0;
            }
            let nb: Vec<usize> = neigh.iter().copied().collect();
            let mut links = 0usize;
            for (i, &a) in nb.iter().enumerate() {
                for &b in &nb[i + 1..] {
                    if adj[a].contains(&b) {
                        links += 1;
                    }
                }
            }
            links as f64 / (k * (k - 1) / 2) as f64
        })
        .sum();
    sum / n as f64
}
