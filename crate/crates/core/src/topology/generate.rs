use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NodeId, Topology, TopologyError, TopologyKind};

/// Builds a topology of `n` nodes with the exact shape of `kind`.
///
/// `seed` only influences `random`; it is recorded on the result for that kind
/// alone. Random graphs draw from ChaCha8 (`rand_chacha`) seeded with
/// `seed_from_u64`, so a seed reproduces the same graph on every platform.
pub fn generate(kind: TopologyKind, n: usize, seed: u64) -> Result<Topology, TopologyError> {
    if n == 0 {
        return Err(TopologyError::InvalidSize(n));
    }
    let edges: Vec<(usize, usize)> = match kind {
        TopologyKind::Chain => (1..n).map(|k| (k - 1, k)).collect(),
        TopologyKind::Star => (1..n).map(|k| (0, k)).collect(),
        TopologyKind::Tree => (1..n).map(|k| ((k - 1) / 2, k)).collect(),
        TopologyKind::Mesh => mesh_edges(n),
        TopologyKind::Layer => layer_edges(n),
        TopologyKind::Random => return generate_random(n, seed, None),
        TopologyKind::Custom => return Err(TopologyError::NotGenerable(kind)),
    };
    Ok(Topology::new(
        kind,
        n,
        None,
        edges.into_iter().map(|(a, b)| (NodeId(a), NodeId(b))).collect(),
    ))
}

/// Midpoint between tree and mesh edge counts: `ceil((n(n-1)/2 + (n-1)) / 2)`.
pub fn random_target_edges(n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let mesh = n * (n - 1) / 2;
    (mesh + (n - 1)).div_ceil(2)
}

/// Thins a mesh down to `target_edges` (default: [`random_target_edges`]) by
/// removing uniformly chosen edges whose removal keeps the graph weakly
/// connected.
pub fn generate_random(
    n: usize,
    seed: u64,
    target_edges: Option<usize>,
) -> Result<Topology, TopologyError> {
    if n == 0 {
        return Err(TopologyError::InvalidSize(n));
    }
    let max = n * (n - 1) / 2;
    let min = n - 1;
    let target = target_edges.unwrap_or_else(|| random_target_edges(n));
    if target < min || target > max {
        return Err(TopologyError::InvalidTarget { target, min, max });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = mesh_edges(n);
    while edges.len() > target {
        let bridges = find_bridges(n, &edges);
        let removable: Vec<usize> = (0..edges.len()).filter(|i| !bridges[*i]).collect();
        // Any connected graph with more than n-1 edges has a cycle, hence a non-bridge.
        debug_assert!(!removable.is_empty());
        let pick = removable[rng.random_range(0..removable.len())];
        edges.remove(pick);
    }

    Ok(Topology::new(
        TopologyKind::Random,
        n,
        Some(seed),
        edges.into_iter().map(|(a, b)| (NodeId(a), NodeId(b))).collect(),
    ))
}

/// `ceil(sqrt(n))` layers whose sizes differ by at most one, larger first.
pub fn layer_sizes(n: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let mut layers = 1;
    while layers * layers < n {
        layers += 1;
    }
    let base = n / layers;
    let extra = n % layers;
    (0..layers).map(|l| base + usize::from(l < extra)).collect()
}

fn mesh_edges(n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push((i, j));
        }
    }
    edges
}

fn layer_edges(n: usize) -> Vec<(usize, usize)> {
    let sizes = layer_sizes(n);
    let mut starts = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &size in &sizes {
        starts.push(offset);
        offset += size;
    }
    let mut edges = Vec::new();
    for l in 0..sizes.len().saturating_sub(1) {
        for a in starts[l]..starts[l] + sizes[l] {
            for b in starts[l + 1]..starts[l + 1] + sizes[l + 1] {
                edges.push((a, b));
            }
        }
    }
    edges
}

/// Marks the bridges of the undirected projection (Tarjan low-link).
fn find_bridges(n: usize, edges: &[(usize, usize)]) -> Vec<bool> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (idx, &(a, b)) in edges.iter().enumerate() {
        adj[a].push((b, idx));
        adj[b].push((a, idx));
    }
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut is_bridge = vec![false; edges.len()];
    let mut timer = 0;

    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // (node, edge index used to enter it, next adjacency position)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(frame) = stack.last_mut() {
            let (v, parent_edge, pos) = *frame;
            if pos < adj[v].len() {
                frame.2 += 1;
                let (w, idx) = adj[v][pos];
                if idx == parent_edge {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, idx, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(u, _, _)) = stack.last() {
                    low[u] = low[u].min(low[v]);
                    if low[v] > disc[u] {
                        is_bridge[parent_edge] = true;
                    }
                }
            }
        }
    }
    is_bridge
}
