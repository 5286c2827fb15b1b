use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{NodeId, Topology, TopologyError, TopologyKind};

#[derive(Serialize, Deserialize)]
struct TopologyJson {
    kind: TopologyKind,
    n: usize,
    seed: Option<u64>,
    edges: Vec<[usize; 2]>,
}

/// `{"kind": ..., "n": ..., "seed": ..., "edges": [[src, dst], ...]}` with
/// edges in lexicographic order.
pub fn to_json(t: &Topology) -> String {
    let doc = TopologyJson {
        kind: t.kind(),
        n: t.node_count(),
        seed: t.seed(),
        edges: t.edges().iter().map(|&(a, b)| [a.0, b.0]).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("topology serializes")
}

pub fn from_json(text: &str) -> Result<Topology, TopologyError> {
    let doc: TopologyJson = serde_json::from_str(text).map_err(|e| TopologyError::Parse(e.to_string()))?;
    Ok(Topology::new(
        doc.kind,
        doc.n,
        doc.seed,
        doc.edges.into_iter().map(|[a, b]| (NodeId(a), NodeId(b))).collect(),
    ))
}

pub fn to_dot(t: &Topology) -> String {
    let mut out = String::from("digraph topology {\n");
    let _ = write!(out, "  graph [kind=\"{}\"", t.kind());
    if let Some(seed) = t.seed() {
        let _ = write!(out, ", seed=\"{seed}\"");
    }
    out.push_str("];\n");
    for v in t.nodes() {
        let _ = writeln!(out, "  {v} [label=\"{v}\"];");
    }
    for &(a, b) in t.edges() {
        let _ = writeln!(out, "  {a} -> {b};");
    }
    out.push_str("}\n");
    out
}

/// Reads the subset of DOT that [`to_dot`] writes: numeric node statements,
/// `a -> b` edges (chains like `a -> b -> c` are accepted) and an optional
/// `graph [kind=..., seed=...]` statement. The node count is one past the
/// largest id seen.
pub fn from_dot(text: &str) -> Result<Topology, TopologyError> {
    let body_start = text
        .find('{')
        .ok_or_else(|| TopologyError::Parse("missing `{`".into()))?;
    let body_end = text
        .rfind('}')
        .ok_or_else(|| TopologyError::Parse("missing `}`".into()))?;
    if !text[..body_start].trim_start().starts_with("digraph") {
        return Err(TopologyError::Parse("expected a digraph".into()));
    }

    let mut kind = TopologyKind::Custom;
    let mut seed = None;
    let mut max_node: Option<usize> = None;
    let mut edges = Vec::new();
    let mut note = |v: usize| max_node = Some(max_node.map_or(v, |m: usize| m.max(v)));

    for raw in text[body_start + 1..body_end].split([';', '\n']) {
        let stmt = raw.trim();
        if stmt.is_empty() || stmt.starts_with("//") || stmt.starts_with('#') {
            continue;
        }
        let (head, attrs) = match stmt.find('[') {
            Some(i) => (stmt[..i].trim(), Some(stmt[i..].trim())),
            None => (stmt, None),
        };
        if head == "graph" {
            if let Some(attrs) = attrs {
                for (key, value) in parse_attrs(attrs)? {
                    match key.as_str() {
                        "kind" => kind = value.parse()?,
                        "seed" => {
                            seed = Some(value.parse().map_err(|_| TopologyError::Parse(format!("bad seed `{value}`")))?)
                        }
                        _ => {}
                    }
                }
            }
            continue;
        }
        if head == "node" || head == "edge" {
            continue;
        }
        let ids = head
            .split("->")
            .map(|s| parse_id(s.trim()))
            .collect::<Result<Vec<_>, _>>()?;
        for &id in &ids {
            note(id);
        }
        for pair in ids.windows(2) {
            edges.push((NodeId(pair[0]), NodeId(pair[1])));
        }
    }

    let n = max_node.map_or(0, |m| m + 1);
    Ok(Topology::new(kind, n, seed, edges))
}

fn parse_id(s: &str) -> Result<usize, TopologyError> {
    s.trim_matches('"')
        .parse()
        .map_err(|_| TopologyError::Parse(format!("node ids must be integers, got `{s}`")))
}

fn parse_attrs(attrs: &str) -> Result<Vec<(String, String)>, TopologyError> {
    let inner = attrs
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| TopologyError::Parse(format!("malformed attributes `{attrs}`")))?;
    Ok(inner
        .split(',')
        .filter_map(|kv| {
            let (k, v) = kv.split_once('=')?;
            Some((k.trim().to_string(), v.trim().trim_matches('"').to_string()))
        })
        .collect())
}
