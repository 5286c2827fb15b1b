use dagnet::topology::{
    append_final_sink, from_dot, from_json, generate, layer_sizes, metrics, random_target_edges, reverse, to_dot, to_json, validate,
    NodeId, Topology, TopologyKind, Violation,
};
use proptest::prelude::*;

fn pairs(t: &Topology) -> Vec<(usize, usize)> {
    t.edges().iter().map(|(a, b)| (a.0, b.0)).collect()
}

#[test]
fn fixed_shapes() {
    let chain = generate(TopologyKind::Chain, 4, 0).unwrap();
    assert_eq!(pairs(&chain), [(0, 1), (1, 2), (2, 3)]);
    assert_eq!(metrics(&chain).density, 0.5);

    let mesh = metrics(&generate(TopologyKind::Mesh, 4, 0).unwrap());
    assert_eq!((mesh.edge_count, mesh.density), (6, 1.0));

    let star = generate(TopologyKind::Star, 5, 0).unwrap();
    assert_eq!(pairs(&star), [(0, 1), (0, 2), (0, 3), (0, 4)]);
    let m = metrics(&star);
    assert_eq!((m.divergent_node_count, m.convergent_node_count), (1, 4));

    let tree = generate(TopologyKind::Tree, 7, 0).unwrap();
    assert_eq!(pairs(&tree), [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)]);

    assert_eq!(layer_sizes(10), [3, 3, 2, 2]);
    let layer = generate(TopologyKind::Layer, 5, 0).unwrap();
    assert_eq!(pairs(&layer), [(0, 2), (0, 3), (1, 2), (1, 3), (2, 4), (3, 4)]);
}

#[test]
fn random_hits_the_target_and_stays_valid() {
    let t = generate(TopologyKind::Random, 8, 42).unwrap();
    assert_eq!(t.edge_count(), 18);
    assert!(validate(&t).is_clean());
    assert_eq!(t, generate(TopologyKind::Random, 8, 42).unwrap());
    assert_eq!(generate(TopologyKind::Random, 1, 3).unwrap().edge_count(), 0);
    assert!(generate(TopologyKind::Chain, 0, 0).is_err());
}

#[test]
fn validation_reports() {
    assert!(validate(&generate(TopologyKind::Chain, 3, 0).unwrap()).is_clean());
    let cyc = validate(&Topology::custom(2, &[(0, 1), (1, 0)]));
    assert!(cyc.violations.contains(&Violation::CycleFound { witness: vec![NodeId(0), NodeId(1), NodeId(0)] }));
    let split = validate(&Topology::custom(3, &[(0, 1)]));
    assert!(split.violations.contains(&Violation::Disconnected { components: vec![0, 0, 2] }));
}

#[test]
fn reversal_and_final_sink() {
    let star = generate(TopologyKind::Star, 3, 0).unwrap();
    let r = reverse(&star);
    assert_eq!(pairs(&r), [(1, 0), (2, 0)]);
    assert_eq!(r.kind(), TopologyKind::Custom);
    let (a, b) = (metrics(&star), metrics(&r));
    assert_eq!((b.divergent_node_count, b.convergent_node_count), (2, 1));
    assert_eq!((a.source_count, a.sink_count), (b.sink_count, b.source_count));

    let chain = generate(TopologyKind::Chain, 3, 0).unwrap();
    assert_eq!(append_final_sink(&chain), chain);
    let joined = append_final_sink(&generate(TopologyKind::Star, 4, 0).unwrap());
    assert_eq!(joined.node_count(), 5);
    assert_eq!(joined.sinks(), [NodeId(4)]);
    assert!([(1, 4), (2, 4), (3, 4)].iter().all(|&(s, d)| joined.contains_edge(NodeId(s), NodeId(d))));
}

#[test]
fn path_length_and_clustering() {
    let chain = metrics(&generate(TopologyKind::Chain, 4, 0).unwrap());
    assert!((chain.avg_path_length.unwrap() - 10.0 / 6.0).abs() < 1e-12);
    assert_eq!(chain.clustering_coefficient, 0.0);
    let mesh = metrics(&generate(TopologyKind::Mesh, 6, 0).unwrap());
    assert_eq!((mesh.avg_path_length, mesh.clustering_coefficient), (Some(1.0), 1.0));
    assert_eq!(metrics(&generate(TopologyKind::Star, 5, 0).unwrap()).clustering_coefficient, 0.0);
}

// With the midpoint rule for random edge counts and sqrt(n) layers, random
// sits above layer for every n >= 4.
#[test]
fn density_ordering() {
    for n in 4..=64 {
        let d = |k| metrics(&generate(k, n, n as u64).unwrap()).density;
        let (mesh, random, layer, chain) = (d(TopologyKind::Mesh), d(TopologyKind::Random), d(TopologyKind::Layer), d(TopologyKind::Chain));
        assert!(mesh >= random && random >= layer && layer >= chain, "n={n}: {mesh} {random} {layer} {chain}");
        assert_eq!(chain, d(TopologyKind::Star));
        assert_eq!(chain, d(TopologyKind::Tree));
    }
}

#[test]
fn serialized_forms_round_trip() {
    let t = generate(TopologyKind::Random, 12, 7).unwrap();
    let json = to_json(&t);
    assert_eq!(from_json(&json).unwrap(), t);
    assert_eq!(pairs(&from_dot(&to_dot(&t)).unwrap()), pairs(&t));
}

fn kind() -> impl Strategy<Value = TopologyKind> {
    prop::sample::select(TopologyKind::GENERATED.to_vec())
}

proptest! {
    #[test]
    fn generated_graphs_are_valid(k in kind(), n in 1usize..64, seed in any::<u64>()) {
        let t = generate(k, n, seed).unwrap();
        prop_assert!(validate(&t).is_clean());
        let m = metrics(&t);
        prop_assert!(m.source_count >= 1 && m.sink_count >= 1);
        let expected = match k {
            TopologyKind::Chain | TopologyKind::Star | TopologyKind::Tree => n - 1,
            TopologyKind::Mesh => n * (n - 1) / 2,
            TopologyKind::Layer => layer_sizes(n).windows(2).map(|w| w[0] * w[1]).sum(),
            _ => random_target_edges(n),
        };
        prop_assert_eq!(t.edge_count(), expected);
        if n > 1 {
            prop_assert_eq!(m.density, t.edge_count() as f64 / (n * (n - 1) / 2) as f64);
        }
        prop_assert_eq!(&t, &generate(k, n, seed).unwrap());
    }

    #[test]
    fn reverse_is_an_involution(k in kind(), n in 1usize..40, seed in any::<u64>()) {
        let t = generate(k, n, seed).unwrap();
        let r = reverse(&t);
        prop_assert!(validate(&r).is_clean());
        prop_assert_eq!(pairs(&reverse(&r)), pairs(&t));
    }

    #[test]
    fn final_sink_is_idempotent(k in kind(), n in 1usize..40, seed in any::<u64>()) {
        let once = append_final_sink(&generate(k, n, seed).unwrap());
        prop_assert_eq!(once.sinks().len(), 1);
        prop_assert!(validate(&once).is_clean());
        prop_assert_eq!(append_final_sink(&once), once);
    }
}
