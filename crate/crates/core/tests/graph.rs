use std::collections::BTreeMap;

use nalgebra::DMatrix;
use proptest::prelude::*;
use svftree::graph::{build_observation_graph, NodeId, ObservationEdge, StackGraph, TreeEdgeKind};

fn regular(n: i64, c: usize) -> Vec<NodeId> {
    (1..=n)
        .flat_map(|lv| (0..=c).map(move |ct| NodeId::new(ct, lv)))
        .collect()
}

/// Regular stack with some histology sections removed.
fn stack() -> impl Strategy<Value = (Vec<NodeId>, u32)> {
    (
        1i64..8,
        0usize..3,
        0u32..4,
        prop::collection::vec(any::<bool>(), 24),
    )
        .prop_map(|(n, c, p, drop)| {
            let nodes = regular(n, c)
                .into_iter()
                .enumerate()
                .filter(|(i, id)| id.is_reference() || !drop[i % drop.len()] || *i % 3 != 0)
                .map(|(_, id)| id)
                .collect();
            (nodes, p)
        })
}

fn dense_rank(g: &StackGraph) -> usize {
    let (k, l) = (g.observations().len(), g.tree().len());
    if k == 0 || l == 0 {
        return 0;
    }
    let d = g.path().to_dense();
    DMatrix::from_fn(k, l, |i, j| d[i][j]).rank(1e-9)
}

#[test]
fn regular_counts() {
    for n in 1..6i64 {
        for c in 0..3usize {
            for p in 0..4u32 {
                let g = StackGraph::new(&regular(n, c), p).unwrap();
                let nu = n as usize;
                assert_eq!(g.tree().len(), nu * (c + 1) - 1);
                let inter = nu * c * (c + 1) / 2;
                let intra: usize = (1..=p as usize).map(|d| (c + 1) * nu.saturating_sub(d)).sum();
                assert_eq!(g.observations().len(), inter + intra, "n={n} c={c} p={p}");
                let slabs = g.slabs().unwrap().len();
                assert_eq!(slabs, if p == 0 { nu } else { 1 });
            }
        }
    }
}

proptest! {
    #[test]
    fn rows_telescope_to_endpoints((nodes, p) in stack()) {
        let g = StackGraph::new(&nodes, p).unwrap();
        for (k, o) in g.observations().iter().enumerate() {
            let mut flow: BTreeMap<NodeId, i32> = BTreeMap::new();
            for &(l, s) in g.path().row(k) {
                prop_assert!(s == 1 || s == -1);
                let e = g.tree()[l];
                *flow.entry(e.to).or_default() += i32::from(s);
                *flow.entry(e.from).or_default() -= i32::from(s);
            }
            flow.retain(|_, v| *v != 0);
            let want: BTreeMap<NodeId, i32> = [(o.to, 1), (o.from, -1)].into_iter().collect();
            prop_assert_eq!(flow, want);
        }
    }

    #[test]
    fn tree_spans_present_nodes((nodes, p) in stack()) {
        let g = StackGraph::new(&nodes, p).unwrap();
        prop_assert_eq!(g.tree().len(), nodes.len() - 1);
        for e in g.tree() {
            match e.kind {
                TreeEdgeKind::Chain => {
                    prop_assert!(e.from.is_reference() && e.to.is_reference());
                    prop_assert_eq!(e.to.level, e.from.level + 1);
                }
                TreeEdgeKind::Spoke => {
                    prop_assert!(e.from.is_reference() && !e.to.is_reference());
                    prop_assert_eq!(e.from.level, e.to.level);
                }
            }
        }
    }

    #[test]
    fn observation_metadata((nodes, p) in stack()) {
        for o in build_observation_graph(&nodes, p) {
            prop_assert!(nodes.contains(&o.from) && nodes.contains(&o.to));
            let nonzero = (0..=2).filter(|&c| o.separation(c) != 0.0).count();
            if o.inter() {
                prop_assert_eq!(nonzero, 0);
                prop_assert_eq!(o.from.level, o.to.level);
            } else {
                prop_assert_eq!(nonzero, 1);
                prop_assert!(o.separation(o.from.contrast) <= p as f64);
            }
        }
    }

    #[test]
    fn chain_rows_have_span_many_ones(n in 2i64..10, p in 1u32..5) {
        let g = StackGraph::new(&regular(n, 0), p).unwrap();
        for (k, o) in g.observations().iter().enumerate() {
            let d = (o.to.level - o.from.level) as usize;
            let row = g.path().row(k);
            prop_assert_eq!(row.len(), d);
            prop_assert!(row.iter().all(|&(_, s)| s == 1));
        }
    }

    #[test]
    fn connected_regular_stacks_have_full_column_rank(n in 1i64..8, c in 0usize..3, p in 1u32..4) {
        let g = StackGraph::new(&regular(n, c), p).unwrap();
        prop_assume!(g.tree().len() <= 30);
        prop_assert_eq!(dense_rank(&g), g.tree().len());
    }

    #[test]
    fn reversal_negates_rows((nodes, p) in stack()) {
        let g = StackGraph::new(&nodes, p).unwrap();
        let rev: Vec<ObservationEdge> = g.observations().iter().map(|o| o.reversed()).collect();
        let r = StackGraph::with_observations(&nodes, rev).unwrap();
        for k in 0..g.observations().len() {
            let neg: Vec<(usize, i8)> = g.path().row(k).iter().map(|&(l, s)| (l, -s)).collect();
            prop_assert_eq!(r.path().row(k), neg.as_slice());
        }
    }

    #[test]
    fn slabs_partition_nodes_and_rows((nodes, p) in stack()) {
        let g = StackGraph::new(&nodes, p).unwrap();
        let slabs = g.slabs().unwrap();
        let mut seen_nodes: Vec<NodeId> = slabs.iter().flat_map(|s| s.nodes.clone()).collect();
        seen_nodes.sort();
        let mut all = nodes.clone();
        all.sort();
        prop_assert_eq!(seen_nodes, all);
        let mut rows: Vec<usize> = slabs.iter().flat_map(|s| s.observations.clone()).collect();
        rows.sort();
        prop_assert_eq!(rows, (0..g.observations().len()).collect::<Vec<_>>());
    }
}
