mod common;

use std::collections::BTreeSet;

use common::*;
use hyperexplain::hypergraph::{neighborhood_conversion, star_expansion};
use hyperexplain::model;
use hyperexplain::{Hypergraph, SimpleGraph};
use proptest::prelude::*;

/// Boolean reachability `(H Hᵀ)^hops` row of `node`, including `node`.
fn reach_dense(h: &Hypergraph, node: usize, hops: usize) -> BTreeSet<usize> {
    let inc = h.to_dense_incidence();
    let n = h.num_nodes();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| i == j || inc[i].iter().zip(&inc[j]).any(|(a, b)| *a > 0.0 && *b > 0.0)).collect())
        .collect();
    let mut cur = vec![false; n];
    cur[node] = true;
    for _ in 0..hops {
        cur = (0..n).map(|j| (0..n).any(|i| cur[i] && adj[i][j])).collect();
    }
    (0..n).filter(|&j| cur[j]).collect()
}

fn graph_strategy() -> impl Strategy<Value = SimpleGraph> {
    (1usize..10).prop_flat_map(|n| {
        prop::collection::btree_set((0..n, 0..n), 0..20).prop_map(move |pairs| {
            let mut seen = BTreeSet::new();
            let edges: Vec<(usize, usize)> = pairs
                .into_iter()
                .filter(|(u, v)| u != v)
                .map(|(u, v)| (u.min(v), u.max(v)))
                .filter(|e| seen.insert(*e))
                .collect();
            SimpleGraph::new(n, edges).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn degrees_match_dense_sums(seed in any::<u64>(), n in 1usize..15, m in 1usize..12, p in 0.0f64..0.8) {
        let mut r = rng(seed);
        let h = random_weighted(&mut r, n, m, p);
        let d = h.compute_degrees();
        let inc = h.to_dense_incidence();
        for v in 0..n {
            let want: f64 = (0..m).map(|e| inc[v][e] * h.edge_weights()[e]).sum();
            prop_assert!((d.node_degrees[v] - want).abs() <= 1e-12);
            prop_assert_eq!(h.node_degree(v), inc[v].iter().filter(|&&x| x > 0.0).count());
        }
        for e in 0..m {
            let want: f64 = (0..n).map(|v| inc[v][e]).sum();
            prop_assert_eq!(d.edge_degrees[e], want);
            prop_assert_eq!(h.members(e).len(), want as usize);
        }
    }

    #[test]
    fn n_hop_matches_matrix_powers(seed in any::<u64>(), n in 1usize..15, m in 1usize..12, hops in 0usize..5) {
        let mut r = rng(seed);
        let h = random_hypergraph(&mut r, n, m, 0.2);
        for v in 0..n {
            prop_assert_eq!(h.n_hop_nodes(v, hops).unwrap(), reach_dense(&h, v, hops));
        }
    }

    #[test]
    fn view_is_the_induced_subhypergraph(seed in any::<u64>(), n in 1usize..15, m in 1usize..12, hops in 1usize..4) {
        let mut r = rng(seed);
        let h = random_hypergraph(&mut r, n, m, 0.2);
        let node = (seed as usize) % n;
        let view = h.extract_subhypergraph(node, hops).unwrap();
        let nodes = h.n_hop_nodes(node, hops).unwrap();
        prop_assert_eq!(view.node_map.iter().copied().collect::<BTreeSet<_>>(), nodes.clone());
        prop_assert!(view.node_map.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(view.edge_map.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(view.target_global(), node);
        let touching: BTreeSet<usize> = (0..m).filter(|&e| h.members(e).iter().any(|u| nodes.contains(u))).collect();
        prop_assert_eq!(view.edge_map.iter().copied().collect::<BTreeSet<_>>(), touching);
        let want: BTreeSet<(usize, usize)> =
            h.incidences().iter().copied().filter(|(v, e)| nodes.contains(v) && view.edge_map.contains(e)).collect();
        let got: BTreeSet<(usize, usize)> = view.sub.incidences().iter().map(|&l| view.global_incidence(l)).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn view_logits_equal_full_logits_bitwise(seed in any::<u64>(), n in 2usize..25, m in 1usize..15) {
        let mut r = rng(seed);
        let h = random_sparse_edges(&mut r, n, m, 3);
        let inst = random_instance(seed, n, 1, 0.0);
        let hops = inst.params.num_layers();
        let full = model::logits(&h, &inst.x, &inst.params, None).unwrap();
        for node in 0..n {
            let view = h.extract_subhypergraph(node, hops).unwrap();
            let local = model::logits(&view.sub, &inst.x.select_rows(&view.node_map), &inst.params, None).unwrap();
            prop_assert_eq!(local.row(view.target_local), full.row(node));
        }
    }

    #[test]
    fn neighborhood_conversion_is_closed_neighborhoods(g in graph_strategy()) {
        let h = neighborhood_conversion(&g);
        let adj = g.adjacency();
        prop_assert_eq!(h.num_edges(), g.num_nodes());
        prop_assert_eq!(h.num_incidences(), g.num_nodes() + 2 * g.edges().len());
        for (i, nbrs) in adj.iter().enumerate() {
            let mut want = nbrs.clone();
            want.push(i);
            want.sort_unstable();
            prop_assert_eq!(h.members(i), &want[..]);
        }
    }

    #[test]
    fn star_expansion_is_bipartite_incidence(seed in any::<u64>(), n in 1usize..12, m in 0usize..8) {
        let mut r = rng(seed);
        let h = random_hypergraph(&mut r, n, m, 0.3);
        let g = star_expansion(&h);
        prop_assert_eq!(g.num_nodes(), n + m);
        prop_assert_eq!(g.edges().len(), h.num_incidences());
        for &(u, v) in g.edges() {
            prop_assert!(u < n && v >= n);
            prop_assert!(h.members(v - n).contains(&u));
        }
    }

    #[test]
    fn removals_keep_indices_and_drop_only_listed(seed in any::<u64>(), n in 1usize..12, m in 1usize..8) {
        let mut r = rng(seed);
        let h = random_hypergraph(&mut r, n, m, 0.4);
        let edge = (seed as usize) % m;
        let cut = h.without_edges(&[edge]).unwrap();
        prop_assert_eq!((cut.num_nodes(), cut.num_edges()), (n, m));
        prop_assert!(cut.members(edge).is_empty());
        prop_assert_eq!(cut.num_incidences(), h.num_incidences() - h.members(edge).len());
        if let Some(&first) = h.incidences().first() {
            let cut = h.without_incidences(&[first]).unwrap();
            prop_assert_eq!(cut.num_incidences(), h.num_incidences() - 1);
            prop_assert!(!cut.incidences().contains(&first));
        }
    }
}

#[test]
fn malformed_hypergraphs_are_rejected() {
    assert!(Hypergraph::new(2, 1, vec![(2, 0)]).is_err());
    assert!(Hypergraph::new(2, 1, vec![(0, 1)]).is_err());
    assert!(Hypergraph::new(2, 1, vec![(0, 0), (0, 0)]).is_err());
    assert!(Hypergraph::with_weights(2, vec![(0, 0)], vec![0.0]).is_err());
    assert!(Hypergraph::with_weights(2, vec![(0, 0)], vec![f64::NAN]).is_err());
    assert!(SimpleGraph::new(2, [(0, 0)]).is_err());
    assert!(SimpleGraph::new(2, [(0, 1), (1, 0)]).is_err());
}
