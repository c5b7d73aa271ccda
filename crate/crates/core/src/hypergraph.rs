//! Hypergraph storage, degrees, neighborhoods, and graph conversions.
//!
//! A [`Hypergraph`] stores its incidence matrix in coordinate form,
//! sorted by `(node, edge)`, together with a per-hyperedge weight.
//! Hyperedges may be empty and may share identical member sets.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::diffmath::Pattern;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    num_nodes: usize,
    num_edges: usize,
    pattern: Arc<Pattern>,
    edge_weights: Vec<f64>,
    // CSR offsets into `incidences` by node (the list is node-sorted).
    node_offsets: Vec<usize>,
    // Members of each hyperedge, ascending.
    edge_members: Vec<Vec<usize>>,
}

/// Node and hyperedge degrees (diagonals of `D` and `B`).
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVectors {
    pub node_degrees: Vec<f64>,
    pub edge_degrees: Vec<f64>,
}

/// Undirected simple graph with sorted `(u, v)` edges, `u < v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGraph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl SimpleGraph {
    /// Normalises each pair to `u < v`, sorts, and rejects self-loops,
    /// duplicates and out-of-range endpoints.
    pub fn new(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::InvalidHypergraph(format!("self-loop on node {u}")));
            }
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InvalidHypergraph(format!(
                    "edge ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            out.push((u.min(v), u.max(v)));
        }
        out.sort_unstable();
        if let Some(w) = out.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidHypergraph(format!("duplicate edge {:?}", w[0])));
        }
        Ok(Self { num_nodes, edges: out })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted adjacency lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }
}

impl Hypergraph {
    /// Builds a hypergraph with unit weights from `(node, edge)` incidences.
    pub fn new(num_nodes: usize, num_edges: usize, incidences: Vec<(usize, usize)>) -> Result<Self> {
        Self::with_weights(num_nodes, incidences, vec![1.0; num_edges])
    }

    pub fn with_weights(num_nodes: usize, incidences: Vec<(usize, usize)>, edge_weights: Vec<f64>) -> Result<Self> {
        let num_edges = edge_weights.len();
        if let Some(w) = edge_weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidHypergraph(format!("edge weight {w} is not positive")));
        }
        let pattern = Pattern::new(num_nodes, num_edges, incidences)
            .map_err(|e| Error::InvalidHypergraph(e.to_string()))?;

        let mut node_offsets = vec![0usize; num_nodes + 1];
        let mut edge_members = vec![Vec::new(); num_edges];
        for &(n, e) in pattern.coords() {
            node_offsets[n + 1] += 1;
            edge_members[e].push(n);
        }
        for i in 0..num_nodes {
            node_offsets[i + 1] += node_offsets[i];
        }
        Ok(Self {
            num_nodes,
            num_edges,
            pattern: Arc::new(pattern),
            edge_weights,
            node_offsets,
            edge_members,
        })
    }

    /// Builds from hyperedge member lists; hyperedge `k` is `edges[k]`.
    pub fn from_hyperedges(num_nodes: usize, edges: &[Vec<usize>]) -> Result<Self> {
        let incidences = edges
            .iter()
            .enumerate()
            .flat_map(|(e, members)| members.iter().map(move |&n| (n, e)))
            .collect();
        Self::new(num_nodes, edges.len(), incidences)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn num_incidences(&self) -> usize {
        self.pattern.nnz()
    }

    /// Incidences sorted by `(node, edge)`.
    pub fn incidences(&self) -> &[(usize, usize)] {
        self.pattern.coords()
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn edge_weights(&self) -> &[f64] {
        &self.edge_weights
    }

    /// Position range of `node`'s incidences within [`Self::incidences`].
    pub fn node_incidence_range(&self, node: usize) -> std::ops::Range<usize> {
        self.node_offsets[node]..self.node_offsets[node + 1]
    }

    /// Hyperedges containing `node`, ascending.
    pub fn edges_of(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.incidences()[self.node_incidence_range(node)]
            .iter()
            .map(|&(_, e)| e)
    }

    pub fn members(&self, edge: usize) -> &[usize] {
        &self.edge_members[edge]
    }

    pub fn node_degree(&self, node: usize) -> usize {
        self.node_incidence_range(node).len()
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.num_nodes {
            return Err(Error::NodeOutOfRange {
                node,
                num_nodes: self.num_nodes,
            });
        }
        Ok(())
    }

    /// Weighted node degrees and unweighted hyperedge cardinalities.
    pub fn compute_degrees(&self) -> DegreeVectors {
        let mut node_degrees = vec![0.0; self.num_nodes];
        let mut edge_degrees = vec![0.0; self.num_edges];
        for &(n, e) in self.incidences() {
            node_degrees[n] += self.edge_weights[e];
            edge_degrees[e] += 1.0;
        }
        DegreeVectors {
            node_degrees,
            edge_degrees,
        }
    }

    /// Nodes reachable from `node` in at most `hops` node→hyperedge→node steps.
    pub fn n_hop_nodes(&self, node: usize, hops: usize) -> Result<BTreeSet<usize>> {
        self.check_node(node)?;
        let mut seen = vec![false; self.num_nodes];
        let mut edge_seen = vec![false; self.num_edges];
        seen[node] = true;
        let mut frontier = vec![node];
        for _ in 0..hops {
            let mut next = Vec::new();
            for &u in &frontier {
                for e in self.edges_of(u) {
                    if std::mem::replace(&mut edge_seen[e], true) {
                        continue;
                    }
                    for &v in self.members(e) {
                        if !std::mem::replace(&mut seen[v], true) {
                            next.push(v);
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        Ok(seen
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| s.then_some(i))
            .collect())
    }

    /// Hyperedges with at least one member in `nodes`.
    pub fn hyperedges_touching(&self, nodes: &BTreeSet<usize>) -> Result<BTreeSet<usize>> {
        let mut out = BTreeSet::new();
        for &n in nodes {
            self.check_node(n)?;
            out.extend(self.edges_of(n));
        }
        Ok(out)
    }

    /// Induced sub-hypergraph on the `hops`-neighborhood of `node`.
    pub fn extract_subhypergraph(&self, node: usize, hops: usize) -> Result<SubHypergraphView> {
        let nodes = self.n_hop_nodes(node, hops)?;
        let edges = self.hyperedges_touching(&nodes)?;
        self.induced_view(node, nodes.into_iter().collect(), edges.into_iter().collect())
    }

    /// The whole hypergraph as a view centred on `node`.
    pub fn full_view(&self, node: usize) -> Result<SubHypergraphView> {
        self.check_node(node)?;
        Ok(SubHypergraphView {
            sub: self.clone(),
            node_map: (0..self.num_nodes).collect(),
            edge_map: (0..self.num_edges).collect(),
            target_local: node,
        })
    }

    fn induced_view(&self, target: usize, node_map: Vec<usize>, edge_map: Vec<usize>) -> Result<SubHypergraphView> {
        let mut node_local = vec![usize::MAX; self.num_nodes];
        for (l, &g) in node_map.iter().enumerate() {
            node_local[g] = l;
        }
        let mut edge_local = vec![usize::MAX; self.num_edges];
        for (l, &g) in edge_map.iter().enumerate() {
            edge_local[g] = l;
        }
        let mut incidences = Vec::new();
        for &g in &node_map {
            for e in self.edges_of(g) {
                if edge_local[e] != usize::MAX {
                    incidences.push((node_local[g], edge_local[e]));
                }
            }
        }
        let weights = edge_map.iter().map(|&e| self.edge_weights[e]).collect();
        let sub = Hypergraph::with_weights(node_map.len(), incidences, weights)?;
        Ok(SubHypergraphView {
            sub,
            target_local: node_local[target],
            node_map,
            edge_map,
        })
    }

    /// Copy with the listed incidences removed. Unknown pairs are ignored.
    pub fn without_incidences(&self, removed: &[(usize, usize)]) -> Result<Self> {
        let removed: BTreeSet<_> = removed.iter().copied().collect();
        let kept = self
            .incidences()
            .iter()
            .copied()
            .filter(|p| !removed.contains(p))
            .collect();
        Self::with_weights(self.num_nodes, kept, self.edge_weights.clone())
    }

    /// Copy with every incidence of the listed hyperedges removed. Hyperedge
    /// indices stay stable; removed hyperedges become empty.
    pub fn without_edges(&self, removed: &[usize]) -> Result<Self> {
        let removed: BTreeSet<_> = removed.iter().copied().collect();
        let kept = self
            .incidences()
            .iter()
            .copied()
            .filter(|(_, e)| !removed.contains(e))
            .collect();
        Self::with_weights(self.num_nodes, kept, self.edge_weights.clone())
    }

    /// Copy with `extra` isolated nodes appended.
    pub fn with_isolated_nodes(&self, extra: usize) -> Result<Self> {
        Self::with_weights(
            self.num_nodes + extra,
            self.incidences().to_vec(),
            self.edge_weights.clone(),
        )
    }

    /// Dense incidence matrix, row-major N×M (tests and small instances only).
    pub fn to_dense_incidence(&self) -> Vec<Vec<f64>> {
        let mut h = vec![vec![0.0; self.num_edges]; self.num_nodes];
        for &(n, e) in self.incidences() {
            h[n][e] = 1.0;
        }
        h
    }
}

/// Induced sub-hypergraph around a target node, with maps back to the
/// global indices. Both maps are ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SubHypergraphView {
    pub sub: Hypergraph,
    pub node_map: Vec<usize>,
    pub edge_map: Vec<usize>,
    pub target_local: usize,
}

impl SubHypergraphView {
    pub fn target_global(&self) -> usize {
        self.node_map[self.target_local]
    }

    pub fn global_incidence(&self, local: (usize, usize)) -> (usize, usize) {
        (self.node_map[local.0], self.edge_map[local.1])
    }
}

/// One hyperedge per node holding the node and its neighbors.
pub fn neighborhood_conversion(g: &SimpleGraph) -> Hypergraph {
    let adj = g.adjacency();
    let mut incidences = Vec::with_capacity(g.num_nodes() + 2 * g.edges().len());
    for (i, nbrs) in adj.iter().enumerate() {
        incidences.push((i, i));
        incidences.extend(nbrs.iter().map(|&j| (j, i)));
    }
    Hypergraph::new(g.num_nodes(), g.num_nodes(), incidences)
        .expect("closed neighborhoods of a valid graph form a valid hypergraph")
}

/// Bipartite graph with node `N + e` standing in for hyperedge `e`.
pub fn star_expansion(h: &Hypergraph) -> SimpleGraph {
    let n = h.num_nodes();
    let edges = h.incidences().iter().map(|&(v, e)| (v, n + e));
    SimpleGraph::new(n + h.num_edges(), edges).expect("incidences are unique and in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Hypergraph {
        Hypergraph::from_hyperedges(3, &[vec![0, 1], vec![1, 2]]).unwrap()
    }

    #[test]
    fn degrees_examples() {
        let h = Hypergraph::from_hyperedges(3, &[vec![0, 1], vec![0, 2]]).unwrap();
        let d = h.compute_degrees();
        assert_eq!(d.node_degrees, vec![2.0, 1.0, 1.0]);
        assert_eq!(d.edge_degrees, vec![2.0, 2.0]);

        let empty = Hypergraph::new(3, 2, vec![]).unwrap();
        let d = empty.compute_degrees();
        assert_eq!(d.node_degrees, vec![0.0; 3]);
        assert_eq!(d.edge_degrees, vec![0.0; 2]);

        let w = Hypergraph::with_weights(2, vec![(0, 0), (1, 0)], vec![2.0]).unwrap();
        let d = w.compute_degrees();
        assert_eq!(d.node_degrees, vec![2.0, 2.0]);
        assert_eq!(d.edge_degrees, vec![2.0]);
    }

    #[test]
    fn n_hop_examples() {
        let h = chain();
        assert_eq!(h.n_hop_nodes(0, 1).unwrap(), BTreeSet::from([0, 1]));
        assert_eq!(h.n_hop_nodes(0, 2).unwrap(), BTreeSet::from([0, 1, 2]));
        assert_eq!(h.n_hop_nodes(0, 0).unwrap(), BTreeSet::from([0]));
        assert!(matches!(h.n_hop_nodes(3, 1), Err(Error::NodeOutOfRange { .. })));
    }

    #[test]
    fn touching_examples() {
        let h = Hypergraph::from_hyperedges(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(h.hyperedges_touching(&BTreeSet::from([0])).unwrap(), BTreeSet::from([0]));
        assert!(h.hyperedges_touching(&BTreeSet::new()).unwrap().is_empty());
        assert_eq!(h.hyperedges_touching(&BTreeSet::from([1, 2])).unwrap(), BTreeSet::from([0, 1]));
    }

    #[test]
    fn subhypergraph_examples() {
        let h = Hypergraph::from_hyperedges(2, &[vec![0, 1]]).unwrap();
        let v = h.extract_subhypergraph(0, 3).unwrap();
        assert_eq!((v.sub.num_nodes(), v.sub.num_edges(), v.target_local), (2, 1, 0));

        let h = Hypergraph::from_hyperedges(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let v = h.extract_subhypergraph(0, 3).unwrap();
        assert_eq!(v.node_map, vec![0, 1]);
        assert_eq!(v.edge_map, vec![0]);

        let v = h.extract_subhypergraph(3, 1).unwrap();
        assert_eq!(v.target_local, 1);
        assert_eq!(v.target_global(), 3);
        assert_eq!(v.global_incidence((0, 0)), (2, 1));
    }

    #[test]
    fn neighborhood_conversion_examples() {
        let path = SimpleGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        let h = neighborhood_conversion(&path);
        assert_eq!(h.members(0), &[0, 1]);
        assert_eq!(h.members(1), &[0, 1, 2]);
        assert_eq!(h.members(2), &[1, 2]);

        let iso = SimpleGraph::new(2, []).unwrap();
        let h = neighborhood_conversion(&iso);
        assert_eq!((h.members(0), h.members(1)), (&[0][..], &[1][..]));

        let k3 = SimpleGraph::new(3, [(0, 1), (0, 2), (1, 2)]).unwrap();
        let h = neighborhood_conversion(&k3);
        for e in 0..3 {
            assert_eq!(h.members(e), &[0, 1, 2]);
        }
    }

    #[test]
    fn star_expansion_examples() {
        let h = Hypergraph::from_hyperedges(2, &[vec![0, 1]]).unwrap();
        let g = star_expansion(&h);
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.edges(), &[(0, 2), (1, 2)]);

        let empty = Hypergraph::new(2, 0, vec![]).unwrap();
        let g = star_expansion(&empty);
        assert_eq!(g.num_nodes(), 2);
        assert!(g.edges().is_empty());

        let path = SimpleGraph::new(5, [(0, 1), (1, 2), (3, 4)]).unwrap();
        let g = star_expansion(&neighborhood_conversion(&path));
        assert_eq!(g.num_nodes(), 10);
    }

    #[test]
    fn simple_graph_validation() {
        assert!(SimpleGraph::new(2, [(0, 0)]).is_err());
        assert!(SimpleGraph::new(2, [(0, 1), (1, 0)]).is_err());
        assert!(SimpleGraph::new(2, [(0, 2)]).is_err());
    }

    #[test]
    fn hypergraph_validation() {
        assert!(Hypergraph::new(2, 1, vec![(0, 0), (0, 0)]).is_err());
        assert!(Hypergraph::new(2, 1, vec![(2, 0)]).is_err());
        assert!(Hypergraph::with_weights(2, vec![], vec![0.0]).is_err());
    }

    #[test]
    fn removal_keeps_indices() {
        let h = chain();
        let r = h.without_edges(&[0]).unwrap();
        assert_eq!(r.num_edges(), 2);
        assert!(r.members(0).is_empty());
        let r = h.without_incidences(&[(1, 1)]).unwrap();
        assert_eq!(r.members(1), &[2]);
    }
}
