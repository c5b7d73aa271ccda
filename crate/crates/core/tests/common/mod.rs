//! Shared helpers for integration tests: random instances and a dense
//! reference implementation of the classifier written from the formulas.
#![allow(dead_code)]

use hyperexplain::diffmath::Matrix;
use hyperexplain::model::{Activation, ModelParams, NodeFeatures};
use hyperexplain::record::{Denominators, Method, ResultRecord};
use hyperexplain::{Hypergraph, MaskVariant, Removal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Each (node, hyperedge) pair present independently with probability `p`.
pub fn random_hypergraph(rng: &mut ChaCha8Rng, n: usize, m: usize, p: f64) -> Hypergraph {
    let mut inc = Vec::new();
    for v in 0..n {
        for e in 0..m {
            if rng.gen_bool(p) {
                inc.push((v, e));
            }
        }
    }
    Hypergraph::new(n, m, inc).unwrap()
}

/// Like [`random_hypergraph`] with edge weights drawn from `[0.2, 2)`.
pub fn random_weighted(rng: &mut ChaCha8Rng, n: usize, m: usize, p: f64) -> Hypergraph {
    let h = random_hypergraph(rng, n, m, p);
    let w = (0..m).map(|_| rng.gen_range(0.2..2.0)).collect();
    Hypergraph::with_weights(n, h.incidences().to_vec(), w).unwrap()
}

/// `m` hyperedges of 2 to `max_size` distinct random members.
pub fn random_sparse_edges(rng: &mut ChaCha8Rng, n: usize, m: usize, max_size: usize) -> Hypergraph {
    let edges: Vec<Vec<usize>> = (0..m)
        .map(|_| {
            let k = rng.gen_range(2.min(n)..=max_size.min(n));
            let mut e: Vec<usize> = rand::seq::index::sample(rng, n, k).into_vec();
            e.sort_unstable();
            e
        })
        .collect();
    Hypergraph::from_hyperedges(n, &edges).unwrap()
}

pub fn random_features(rng: &mut ChaCha8Rng, n: usize, f: usize) -> NodeFeatures {
    NodeFeatures(Matrix::from_fn(n, f, |_, _| rng.gen_range(-1.0..1.0)))
}

/// Glorot init scaled up so untrained logits are far from uniform.
pub fn random_params(dims: &[usize], seed: u64) -> ModelParams {
    let mut p = ModelParams::init(dims.to_vec(), Activation::LeakyRelu { negative_slope: 0.01 }, 0.0, seed).unwrap();
    for w in &mut p.weights {
        *w = w.map(|v| v * WEIGHT_GAIN);
    }
    p
}

pub const WEIGHT_GAIN: f64 = 3.0;

pub struct Instance {
    pub h: Hypergraph,
    pub x: NodeFeatures,
    pub params: ModelParams,
}

/// Random hypergraph, features and a three-convolution model.
pub fn random_instance(seed: u64, n: usize, m: usize, p: f64) -> Instance {
    let mut r = rng(seed);
    let h = random_hypergraph(&mut r, n, m, p);
    let x = random_features(&mut r, n, 5);
    let params = random_params(&[5, 6, 5, 4, 3], seed ^ 0x5eed);
    Instance { h, x, params }
}

fn guarded_rsqrt(v: f64) -> f64 {
    if v < 1e-12 {
        0.0
    } else {
        1.0 / v.sqrt()
    }
}

/// Dense `D^{-1/2} H' W B^{-1} H'ᵀ D^{-1/2}` with `H'` the masked incidence.
/// `mask` follows `h.incidences()` order.
pub fn dense_operator(h: &Hypergraph, mask: Option<&[f64]>) -> Dense {
    let (n, m) = (h.num_nodes(), h.num_edges());
    let w = h.edge_weights();
    let mut hm = vec![vec![0.0; m]; n];
    for (i, &(v, e)) in h.incidences().iter().enumerate() {
        hm[v][e] = mask.map_or(1.0, |mk| mk[i]);
    }
    let dv: Vec<f64> = (0..n).map(|v| (0..m).map(|e| hm[v][e] * w[e]).sum()).collect();
    let de: Vec<f64> = (0..m).map(|e| (0..n).map(|v| hm[v][e]).sum()).collect();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for e in 0..m {
                let inv_b = guarded_rsqrt(de[e]).powi(2);
                acc += hm[i][e] * w[e] * inv_b * hm[j][e];
            }
            s[i][j] = guarded_rsqrt(dv[i]) * acc * guarded_rsqrt(dv[j]);
        }
    }
    s
}

pub fn dense_matmul(a: &Dense, b: &Dense) -> Dense {
    let k = b.len();
    let c = if k == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|row| (0..c).map(|j| (0..k).map(|t| row[t] * b[t][j]).sum()).collect())
        .collect()
}

pub fn to_dense(m: &Matrix) -> Dense {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Evaluation-mode logits from the dense operator.
pub fn dense_logits(h: &Hypergraph, x: &NodeFeatures, p: &ModelParams, mask: Option<&[f64]>) -> Dense {
    let s = dense_operator(h, mask);
    let slope = match p.activation {
        Activation::LeakyRelu { negative_slope } => negative_slope,
    };
    let conv = p.weights.len() - 1;
    let mut z = to_dense(x.matrix());
    for l in 0..conv {
        z = dense_matmul(&z, &to_dense(&p.weights[l]));
        z = dense_matmul(&s, &z);
        for row in &mut z {
            for v in row.iter_mut() {
                if *v < 0.0 {
                    *v *= slope;
                }
            }
        }
    }
    dense_matmul(&z, &to_dense(&p.weights[conv]))
}

/// First maximum of a row.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `‖a − n‖ / max(‖a‖, ‖n‖, floor)` in the Euclidean norm.
pub fn relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(floor)
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let down = f(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// A node with at least one incidence, preferring `start` onward.
pub fn connected_node(h: &Hypergraph, start: usize) -> Option<usize> {
    let n = h.num_nodes();
    (0..n).map(|i| (start + i) % n).find(|&v| h.node_degree(v) > 0)
}

/// Nodes within `hops` shared-hyperedge steps of `node`, from the raw
/// incidence list.
pub fn reachable(h: &Hypergraph, node: usize, hops: usize) -> Vec<usize> {
    let mut seen = vec![false; h.num_nodes()];
    seen[node] = true;
    let mut frontier = vec![node];
    for _ in 0..hops {
        let edges: Vec<usize> = h.incidences().iter().filter(|(v, _)| frontier.contains(v)).map(|&(_, e)| e).collect();
        frontier = h
            .incidences()
            .iter()
            .filter(|(v, e)| edges.contains(e) && !seen[*v])
            .map(|&(v, _)| v)
            .collect();
        frontier.sort_unstable();
        frontier.dedup();
        for &v in &frontier {
            seen[v] = true;
        }
    }
    (0..h.num_nodes()).filter(|&v| seen[v]).collect()
}

/// Tunable items as global removals of size one: the target's incidences
/// (NHP) or every hyperedge touching the `hops` neighborhood (HP).
pub fn tunable_items(h: &Hypergraph, node: usize, variant: MaskVariant, hops: usize) -> Vec<Removal> {
    match variant {
        MaskVariant::Nhp => h
            .incidences()
            .iter()
            .filter(|(v, _)| *v == node)
            .map(|&p| Removal::Incidences(vec![p]))
            .collect(),
        MaskVariant::Hp => {
            let near = reachable(h, node, hops);
            let mut edges: Vec<usize> = h.incidences().iter().filter(|(v, _)| near.contains(v)).map(|&(_, e)| e).collect();
            edges.sort_unstable();
            edges.dedup();
            edges.into_iter().map(|e| Removal::Edges(vec![e])).collect()
        }
    }
}

fn merge(items: &[Removal], bits: u32) -> Removal {
    let picked = items.iter().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, r)| r);
    match items.first() {
        Some(Removal::Edges(_)) => Removal::Edges(picked.flat_map(|r| match r {
            Removal::Edges(v) => v.clone(),
            Removal::Incidences(_) => unreachable!(),
        }).collect()),
        _ => Removal::Incidences(picked.flat_map(|r| match r {
            Removal::Incidences(v) => v.clone(),
            Removal::Edges(_) => unreachable!(),
        }).collect()),
    }
}

/// Exhaustive search with the dense forward pass.
pub struct Enumeration {
    pub clean_class: usize,
    pub minimal_size: Option<usize>,
    /// All flipping removals of the minimal size.
    pub witnesses: Vec<Removal>,
    /// Smallest top-two logit gap seen; tiny gaps make argmax fragile.
    pub min_margin: f64,
}

fn margin(row: &[f64]) -> f64 {
    let mut v = row.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    if v.len() > 1 {
        v[0] - v[1]
    } else {
        f64::INFINITY
    }
}

pub fn enumerate_counterfactuals(inst: &Instance, node: usize, variant: MaskVariant) -> Enumeration {
    let hops = inst.params.num_layers();
    let items = tunable_items(&inst.h, node, variant, hops);
    let clean = dense_logits(&inst.h, &inst.x, &inst.params, None);
    let clean_class = argmax(&clean[node]);
    let mut min_margin = margin(&clean[node]);
    let mut best: Option<usize> = None;
    let mut witnesses = Vec::new();
    let mut subsets: Vec<u32> = (1..1u32 << items.len()).collect();
    subsets.sort_by_key(|b| b.count_ones());
    for bits in subsets {
        let k = bits.count_ones() as usize;
        if best.is_some_and(|b| k > b) {
            break;
        }
        let removal = merge(&items, bits);
        let edited = removal.apply(&inst.h).unwrap();
        let row = &dense_logits(&edited, &inst.x, &inst.params, None)[node];
        min_margin = min_margin.min(margin(row));
        if argmax(row) != clean_class {
            best = Some(k);
            witnesses.push(removal);
        }
    }
    Enumeration {
        clean_class,
        minimal_size: best,
        witnesses,
        min_margin,
    }
}

/// Record with a removal of `size` incidences, or nothing found when
/// `size` is `None`.
pub fn record(target: usize, size: Option<usize>, sub: usize, full: usize, wall_time: f64) -> ResultRecord {
    ResultRecord {
        dataset: "hand".into(),
        method: Method::Explainer,
        variant: MaskVariant::Nhp,
        target,
        found: size.is_some(),
        original_class: 0,
        new_class: size.map(|_| 1),
        removed_incidences: size.map(|k| (0..k).map(|e| (target, e)).collect()),
        removed_edges: None,
        size,
        found_at_iteration: size.map(|_| 1),
        wall_time,
        denominators: Denominators { sub, full },
        witnesses: None,
        subsets_enumerated: None,
        config: serde_json::Value::Null,
    }
}

/// Ten records whose statistics are exact binary fractions.
pub fn hand_records() -> Vec<ResultRecord> {
    vec![
        record(0, Some(1), 4, 64, 0.5),
        record(1, Some(2), 8, 64, 0.25),
        record(2, Some(1), 2, 64, 0.75),
        record(3, Some(3), 4, 64, 0.5),
        record(4, Some(1), 8, 64, 0.5),
        record(5, Some(2), 4, 64, 0.5),
        record(6, Some(4), 16, 64, 1.0),
        record(7, Some(1), 16, 64, 0.25),
        record(8, None, 4, 64, 0.5),
        record(9, None, 8, 64, 0.25),
    ]
}
