//! Counterfactual search over the incidence structure.
//!
//! The model is frozen. A vector of pre-sigmoid logits, one per tunable
//! entry, is lifted to a multiplicative mask on the incidence values:
//!
//! * [`MaskVariant::Nhp`]: one entry per hyperedge of the target node,
//!   applied only to the target's own incidence in that hyperedge.
//! * [`MaskVariant::Hp`]: one entry per hyperedge touching the target's
//!   n-hop neighborhood, applied to every incidence of that hyperedge.
//!
//! Each iteration takes a momentum step on the relaxed loss, thresholds the
//! mask, and checks whether the thresholded edit flips the prediction. The
//! smallest flipping edit seen (earliest on ties) is re-checked on the full
//! hypergraph before it is returned.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diffmath::{sigmoid, Matrix, Pattern, Tape, Var};
use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, SubHypergraphView};
use crate::model::{self, forward_projected, ModelParams, NodeFeatures, Propagation};

/// Initial value of every tunable logit (`sigmoid(3) ≈ 0.953`).
pub const INIT_LOGIT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskVariant {
    /// Remove the target node from some of its hyperedges.
    Nhp,
    /// Delete whole hyperedges around the target.
    Hp,
}

impl fmt::Display for MaskVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskVariant::Nhp => "nhp",
            MaskVariant::Hp => "hp",
        })
    }
}

impl FromStr for MaskVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nhp" => Ok(MaskVariant::Nhp),
            "hp" => Ok(MaskVariant::Hp),
            other => Err(Error::Config(format!("unknown variant `{other}` (expected nhp or hp)"))),
        }
    }
}

/// Structure the optimisation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchScope {
    /// The n-hop sub-hypergraph around the target.
    View,
    /// The whole hypergraph.
    Full,
}

impl FromStr for SearchScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "view" => Ok(SearchScope::View),
            "full" => Ok(SearchScope::Full),
            other => Err(Error::Config(format!("unknown scope `{other}` (expected view or full)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta: f64,
    pub threshold: f64,
    /// Neighborhood radius; `None` uses the model's convolution count.
    pub hops: Option<usize>,
    pub scope: SearchScope,
    /// Echoed in outputs. The search itself is deterministic.
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            learning_rate: 0.1,
            momentum: 0.9,
            beta: 0.5,
            threshold: 0.5,
            hops: None,
            scope: SearchScope::View,
            seed: 0,
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        if sigmoid(INIT_LOGIT) < self.threshold {
            return Err(Error::Config(format!(
                "threshold {} is above the initial mask value {:.4}",
                self.threshold,
                sigmoid(INIT_LOGIT)
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config("beta must be nonnegative".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.hops == Some(0) {
            return Err(Error::Config("hops must be at least 1".into()));
        }
        Ok(())
    }

    pub fn hops_for(&self, params: &ModelParams) -> usize {
        self.hops.unwrap_or_else(|| params.num_layers())
    }
}

/// Tunable mask entries for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationState {
    pub variant: MaskVariant,
    pub tunable_logits: Vec<f64>,
    /// Local hyperedge of each tunable entry.
    pub tunable_edges: Vec<usize>,
    /// Positions in the view's incidence list scaled by each tunable entry.
    pub entry_map: Vec<Vec<usize>>,
}

impl PerturbationState {
    pub fn len(&self) -> usize {
        self.tunable_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tunable_logits.is_empty()
    }
}

/// Tunable set of `variant` for the view's target, with logits at [`INIT_LOGIT`].
pub fn init_state(view: &SubHypergraphView, variant: MaskVariant, hops: usize) -> Result<PerturbationState> {
    let sub = &view.sub;
    let target = view.target_local;
    let (tunable_edges, entry_map): (Vec<usize>, Vec<Vec<usize>>) = match variant {
        MaskVariant::Nhp => sub
            .node_incidence_range(target)
            .map(|pos| (sub.incidences()[pos].1, vec![pos]))
            .unzip(),
        MaskVariant::Hp => {
            let nodes = sub.n_hop_nodes(target, hops)?;
            let edges = sub.hyperedges_touching(&nodes)?;
            let mut positions: Vec<Vec<usize>> = vec![Vec::new(); sub.num_edges()];
            for (pos, &(_, e)) in sub.incidences().iter().enumerate() {
                positions[e].push(pos);
            }
            edges.into_iter().map(|e| (e, std::mem::take(&mut positions[e]))).unzip()
        }
    };
    if tunable_edges.is_empty() {
        return Err(Error::NothingTunable(view.target_global()));
    }
    Ok(PerturbationState {
        variant,
        tunable_logits: vec![INIT_LOGIT; tunable_edges.len()],
        tunable_edges,
        entry_map,
    })
}

/// Per-incidence soft mask: `sigmoid(logit)` on mapped positions, 1 elsewhere.
pub fn lift_soft(state: &PerturbationState, num_incidences: usize) -> Vec<f64> {
    let mut mask = vec![1.0; num_incidences];
    for (logit, positions) in state.tunable_logits.iter().zip(&state.entry_map) {
        let v = sigmoid(*logit);
        for &p in positions {
            mask[p] = v;
        }
    }
    mask
}

/// Thresholded mask and the tunable indices it removes (ascending).
/// An entry is kept iff `sigmoid(logit) >= threshold`.
pub fn binarize(state: &PerturbationState, num_incidences: usize, threshold: f64) -> (Vec<f64>, Vec<usize>) {
    let removed: Vec<usize> = state
        .tunable_logits
        .iter()
        .enumerate()
        .filter(|(_, &l)| sigmoid(l) < threshold)
        .map(|(i, _)| i)
        .collect();
    (binary_mask(state, num_incidences, &removed), removed)
}

pub(crate) fn binary_mask(state: &PerturbationState, num_incidences: usize, removed: &[usize]) -> Vec<f64> {
    let mut mask = vec![1.0; num_incidences];
    for &t in removed {
        for &p in &state.entry_map[t] {
            mask[p] = 0.0;
        }
    }
    mask
}

/// Discrete edit in global indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Removal {
    /// `(node, hyperedge)` incidences removed.
    Incidences(Vec<(usize, usize)>),
    /// Hyperedges whose incidences are all removed.
    Edges(Vec<usize>),
}

impl Removal {
    pub fn len(&self) -> usize {
        match self {
            Removal::Incidences(v) => v.len(),
            Removal::Edges(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, h: &Hypergraph) -> Result<Hypergraph> {
        match self {
            Removal::Incidences(v) => h.without_incidences(v),
            Removal::Edges(v) => h.without_edges(v),
        }
    }

    /// Maps tunable indices of `state` on `view` to global indices.
    pub(crate) fn from_tunable(view: &SubHypergraphView, state: &PerturbationState, removed: &[usize]) -> Self {
        match state.variant {
            MaskVariant::Nhp => Removal::Incidences(
                removed
                    .iter()
                    .map(|&t| (view.target_global(), view.edge_map[state.tunable_edges[t]]))
                    .collect(),
            ),
            MaskVariant::Hp => Removal::Edges(removed.iter().map(|&t| view.edge_map[state.tunable_edges[t]]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub target: usize,
    pub variant: MaskVariant,
    pub original_class: usize,
    pub new_class: usize,
    pub removal: Removal,
    pub size: usize,
    pub found_at_iteration: usize,
    pub wall_time: f64,
}

impl CounterfactualResult {
    /// Re-applies the removal to `h` and checks the prediction changes.
    pub fn verify(&self, h: &Hypergraph, x: &NodeFeatures, params: &ModelParams) -> Result<bool> {
        let edited = self.removal.apply(h)?;
        let clean = model::logits(h, x, params, None)?.argmax_row(self.target);
        let after = model::logits(&edited, x, params, None)?.argmax_row(self.target);
        Ok(clean == self.original_class && after == self.new_class && after != clean)
    }
}

/// Frozen model restricted to one view, with the mask lift precomputed.
pub(crate) struct MaskProblem<'a> {
    pub view: SubHypergraphView,
    pub state: PerturbationState,
    params: &'a ModelParams,
    first: Matrix,
    lift: Arc<Pattern>,
    lift_base: Matrix,
    pub clean_class: usize,
    cache: HashMap<Vec<usize>, usize>,
}

impl<'a> MaskProblem<'a> {
    pub fn new(h: &Hypergraph, x: &NodeFeatures, params: &'a ModelParams, node: usize, variant: MaskVariant, hops: usize, scope: SearchScope) -> Result<Self> {
        params.validate()?;
        if x.num_features() != params.num_features() || x.num_nodes() != h.num_nodes() {
            return Err(Error::Dimension(format!(
                "features are {}x{}, hypergraph has {} nodes and model expects {} features",
                x.num_nodes(),
                x.num_features(),
                h.num_nodes(),
                params.num_features()
            )));
        }
        let view = match scope {
            SearchScope::View => h.extract_subhypergraph(node, hops)?,
            SearchScope::Full => h.full_view(node)?,
        };
        let state = init_state(&view, variant, hops)?;
        let first = x.matrix().select_rows(&view.node_map).matmul(&params.weights[0])?;

        let nnz = view.sub.num_incidences();
        let mut coords = Vec::new();
        let mut base = vec![1.0; nnz];
        for (t, positions) in state.entry_map.iter().enumerate() {
            for &p in positions {
                coords.push((p, t));
                base[p] = 0.0;
            }
        }
        let lift = Arc::new(Pattern::new(nnz, state.len(), coords)?);
        let mut problem = Self {
            view,
            state,
            params,
            first,
            lift,
            lift_base: Matrix::column(&base)?,
            clean_class: 0,
            cache: HashMap::new(),
        };
        problem.clean_class = problem.logits_with(&vec![1.0; nnz])?.argmax_row(problem.view.target_local);
        problem.cache.insert(Vec::new(), problem.clean_class);
        Ok(problem)
    }

    fn record_logits(&self, tape: &mut Tape, values: Var) -> Result<Var> {
        let weights: Vec<Var> = self.params.weights.iter().map(|w| tape.constant(w.clone())).collect();
        let first = tape.constant(self.first.clone());
        let prop = Propagation::record(tape, &self.view.sub, Some(values))?;
        forward_projected(tape, &prop, first, &weights, self.params.activation, None)
    }

    /// View logits under a per-incidence mask.
    pub fn logits_with(&self, mask: &[f64]) -> Result<Matrix> {
        let mut tape = Tape::new();
        let values = tape.constant(Matrix::column(mask)?);
        let logits = self.record_logits(&mut tape, values)?;
        Ok(tape.value(logits).clone())
    }

    /// Target prediction with the given tunable entries removed.
    pub fn predict_removed(&mut self, removed: &[usize]) -> Result<usize> {
        if let Some(&c) = self.cache.get(removed) {
            return Ok(c);
        }
        let mask = binary_mask(&self.state, self.view.sub.num_incidences(), removed);
        let c = self.logits_with(&mask)?.argmax_row(self.view.target_local);
        self.cache.insert(removed.to_vec(), c);
        Ok(c)
    }

    /// Relaxed loss and its gradient with respect to the tunable logits.
    ///
    /// `gate` multiplies the prediction term; it is `true` while the
    /// thresholded mask has not flipped the prediction.
    pub fn loss_and_grad(&self, logits: &[f64], gate: bool, beta: f64) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let theta = tape.leaf(Matrix::column(logits)?);
        let soft = tape.sigmoid(theta)?;
        let ones = tape.constant(Matrix::filled(self.lift.nnz(), 1, 1.0));
        let spread = tape.spmm(&self.lift, ones, soft)?;
        let base = tape.constant(self.lift_base.clone());
        let values = tape.add(spread, base)?;

        // Distance counts each tunable entry once, so HP pays per hyperedge.
        let neg_ones = tape.constant(Matrix::filled(self.lift.cols(), 1, -1.0));
        let diff = tape.add(soft, neg_ones)?;
        let dist = tape.l1(diff)?;
        let mut loss = tape.scale(dist, beta)?;

        if gate {
            let out = self.record_logits(&mut tape, values)?;
            let log_probs = tape.log_softmax_rows(out)?;
            let picked = tape.gather(log_probs, Arc::new(vec![(self.view.target_local, self.clean_class)]))?;
            let pred = tape.sum(picked)?;
            loss = tape.add(pred, loss)?;
        }
        let value = tape.value(loss).get(0, 0);
        if !value.is_finite() {
            return Err(Error::Numeric(crate::error::DiffError::NonFinite("cf_loss")));
        }
        let grads = tape.backward(loss)?;
        Ok((value, grads.get(theta).into_vec()))
    }
}

/// Relaxed counterfactual loss for `state` on `view`.
///
/// `loss = gate · log p_soft(ŷ | target) + β · Σ_t (1 − σ(θ_t))` over the
/// tunable entries `t`, where the gate is 1 while the thresholded mask still
/// yields `ŷ`.
pub fn cf_loss(
    h: &Hypergraph,
    x: &NodeFeatures,
    params: &ModelParams,
    node: usize,
    state: &PerturbationState,
    beta: f64,
    threshold: f64,
    hops: usize,
) -> Result<(f64, Vec<f64>)> {
    let mut problem = MaskProblem::new(h, x, params, node, state.variant, hops, SearchScope::View)?;
    if problem.state.tunable_edges != state.tunable_edges {
        return Err(Error::Config("perturbation state does not match the target's view".into()));
    }
    problem.state.tunable_logits = state.tunable_logits.clone();
    let (_, removed) = binarize(&problem.state, problem.view.sub.num_incidences(), threshold);
    let gate = problem.predict_removed(&removed)? == problem.clean_class;
    problem.loss_and_grad(&state.tunable_logits, gate, beta)
}

/// Everything [`explain_detailed`] reports, found or not.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainOutcome {
    pub target: usize,
    pub original_class: usize,
    pub result: Option<CounterfactualResult>,
    pub wall_time: f64,
    /// Number of tunable entries.
    pub search_space: usize,
}

/// Convenience wrapper over [`explain_detailed`].
pub fn explain(
    h: &Hypergraph,
    x: &NodeFeatures,
    params: &ModelParams,
    node: usize,
    variant: MaskVariant,
    cfg: &ExplainConfig,
) -> Result<Option<CounterfactualResult>> {
    Ok(explain_detailed(h, x, params, node, variant, cfg)?.result)
}

pub fn explain_detailed(
    h: &Hypergraph,
    x: &NodeFeatures,
    params: &ModelParams,
    node: usize,
    variant: MaskVariant,
    cfg: &ExplainConfig,
) -> Result<ExplainOutcome> {
    let start = Instant::now();
    cfg.validate()?;
    let hops = cfg.hops_for(params);
    let mut problem = MaskProblem::new(h, x, params, node, variant, hops, cfg.scope)?;
    let nnz = problem.view.sub.num_incidences();
    let y_hat = problem.clean_class;

    let (_, removed) = binarize(&problem.state, nnz, cfg.threshold);
    if !removed.is_empty() || problem.predict_removed(&removed)? != y_hat {
        return Err(Error::Internal("initial mask does not reproduce the clean prediction".into()));
    }

    let mut logits = problem.state.tunable_logits.clone();
    let mut velocity = vec![0.0; logits.len()];
    let mut gate = true;
    // Strictly improving candidates: (tunable indices, iteration).
    let mut candidates: Vec<(Vec<usize>, usize)> = Vec::new();

    for it in 1..=cfg.iterations {
        let (_, grad) = problem.loss_and_grad(&logits, gate, cfg.beta)?;
        for ((l, v), g) in logits.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
            *v = cfg.momentum * *v + g;
            *l -= cfg.learning_rate * *v;
        }
        problem.state.tunable_logits.clone_from(&logits);
        let (_, removed) = binarize(&problem.state, nnz, cfg.threshold);
        let flipped = !removed.is_empty() && problem.predict_removed(&removed)? != y_hat;
        if flipped && candidates.last().map_or(true, |(best, _)| removed.len() < best.len()) {
            candidates.push((removed, it));
            if candidates.last().map(|c| c.0.len()) == Some(1) {
                // Nothing smaller exists and later ties lose.
                break;
            }
        }
        gate = !flipped;
    }

    let full_logits = model::logits(h, x, params, None)?;
    let original_class = full_logits.argmax_row(node);
    let mut result = None;
    for (removed, it) in candidates.iter().rev() {
        let removal = Removal::from_tunable(&problem.view, &problem.state, removed);
        let edited = removal.apply(h)?;
        let new_class = model::logits(&edited, x, params, None)?.argmax_row(node);
        if new_class != original_class {
            result = Some(CounterfactualResult {
                target: node,
                variant,
                original_class,
                new_class,
                size: removal.len(),
                removal,
                found_at_iteration: *it,
                wall_time: 0.0,
            });
            break;
        }
        log::warn!("candidate of size {} for node {node} did not certify on the full hypergraph", removed.len());
    }
    let wall_time = start.elapsed().as_secs_f64();
    if let Some(r) = result.as_mut() {
        r.wall_time = wall_time;
    }
    Ok(ExplainOutcome {
        target: node,
        original_class,
        result,
        wall_time,
        search_space: problem.state.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Hypergraph {
        Hypergraph::from_hyperedges(3, &[vec![0, 1], vec![1, 2]]).unwrap()
    }

    #[test]
    fn nhp_has_one_entry_per_incident_edge() {
        let h = Hypergraph::from_hyperedges(6, &[vec![0, 1], vec![0, 2], vec![0, 3], vec![0, 4, 5], vec![4, 5]]).unwrap();
        let view = h.extract_subhypergraph(0, 3).unwrap();
        let s = init_state(&view, MaskVariant::Nhp, 3).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.tunable_logits.iter().all(|&l| l == INIT_LOGIT));
    }

    #[test]
    fn hp_on_chain_tunes_both_edges() {
        let view = chain().extract_subhypergraph(0, 3).unwrap();
        let s = init_state(&view, MaskVariant::Hp, 3).unwrap();
        assert_eq!(s.tunable_edges, vec![0, 1]);
        assert_eq!(s.entry_map, vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn isolated_target_has_nothing_tunable() {
        let h = Hypergraph::from_hyperedges(3, &[vec![0, 1]]).unwrap();
        let view = h.extract_subhypergraph(2, 3).unwrap();
        assert!(matches!(init_state(&view, MaskVariant::Nhp, 3), Err(Error::NothingTunable(2))));
        assert!(matches!(init_state(&view, MaskVariant::Hp, 3), Err(Error::NothingTunable(2))));
    }

    #[test]
    fn lift_places_sigmoid_on_mapped_entries() {
        let view = chain().extract_subhypergraph(1, 3).unwrap();
        let mut s = init_state(&view, MaskVariant::Nhp, 3).unwrap();
        s.tunable_logits = vec![0.0, 0.0];
        let m = lift_soft(&s, view.sub.num_incidences());
        // incidences: (0,0) (1,0) (1,1) (2,1); node 1 is the target
        assert_eq!(m, vec![1.0, 0.5, 0.5, 1.0]);

        let mut s = init_state(&view, MaskVariant::Hp, 3).unwrap();
        s.tunable_logits = vec![0.0, 10.0];
        let m = lift_soft(&s, view.sub.num_incidences());
        assert_eq!(&m[..2], &[0.5, 0.5]);
        assert!(m[2..].iter().all(|&v| v > 0.9999));
    }

    #[test]
    fn binarize_examples() {
        let h = Hypergraph::from_hyperedges(6, &[vec![0, 1], vec![0, 2], vec![0, 3, 4, 5, 1]]).unwrap();
        let view = h.extract_subhypergraph(0, 3).unwrap();
        let mut s = init_state(&view, MaskVariant::Nhp, 3).unwrap();
        let nnz = view.sub.num_incidences();
        assert!(binarize(&s, nnz, 0.5).1.is_empty());
        s.tunable_logits[1] = -3.0;
        let (mask, removed) = binarize(&s, nnz, 0.5);
        assert_eq!(removed, vec![1]);
        assert_eq!(mask.iter().filter(|&&v| v == 0.0).count(), 1);

        let mut s = init_state(&view, MaskVariant::Hp, 3).unwrap();
        s.tunable_logits[2] = -3.0;
        let (mask, removed) = binarize(&s, nnz, 0.5);
        assert_eq!(removed, vec![2]);
        assert_eq!(mask.iter().filter(|&&v| v == 0.0).count(), 5);
        assert_eq!(Removal::from_tunable(&view, &s, &removed), Removal::Edges(vec![2]));
    }

    #[test]
    fn binarize_keeps_ties() {
        let view = chain().extract_subhypergraph(0, 3).unwrap();
        let mut s = init_state(&view, MaskVariant::Nhp, 3).unwrap();
        s.tunable_logits = vec![0.0];
        assert!(binarize(&s, view.sub.num_incidences(), 0.5).1.is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(ExplainConfig::default().validate().is_ok());
        for bad in [
            ExplainConfig { iterations: 0, ..Default::default() },
            ExplainConfig { threshold: 1.0, ..Default::default() },
            ExplainConfig { threshold: 0.99, ..Default::default() },
            ExplainConfig { beta: -1.0, ..Default::default() },
            ExplainConfig { hops: Some(0), ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
        assert_eq!("HP".parse::<MaskVariant>().unwrap(), MaskVariant::Hp);
        assert!("edge".parse::<MaskVariant>().is_err());
    }
}
