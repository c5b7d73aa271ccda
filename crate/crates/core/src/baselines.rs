//! Reference searches: exhaustive enumeration and random perturbation.

use std::time::Instant;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainer::{CounterfactualResult, ExplainOutcome, MaskProblem, MaskVariant, Removal, SearchScope};
use crate::hypergraph::Hypergraph;
use crate::model::{self, ModelParams, NodeFeatures};

/// Largest search space the oracle enumerates by default (4096 subsets).
pub const DEFAULT_MAX_DEGREE: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub target: usize,
    pub variant: MaskVariant,
    pub original_class: usize,
    /// `None` when even removing every tunable entry keeps the prediction.
    pub minimal_size: Option<usize>,
    /// Every removal of `minimal_size` entries that flips the prediction,
    /// in lexicographic order of tunable index.
    pub witnesses: Vec<Removal>,
    pub subsets_enumerated: u64,
    pub wall_time: f64,
}

/// Smallest counterfactuals by enumerating removals in order of size.
///
/// The tunable set is the same one the explainer uses for `variant`, so
/// sizes are directly comparable. Fails with [`Error::DegreeCap`] when it
/// has more than `max_degree` entries.
pub fn brute_force_min_cf(
    h: &Hypergraph,
    x: &NodeFeatures,
    params: &ModelParams,
    node: usize,
    variant: MaskVariant,
    max_degree: usize,
    hops: usize,
) -> Result<OracleResult> {
    let start = Instant::now();
    let mut problem = MaskProblem::new(h, x, params, node, variant, hops, SearchScope::View)?;
    let t = problem.state.len();
    if t > max_degree {
        return Err(Error::DegreeCap {
            node,
            size: t,
            cap: max_degree,
        });
    }
    let y_hat = problem.clean_class;
    let mut enumerated = 0u64;
    let mut found = Vec::new();
    let mut minimal_size = None;
    for k in 1..=t {
        for subset in (0..t).combinations(k) {
            enumerated += 1;
            if problem.predict_removed(&subset)? != y_hat {
                found.push(subset);
            }
        }
        if !found.is_empty() {
            minimal_size = Some(k);
            break;
        }
    }

    let original_class = model::logits(h, x, params, None)?.argmax_row(node);
    let mut witnesses = Vec::with_capacity(found.len());
    for subset in &found {
        let removal = Removal::from_tunable(&problem.view, &problem.state, subset);
        let after = model::logits(&removal.apply(h)?, x, params, None)?.argmax_row(node);
        if after == original_class {
            return Err(Error::Internal(format!(
                "oracle witness {removal:?} for node {node} does not flip on the full hypergraph"
            )));
        }
        witnesses.push(removal);
    }
    Ok(OracleResult {
        target: node,
        variant,
        original_class,
        minimal_size,
        witnesses,
        subsets_enumerated: enumerated,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Best of `attempts` independent random removals.
///
/// Each attempt removes every tunable entry independently with
/// probability ½. The smallest flipping removal wins, earliest attempt on
/// ties; `found_at_iteration` is the 1-based attempt index.
pub fn random_baseline(
    h: &Hypergraph,
    x: &NodeFeatures,
    params: &ModelParams,
    node: usize,
    variant: MaskVariant,
    attempts: usize,
    seed: u64,
    hops: usize,
) -> Result<ExplainOutcome> {
    let start = Instant::now();
    if attempts == 0 {
        return Err(Error::Config("attempts must be at least 1".into()));
    }
    let mut problem = MaskProblem::new(h, x, params, node, variant, hops, SearchScope::View)?;
    let t = problem.state.len();
    let y_hat = problem.clean_class;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, usize)> = None;
    for attempt in 1..=attempts {
        let removed: Vec<usize> = (0..t).filter(|_| rng.gen::<bool>()).collect();
        if removed.is_empty() || best.as_ref().is_some_and(|(b, _)| removed.len() >= b.len()) {
            continue;
        }
        if problem.predict_removed(&removed)? != y_hat {
            best = Some((removed, attempt));
        }
    }

    let original_class = model::logits(h, x, params, None)?.argmax_row(node);
    let mut result = None;
    if let Some((removed, attempt)) = best {
        let removal = Removal::from_tunable(&problem.view, &problem.state, &removed);
        let new_class = model::logits(&removal.apply(h)?, x, params, None)?.argmax_row(node);
        if new_class == original_class {
            return Err(Error::Internal(format!(
                "random removal {removal:?} for node {node} does not flip on the full hypergraph"
            )));
        }
        result = Some(CounterfactualResult {
            target: node,
            variant,
            original_class,
            new_class,
            size: removal.len(),
            removal,
            found_at_iteration: attempt,
            wall_time: 0.0,
        });
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
        search_space: t,
    })
}

/// Probability that `attempts` uniform random subsets of a `degree`-element
/// set include one particular subset: `1 − (1 − 2^−degree)^attempts`.
pub fn bernoulli_lower_bound(degree: u32, attempts: u64) -> f64 {
    let p = 0.5f64.powi(degree.min(i32::MAX as u32) as i32);
    1.0 - (1.0 - p).powf(attempts as f64)
}
