//! Batch runs over many target nodes.

use std::collections::HashMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{brute_force_min_cf, random_baseline};
use crate::dataset::DatasetBundle;
use crate::error::{Error, Result};
use crate::explainer::{explain_detailed, ExplainConfig, ExplainOutcome, MaskVariant};
use crate::hypergraph::Hypergraph;
use crate::model::{self, ModelParams, NodeFeatures, Split};
use crate::record::{Denominators, Method, ResultRecord};
use crate::seed::derive_indexed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeSelection {
    AllTest,
    List(Vec<usize>),
}

impl FromStr for NodeSelection {
    type Err = Error;

    /// `all-test`, or a comma-separated list of node indices (possibly empty).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "all-test" {
            return Ok(NodeSelection::AllTest);
        }
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<usize>().map_err(|_| Error::Config(format!("bad node index `{t}`"))))
            .collect::<Result<Vec<_>>>()
            .map(NodeSelection::List)
    }
}

/// A loaded dataset with its hypergraph, features and a frozen model.
pub struct Workload<'a> {
    pub bundle: &'a DatasetBundle,
    pub hypergraph: Hypergraph,
    pub features: NodeFeatures,
    pub params: &'a ModelParams,
}

impl<'a> Workload<'a> {
    pub fn new(bundle: &'a DatasetBundle, params: &'a ModelParams) -> Result<Self> {
        params.validate()?;
        if bundle.num_features != params.num_features() || bundle.num_classes != params.num_classes() {
            return Err(Error::Dimension(format!(
                "dataset has {} features and {} classes, checkpoint expects {} and {}",
                bundle.num_features,
                bundle.num_classes,
                params.num_features(),
                params.num_classes()
            )));
        }
        Ok(Self {
            bundle,
            hypergraph: bundle.hypergraph()?,
            features: bundle.node_features(),
            params,
        })
    }

    pub fn nodes(&self, sel: &NodeSelection) -> Result<Vec<usize>> {
        match sel {
            NodeSelection::AllTest => Ok(self.bundle.nodes_in(Split::Test)),
            NodeSelection::List(v) => {
                if let Some(&bad) = v.iter().find(|&&n| n >= self.bundle.num_nodes) {
                    return Err(Error::NodeOutOfRange {
                        node: bad,
                        num_nodes: self.bundle.num_nodes,
                    });
                }
                Ok(v.clone())
            }
        }
    }

    fn denominators(&self, node: usize, variant: MaskVariant, hops: usize) -> Result<Denominators> {
        Denominators::for_target(&self.hypergraph, node, variant, hops)
    }

    fn clean_class(&self, node: usize) -> Result<usize> {
        Ok(model::predict(&self.hypergraph, &self.features, self.params, node)?.0)
    }

    /// Outcome with nothing found, for targets without tunable entries.
    fn untunable(&self, node: usize) -> Result<ExplainOutcome> {
        Ok(ExplainOutcome {
            target: node,
            original_class: self.clean_class(node)?,
            result: None,
            wall_time: 0.0,
            search_space: 0,
        })
    }
}

/// Maps `f` over `nodes` on `jobs` threads (0 = all cores), keeping order.
pub fn par_map<T, F>(nodes: &[usize], jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(|| nodes.par_iter().map(|&n| f(n)).collect())
}

pub fn explain_nodes(
    w: &Workload<'_>,
    nodes: &[usize],
    variant: MaskVariant,
    cfg: &ExplainConfig,
    jobs: usize,
    config_echo: &serde_json::Value,
) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let hops = cfg.hops_for(w.params);
    par_map(nodes, jobs, |node| {
        let outcome = match explain_detailed(&w.hypergraph, &w.features, w.params, node, variant, cfg) {
            Err(Error::NothingTunable(_)) => w.untunable(node)?,
            other => other?,
        };
        Ok(ResultRecord::from_outcome(
            &w.bundle.name,
            Method::Explainer,
            variant,
            &outcome,
            w.denominators(node, variant, hops)?,
            config_echo.clone(),
        ))
    })
}

/// Random baseline per node, seeded with `derive_indexed(seed, "baseline", node)`.
pub fn baseline_nodes(
    w: &Workload<'_>,
    nodes: &[usize],
    variant: MaskVariant,
    attempts: usize,
    seed: u64,
    hops: usize,
    jobs: usize,
    config_echo: &serde_json::Value,
) -> Result<Vec<ResultRecord>> {
    par_map(nodes, jobs, |node| {
        let node_seed = derive_indexed(seed, "baseline", node as u64);
        let outcome = match random_baseline(&w.hypergraph, &w.features, w.params, node, variant, attempts, node_seed, hops) {
            Err(Error::NothingTunable(_)) => w.untunable(node)?,
            other => other?,
        };
        Ok(ResultRecord::from_outcome(
            &w.bundle.name,
            Method::Random,
            variant,
            &outcome,
            w.denominators(node, variant, hops)?,
            config_echo.clone(),
        ))
    })
}

/// Oracle records plus the nodes skipped for exceeding `max_degree`.
/// With `skip_over_cap` false the first such node is an error.
#[allow(clippy::too_many_arguments)]
pub fn oracle_nodes(
    w: &Workload<'_>,
    nodes: &[usize],
    variant: MaskVariant,
    max_degree: usize,
    hops: usize,
    skip_over_cap: bool,
    jobs: usize,
    config_echo: &serde_json::Value,
) -> Result<(Vec<ResultRecord>, Vec<usize>)> {
    let per_node = par_map(nodes, jobs, |node| {
        let o = match brute_force_min_cf(&w.hypergraph, &w.features, w.params, node, variant, max_degree, hops) {
            Err(Error::DegreeCap { .. }) if skip_over_cap => return Ok(None),
            Err(Error::NothingTunable(_)) => {
                let u = w.untunable(node)?;
                return Ok(Some(ResultRecord::from_outcome(
                    &w.bundle.name,
                    Method::Oracle,
                    variant,
                    &u,
                    w.denominators(node, variant, hops)?,
                    config_echo.clone(),
                )));
            }
            other => other?,
        };
        let new_class = match o.witnesses.first() {
            Some(r) => Some(model::predict(&r.apply(&w.hypergraph)?, &w.features, w.params, node)?.0),
            None => None,
        };
        Ok(Some(ResultRecord::from_oracle(
            &w.bundle.name,
            &o,
            new_class,
            w.denominators(node, variant, hops)?,
            config_echo.clone(),
        )))
    })?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (node, r) in nodes.iter().zip(per_node) {
        match r {
            Some(r) => records.push(r),
            None => skipped.push(*node),
        }
    }
    Ok((records, skipped))
}

/// Explainer size minus oracle minimum, over nodes where both found one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub compared: usize,
    pub mean_gap: Option<f64>,
    /// Fraction of compared nodes where the explainer hit the minimum.
    pub equal_rate: Option<f64>,
    /// Compared nodes where the explainer beat the oracle. Always zero for
    /// a sound oracle.
    pub below_minimum: usize,
    /// Nodes the oracle solved but the explainer missed.
    pub explainer_missed: usize,
}

pub fn size_gap(oracle: &[ResultRecord], explainer: &[ResultRecord]) -> GapReport {
    let by_node: HashMap<(usize, MaskVariant), &ResultRecord> =
        explainer.iter().map(|r| ((r.target, r.variant), r)).collect();
    let mut gaps = Vec::new();
    let mut missed = 0;
    for o in oracle.iter().filter(|o| o.found) {
        match by_node.get(&(o.target, o.variant)) {
            Some(e) if e.found => gaps.push(e.size.unwrap_or(0) as i64 - o.size.unwrap_or(0) as i64),
            Some(_) => missed += 1,
            None => {}
        }
    }
    let n = gaps.len();
    GapReport {
        compared: n,
        mean_gap: (n > 0).then(|| gaps.iter().sum::<i64>() as f64 / n as f64),
        equal_rate: (n > 0).then(|| gaps.iter().filter(|&&g| g == 0).count() as f64 / n as f64),
        below_minimum: gaps.iter().filter(|&&g| g < 0).count(),
        explainer_missed: missed,
    }
}
