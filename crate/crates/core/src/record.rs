//! One JSON object per explained node, shared by every search method.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::baselines::OracleResult;
use crate::error::{Error, Result};
use crate::explainer::{ExplainOutcome, MaskVariant, Removal};
use crate::hypergraph::Hypergraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Explainer,
    Random,
    Oracle,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Explainer => "explainer",
            Method::Random => "random",
            Method::Oracle => "oracle",
        })
    }
}

/// Sparsity denominators for one target: incidences (NHP) or hyperedges
/// (HP), counted in the n-hop view and in the whole hypergraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Denominators {
    pub sub: usize,
    pub full: usize,
}

impl Denominators {
    pub fn for_target(h: &Hypergraph, node: usize, variant: MaskVariant, hops: usize) -> Result<Self> {
        let nodes = h.n_hop_nodes(node, hops)?;
        let edges = h.hyperedges_touching(&nodes)?;
        Ok(match variant {
            MaskVariant::Nhp => Denominators {
                // incidences of the view: touching edges restricted to view nodes
                sub: edges
                    .iter()
                    .map(|&e| h.members(e).iter().filter(|u| nodes.contains(u)).count())
                    .sum(),
                full: h.num_incidences(),
            },
            MaskVariant::Hp => Denominators {
                sub: edges.len(),
                full: h.num_edges(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub dataset: String,
    pub method: Method,
    pub variant: MaskVariant,
    pub target: usize,
    pub found: bool,
    pub original_class: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed_incidences: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed_edges: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub found_at_iteration: Option<usize>,
    pub wall_time: f64,
    pub denominators: Denominators,
    /// Oracle only: every minimal removal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witnesses: Option<Vec<Removal>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsets_enumerated: Option<u64>,
    /// Effective configuration of the run that produced the record.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl ResultRecord {
    pub fn from_outcome(
        dataset: &str,
        method: Method,
        variant: MaskVariant,
        outcome: &ExplainOutcome,
        denominators: Denominators,
        config: serde_json::Value,
    ) -> Self {
        let mut rec = Self::empty(dataset, method, variant, outcome.target, outcome.original_class, denominators, config);
        rec.wall_time = outcome.wall_time;
        if let Some(r) = &outcome.result {
            rec.found = true;
            rec.new_class = Some(r.new_class);
            rec.size = Some(r.size);
            rec.found_at_iteration = Some(r.found_at_iteration);
            rec.set_removal(&r.removal);
        }
        rec
    }

    /// The first witness stands in as the record's removal.
    pub fn from_oracle(dataset: &str, o: &OracleResult, new_class: Option<usize>, denominators: Denominators, config: serde_json::Value) -> Self {
        let mut rec = Self::empty(dataset, Method::Oracle, o.variant, o.target, o.original_class, denominators, config);
        rec.wall_time = o.wall_time;
        rec.subsets_enumerated = Some(o.subsets_enumerated);
        rec.witnesses = Some(o.witnesses.clone());
        if let (Some(size), Some(first)) = (o.minimal_size, o.witnesses.first()) {
            rec.found = true;
            rec.size = Some(size);
            rec.new_class = new_class;
            rec.set_removal(first);
        }
        rec
    }

    fn empty(
        dataset: &str,
        method: Method,
        variant: MaskVariant,
        target: usize,
        original_class: usize,
        denominators: Denominators,
        config: serde_json::Value,
    ) -> Self {
        Self {
            dataset: dataset.to_string(),
            method,
            variant,
            target,
            found: false,
            original_class,
            new_class: None,
            removed_incidences: None,
            removed_edges: None,
            size: None,
            found_at_iteration: None,
            wall_time: 0.0,
            denominators,
            witnesses: None,
            subsets_enumerated: None,
            config,
        }
    }

    fn set_removal(&mut self, removal: &Removal) {
        match removal {
            Removal::Incidences(v) => self.removed_incidences = Some(v.clone()),
            Removal::Edges(v) => self.removed_edges = Some(v.clone()),
        }
    }

    pub fn removal(&self) -> Option<Removal> {
        if let Some(v) = &self.removed_incidences {
            Some(Removal::Incidences(v.clone()))
        } else {
            self.removed_edges.as_ref().map(|v| Removal::Edges(v.clone()))
        }
    }

    pub fn to_json_line(&self) -> Result<String> {
        let mut s = serde_json::to_string(self).map_err(|e| Error::Internal(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[ResultRecord]) -> Result<()> {
    for r in records {
        w.write_all(r.to_json_line()?.as_bytes())?;
    }
    Ok(())
}

/// Parses JSON-lines records; blank lines are skipped.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<ResultRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse(format!("record line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
