//! Accuracy, size and sparsity of counterfactual runs.
//!
//! Means and standard deviations of size and sparsity are taken over the
//! records that found a counterfactual. Standard deviations are population
//! (divide by n).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainer::{CounterfactualResult, MaskVariant};
use crate::record::{Method, ResultRecord};

/// Which structure the sparsity denominator counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparsityScope {
    /// The target's n-hop view.
    #[default]
    Sub,
    /// The whole hypergraph.
    Full,
}

impl std::str::FromStr for SparsityScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sub" => Ok(SparsityScope::Sub),
            "full" => Ok(SparsityScope::Full),
            other => Err(Error::Config(format!("unknown sparsity scope `{other}` (expected sub or full)"))),
        }
    }
}

/// Fraction of records that found a counterfactual.
pub fn accuracy(records: &[ResultRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Config("accuracy over an empty node set".into()));
    }
    Ok(records.iter().filter(|r| r.found).count() as f64 / records.len() as f64)
}

/// Removed incidences (NHP) or removed hyperedges (HP).
pub fn explanation_size(result: &CounterfactualResult) -> usize {
    result.removal.len()
}

/// `1 − size / denominator`.
pub fn sparsity(size: usize, denominator: usize) -> Result<f64> {
    if denominator == 0 {
        return Err(Error::Config("sparsity denominator is zero".into()));
    }
    Ok(1.0 - size as f64 / denominator as f64)
}

/// Sparsity of a found record, `None` if nothing was found.
pub fn record_sparsity(record: &ResultRecord, scope: SparsityScope) -> Result<Option<f64>> {
    let denom = match scope {
        SparsityScope::Sub => record.denominators.sub,
        SparsityScope::Full => record.denominators.full,
    };
    record.size.filter(|_| record.found).map(|s| sparsity(s, denom)).transpose()
}

/// Mean and population standard deviation; `None` for no values.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub method: Method,
    pub variant: MaskVariant,
    pub sparsity_scope: SparsityScope,
    /// Always `"population"`.
    pub std_kind: String,
    pub num_records: usize,
    pub num_found: usize,
    pub accuracy: f64,
    pub sparsity_mean: Option<f64>,
    pub sparsity_std: Option<f64>,
    pub sparsity_full_mean: Option<f64>,
    pub sparsity_full_std: Option<f64>,
    pub size_mean: Option<f64>,
    pub size_std: Option<f64>,
    pub time_mean_s: f64,
    pub config: serde_json::Value,
}

/// Summary of a nonempty set of records from one dataset, method and variant.
///
/// `sparsity_mean`/`sparsity_std` use `scope`; the whole-hypergraph values
/// are always reported alongside.
pub fn aggregate(records: &[ResultRecord], scope: SparsityScope) -> Result<RunReport> {
    let first = records
        .first()
        .ok_or_else(|| Error::Config("cannot aggregate zero records".into()))?;
    if let Some(r) = records
        .iter()
        .find(|r| r.dataset != first.dataset || r.method != first.method || r.variant != first.variant)
    {
        return Err(Error::Config(format!(
            "mixed records: {}/{}/{} and {}/{}/{}",
            first.dataset, first.method, first.variant, r.dataset, r.method, r.variant
        )));
    }
    let found: Vec<&ResultRecord> = records.iter().filter(|r| r.found).collect();
    let sizes: Vec<f64> = found.iter().filter_map(|r| r.size).map(|s| s as f64).collect();
    let sparsities = |s: SparsityScope| -> Result<Vec<f64>> {
        found.iter().filter_map(|r| record_sparsity(r, s).transpose()).collect()
    };
    let sub = mean_std(&sparsities(SparsityScope::Sub)?);
    let full = mean_std(&sparsities(SparsityScope::Full)?);
    let chosen = match scope {
        SparsityScope::Sub => sub,
        SparsityScope::Full => full,
    };
    let size = mean_std(&sizes);
    let times: Vec<f64> = records.iter().map(|r| r.wall_time).collect();
    Ok(RunReport {
        dataset: first.dataset.clone(),
        method: first.method,
        variant: first.variant,
        sparsity_scope: scope,
        std_kind: "population".into(),
        num_records: records.len(),
        num_found: found.len(),
        accuracy: accuracy(records)?,
        sparsity_mean: chosen.map(|m| m.0),
        sparsity_std: chosen.map(|m| m.1),
        sparsity_full_mean: full.map(|m| m.0),
        sparsity_full_std: full.map(|m| m.1),
        size_mean: size.map(|m| m.0),
        size_std: size.map(|m| m.1),
        time_mean_s: mean_std(&times).map_or(0.0, |m| m.0),
        config: first.config.clone(),
    })
}

pub const CSV_HEADER: [&str; 9] = [
    "dataset",
    "method",
    "variant",
    "accuracy",
    "sparsity_mean",
    "sparsity_std",
    "size_mean",
    "size_std",
    "time_mean_s",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunReport {
    pub fn csv_fields(&self) -> [String; 9] {
        [
            self.dataset.clone(),
            self.method.to_string(),
            self.variant.to_string(),
            self.accuracy.to_string(),
            opt(self.sparsity_mean),
            opt(self.sparsity_std),
            opt(self.size_mean),
            opt(self.size_std),
            self.time_mean_s.to_string(),
        ]
    }
}

/// Report table with [`CSV_HEADER`] columns, one row per report.
pub fn reports_to_csv(reports: &[RunReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Internal(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in reports {
        w.write_record(r.csv_fields()).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

/// Counts of found explanation sizes, `size,count` rows in size order.
pub fn size_histogram_csv(records: &[ResultRecord]) -> String {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for s in records.iter().filter(|r| r.found).filter_map(|r| r.size) {
        *counts.entry(s).or_default() += 1;
    }
    let mut out = String::from("size,count\n");
    for (s, c) in counts {
        out.push_str(&format!("{s},{c}\n"));
    }
    out
}
