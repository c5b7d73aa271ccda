//! C interface to `hyperexplain`.
//!
//! Objects are opaque handles created by `hx_*_load`/`hx_train`/`hx_explain`
//! and released with the matching `*_free`. Every fallible call returns an
//! `HX_*` status; on failure `hx_last_error` describes the cause for the
//! calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hyperexplain::dataset::{self, DatasetBundle};
use hyperexplain::explainer::{explain_detailed, ExplainConfig, ExplainOutcome, MaskVariant, Removal, SearchScope};
use hyperexplain::{baselines, checkpoint, model, Error, ModelParams, NodeFeatures, TrainConfig};

pub const HX_OK: i32 = 0;
pub const HX_ERR_NULL: i32 = 1;
pub const HX_ERR_ARGUMENT: i32 = 2;
pub const HX_ERR_DATA: i32 = 3;
pub const HX_ERR_NUMERIC: i32 = 4;
pub const HX_ERR_NOTHING_TUNABLE: i32 = 5;
pub const HX_ERR_INTERNAL: i32 = 6;
pub const HX_ERR_PANIC: i32 = 7;

pub const HX_VARIANT_NHP: i32 = 0;
pub const HX_VARIANT_HP: i32 = 1;

/// Marks the node slot of a hyperedge removal.
pub const HX_NO_NODE: usize = !0;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::NodeOutOfRange { .. } => HX_ERR_ARGUMENT,
        Error::Numeric(_) => HX_ERR_NUMERIC,
        Error::NothingTunable(_) => HX_ERR_NOTHING_TUNABLE,
        Error::Internal(_) => HX_ERR_INTERNAL,
        _ => HX_ERR_DATA,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (i32, String)>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HX_OK,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("panic inside hyperexplain".into());
            HX_ERR_PANIC
        }
    }
}

fn lib_err(e: Error) -> (i32, String) {
    (status_of(&e), e.to_string())
}

fn null_err(what: &str) -> (i32, String) {
    (HX_ERR_NULL, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (i32, String)> {
    if p.is_null() {
        return Err(null_err(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (HX_ERR_ARGUMENT, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (i32, String)> {
    p.as_mut().ok_or_else(|| null_err(what))
}

unsafe fn in_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, (i32, String)> {
    p.as_ref().ok_or_else(|| null_err(what))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// A dataset together with its hypergraph and dense features.
pub struct HxDataset {
    bundle: DatasetBundle,
    hypergraph: hyperexplain::Hypergraph,
    features: NodeFeatures,
}

pub struct HxModel {
    params: ModelParams,
}

pub struct HxExplanation {
    outcome: ExplainOutcome,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HxExplainOptions {
    pub iterations: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta: f64,
    pub threshold: f64,
    /// 0 means the model's convolution count.
    pub hops: usize,
    /// Optimise over the whole hypergraph instead of the n-hop view.
    pub full_scope: bool,
}

impl HxExplainOptions {
    fn config(&self) -> ExplainConfig {
        ExplainConfig {
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            beta: self.beta,
            threshold: self.threshold,
            hops: (self.hops > 0).then_some(self.hops),
            scope: if self.full_scope { SearchScope::Full } else { SearchScope::View },
            seed: 0,
        }
    }
}

#[no_mangle]
pub extern "C" fn hx_explain_options_default() -> HxExplainOptions {
    let d = ExplainConfig::default();
    HxExplainOptions {
        iterations: d.iterations,
        learning_rate: d.learning_rate,
        momentum: d.momentum,
        beta: d.beta,
        threshold: d.threshold,
        hops: 0,
        full_scope: false,
    }
}

/// Loads a dataset file (format v1).
#[no_mangle]
pub unsafe extern "C" fn hx_dataset_load(path: *const c_char, out: *mut *mut HxDataset) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let bundle = dataset::load(path_arg(path, "path")?).map_err(lib_err)?;
        let hypergraph = bundle.hypergraph().map_err(lib_err)?;
        let features = bundle.node_features();
        *out = Box::into_raw(Box::new(HxDataset {
            bundle,
            hypergraph,
            features,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hx_dataset_free(d: *mut HxDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Node count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hx_dataset_num_nodes(d: *const HxDataset) -> usize {
    d.as_ref().map_or(0, |d| d.bundle.num_nodes)
}

/// Trains with default settings apart from `epochs` and `seed`.
#[no_mangle]
pub unsafe extern "C" fn hx_train(d: *const HxDataset, epochs: usize, seed: u64, out: *mut *mut HxModel) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let d = in_arg(d, "dataset")?;
        let cfg = TrainConfig {
            epochs,
            seed,
            ..TrainConfig::default()
        };
        let t = model::train(&d.hypergraph, &d.features, &d.bundle.labels, &d.bundle.splits, d.bundle.num_classes, &cfg)
            .map_err(lib_err)?;
        *out = Box::into_raw(Box::new(HxModel { params: t.params }));
        Ok(())
    })
}

/// Loads a checkpoint (format v1).
#[no_mangle]
pub unsafe extern "C" fn hx_model_load(path: *const c_char, out: *mut *mut HxModel) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let params = checkpoint::load(path_arg(path, "path")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(HxModel { params }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hx_model_save(m: *const HxModel, path: *const c_char) -> i32 {
    guard(|| {
        let m = in_arg(m, "model")?;
        checkpoint::save(&m.params, path_arg(path, "path")?).map_err(lib_err)
    })
}

#[no_mangle]
pub unsafe extern "C" fn hx_model_free(m: *mut HxModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Predicted class of `node` on the unedited hypergraph.
#[no_mangle]
pub unsafe extern "C" fn hx_predict(d: *const HxDataset, m: *const HxModel, node: usize, out_class: *mut usize) -> i32 {
    guard(|| {
        let out = out_arg(out_class, "out_class")?;
        let (d, m) = (in_arg(d, "dataset")?, in_arg(m, "model")?);
        *out = model::predict(&d.hypergraph, &d.features, &m.params, node).map_err(lib_err)?.0;
        Ok(())
    })
}

/// Runs the explainer for one node. `options` may be null for defaults.
/// A search that finds nothing still succeeds; query it with
/// `hx_explanation_found`.
#[no_mangle]
pub unsafe extern "C" fn hx_explain(
    d: *const HxDataset,
    m: *const HxModel,
    node: usize,
    variant: i32,
    options: *const HxExplainOptions,
    out: *mut *mut HxExplanation,
) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let (d, m) = (in_arg(d, "dataset")?, in_arg(m, "model")?);
        let variant = match variant {
            HX_VARIANT_NHP => MaskVariant::Nhp,
            HX_VARIANT_HP => MaskVariant::Hp,
            v => return Err((HX_ERR_ARGUMENT, format!("unknown variant {v}"))),
        };
        let opts = options.as_ref().copied().unwrap_or_else(|| hx_explain_options_default());
        let outcome =
            explain_detailed(&d.hypergraph, &d.features, &m.params, node, variant, &opts.config()).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(HxExplanation { outcome }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hx_explanation_free(e: *mut HxExplanation) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// 1 if a counterfactual was found, 0 if not or for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hx_explanation_found(e: *const HxExplanation) -> i32 {
    e.as_ref().map_or(0, |e| i32::from(e.outcome.result.is_some()))
}

/// Prediction on the unedited hypergraph.
#[no_mangle]
pub unsafe extern "C" fn hx_explanation_original_class(e: *const HxExplanation) -> usize {
    e.as_ref().map_or(0, |e| e.outcome.original_class)
}

/// Prediction after the removal, or `HX_NO_NODE` when nothing was found.
#[no_mangle]
pub unsafe extern "C" fn hx_explanation_new_class(e: *const HxExplanation) -> usize {
    e.as_ref()
        .and_then(|e| e.outcome.result.as_ref())
        .map_or(HX_NO_NODE, |r| r.new_class)
}

/// Number of removed incidences (NHP) or hyperedges (HP); 0 if none found.
#[no_mangle]
pub unsafe extern "C" fn hx_explanation_size(e: *const HxExplanation) -> usize {
    e.as_ref()
        .and_then(|e| e.outcome.result.as_ref())
        .map_or(0, |r| r.size)
}

#[no_mangle]
pub unsafe extern "C" fn hx_explanation_found_at_iteration(e: *const HxExplanation) -> usize {
    e.as_ref()
        .and_then(|e| e.outcome.result.as_ref())
        .map_or(0, |r| r.found_at_iteration)
}

#[no_mangle]
pub unsafe extern "C" fn hx_explanation_wall_time(e: *const HxExplanation) -> f64 {
    e.as_ref().map_or(0.0, |e| e.outcome.wall_time)
}

/// The `index`-th removal. Incidence removals fill both slots; hyperedge
/// removals set `*out_node` to `HX_NO_NODE`.
#[no_mangle]
pub unsafe extern "C" fn hx_explanation_removal_at(
    e: *const HxExplanation,
    index: usize,
    out_node: *mut usize,
    out_edge: *mut usize,
) -> i32 {
    guard(|| {
        let e = in_arg(e, "explanation")?;
        let (node, edge) = (out_arg(out_node, "out_node")?, out_arg(out_edge, "out_edge")?);
        let removal = e
            .outcome
            .result
            .as_ref()
            .map(|r| &r.removal)
            .ok_or((HX_ERR_ARGUMENT, "no counterfactual was found".to_string()))?;
        let pair = match removal {
            Removal::Incidences(v) => v.get(index).copied(),
            Removal::Edges(v) => v.get(index).map(|&e| (HX_NO_NODE, e)),
        };
        let (n, ed) = pair.ok_or_else(|| (HX_ERR_ARGUMENT, format!("removal index {index} out of range")))?;
        *node = n;
        *edge = ed;
        Ok(())
    })
}

/// JSON rendering of the explanation; release with `hx_string_free`.
/// Returns null on failure.
#[no_mangle]
pub unsafe extern "C" fn hx_explanation_to_json(e: *const HxExplanation) -> *mut c_char {
    let mut out = ptr::null_mut();
    let status = guard(|| {
        let e = in_arg(e, "explanation")?;
        let o = &e.outcome;
        let v = serde_json::json!({
            "target": o.target,
            "original_class": o.original_class,
            "found": o.result.is_some(),
            "result": o.result,
            "wall_time": o.wall_time,
        });
        let s = CString::new(v.to_string()).map_err(|e| (HX_ERR_INTERNAL, e.to_string()))?;
        out = s.into_raw();
        Ok(())
    });
    if status == HX_OK {
        out
    } else {
        ptr::null_mut()
    }
}

#[no_mangle]
pub unsafe extern "C" fn hx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Probability that `attempts` random removals hit one particular subset
/// of `degree` entries.
#[no_mangle]
pub extern "C" fn hx_bernoulli_lower_bound(degree: u32, attempts: u64) -> f64 {
    baselines::bernoulli_lower_bound(degree, attempts)
}
