//! Hypergraph convolutional classifier.
//!
//! Each convolution computes `σ(S · (X P))` with the symmetric operator
//! `S = D^{-1/2} H' W B^{-1} H'ᵀ D^{-1/2}`, where `H'` is the (optionally
//! masked) incidence and both degree matrices are recomputed from `H'`.
//! The convolutions are followed by a plain linear classifier.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::{spmm, spmm_t, Matrix, Pattern, Tape, Var};
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::seed::derive_seed;

/// Degrees below this are treated as zero in `D^{-1/2}` and `B^{-1}`.
pub const DEGREE_EPS: f64 = 1e-12;

pub const DEFAULT_HIDDEN: [usize; 3] = [64, 32, 32];
pub const DEFAULT_NEGATIVE_SLOPE: f64 = 0.01;

/// Node feature matrix, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures(pub Matrix);

impl NodeFeatures {
    pub fn num_nodes(&self) -> usize {
        self.0.rows()
    }

    pub fn num_features(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn select_rows(&self, rows: &[usize]) -> NodeFeatures {
        NodeFeatures(self.0.select_rows(rows))
    }
}

/// Activation applied after every convolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { negative_slope: f64 },
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::LeakyRelu { negative_slope } => Ok(tape.leaky_relu(x, negative_slope)?),
        }
    }
}

/// Frozen or trainable classifier parameters.
///
/// `layer_dims = [F⁰, h₁, …, h_L, C]`: weight `l < L` maps `layer_dims[l]` to
/// `layer_dims[l + 1]` and is followed by propagation; the last weight is
/// the linear classifier `h_L → C`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Matrix>,
    pub activation: Activation,
    pub dropout: f64,
    pub seed: u64,
}

impl ModelParams {
    /// Glorot-uniform initialisation.
    pub fn init(layer_dims: Vec<usize>, activation: Activation, dropout: f64, seed: u64) -> Result<Self> {
        if layer_dims.len() < 3 || layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!(
                "layer_dims needs at least one convolution and nonzero widths, got {layer_dims:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init"));
        let weights = layer_dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Matrix::from_fn(w[0], w[1], |_, _| rng.gen_range(-limit..limit))
            })
            .collect();
        Ok(Self {
            layer_dims,
            weights,
            activation,
            dropout,
            seed,
        })
    }

    /// Same architecture with every weight set to zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for w in &mut out.weights {
            *w = Matrix::zeros(w.rows(), w.cols());
        }
        out
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 2
    }

    pub fn num_features(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().expect("validated nonempty")
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 3 || self.weights.len() + 1 != self.layer_dims.len() {
            return Err(Error::Dimension(format!(
                "{} weights for layer_dims {:?}",
                self.weights.len(),
                self.layer_dims
            )));
        }
        for (l, (w, dims)) in self.weights.iter().zip(self.layer_dims.windows(2)).enumerate() {
            if w.shape() != (dims[0], dims[1]) {
                return Err(Error::Dimension(format!(
                    "weight {l} has shape {:?}, expected {:?}",
                    w.shape(),
                    (dims[0], dims[1])
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    fn check_inputs(&self, h: &Hypergraph, x: &NodeFeatures) -> Result<()> {
        if x.num_nodes() != h.num_nodes() {
            return Err(Error::Dimension(format!(
                "{} feature rows for {} nodes",
                x.num_nodes(),
                h.num_nodes()
            )));
        }
        if x.num_features() != self.num_features() {
            return Err(Error::Dimension(format!(
                "{} features, model expects {}",
                x.num_features(),
                self.num_features()
            )));
        }
        Ok(())
    }
}

/// Propagation operator recorded on a tape.
///
/// Applying it to `Z` evaluates `D^{-1/2} H' (W B^{-1}) H'ᵀ D^{-1/2} Z`
/// without materialising the N×N operator.
#[derive(Debug, Clone)]
pub struct Propagation {
    pattern: Arc<Pattern>,
    values: Var,
    node_scale: Var,
    edge_scale: Var,
}

impl Propagation {
    /// `values` holds the (masked) incidence entries, one per coordinate of
    /// `h`'s pattern; `None` means the clean incidence.
    pub fn record(tape: &mut Tape, h: &Hypergraph, values: Option<Var>) -> Result<Self> {
        let pattern = Arc::clone(h.pattern());
        let values = match values {
            Some(v) => v,
            None => tape.constant(Matrix::filled(pattern.nnz(), 1, 1.0)),
        };
        let weights = tape.constant(Matrix::column(h.edge_weights())?);
        let ones = tape.constant(Matrix::filled(h.num_nodes(), 1, 1.0));

        let node_deg = tape.spmm(&pattern, values, weights)?;
        let edge_deg = tape.spmm_t(&pattern, values, ones)?;
        let node_scale = tape.rsqrt(node_deg, DEGREE_EPS)?;
        let edge_rs = tape.rsqrt(edge_deg, DEGREE_EPS)?;
        let edge_inv = tape.mul(edge_rs, edge_rs)?;
        let edge_scale = tape.mul(edge_inv, weights)?;
        Ok(Self {
            pattern,
            values,
            node_scale,
            edge_scale,
        })
    }

    pub fn apply(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let z = tape.scale_rows(z, self.node_scale)?;
        let z = tape.spmm_t(&self.pattern, self.values, z)?;
        let z = tape.scale_rows(z, self.edge_scale)?;
        let z = tape.spmm(&self.pattern, self.values, z)?;
        Ok(tape.scale_rows(z, self.node_scale)?)
    }
}

/// Materialised propagation operator for inspection and spectral checks.
#[derive(Debug, Clone)]
pub struct PropagationOperator {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
    node_scale: Vec<f64>,
    edge_scale: Vec<f64>,
}

impl PropagationOperator {
    pub fn dim(&self) -> usize {
        self.pattern.rows()
    }

    /// `S z`, evaluated with the same kernels as the tape path.
    pub fn apply(&self, z: &Matrix) -> Result<Matrix> {
        let mut z = z.clone();
        scale_rows_in_place(&mut z, &self.node_scale);
        let mut z = spmm_t(&self.pattern, &self.values, &z)?;
        scale_rows_in_place(&mut z, &self.edge_scale);
        let mut z = spmm(&self.pattern, &self.values, &z)?;
        scale_rows_in_place(&mut z, &self.node_scale);
        Ok(z)
    }

    pub fn to_dense(&self) -> Result<Matrix> {
        self.apply(&Matrix::identity(self.dim()))
    }
}

fn scale_rows_in_place(z: &mut Matrix, s: &[f64]) {
    for (r, &f) in s.iter().enumerate() {
        for v in z.row_mut(r) {
            *v *= f;
        }
    }
}

/// Builds `S(Π)`. `mask` gives one value per incidence of `h` (in
/// [`Hypergraph::incidences`] order); `None` is the all-ones mask.
pub fn build_operator(h: &Hypergraph, mask: Option<&[f64]>) -> Result<PropagationOperator> {
    let mut tape = Tape::new();
    let values = mask
        .map(|m| -> Result<Var> { Ok(tape.constant(Matrix::column(m)?)) })
        .transpose()?;
    let prop = Propagation::record(&mut tape, h, values)?;
    Ok(PropagationOperator {
        pattern: Arc::clone(&prop.pattern),
        values: tape.value(prop.values).as_slice().to_vec(),
        node_scale: tape.value(prop.node_scale).as_slice().to_vec(),
        edge_scale: tape.value(prop.edge_scale).as_slice().to_vec(),
    })
}

/// Dropout settings for a training-mode forward pass.
pub struct DropoutState<'a> {
    pub prob: f64,
    pub rng: &'a mut ChaCha8Rng,
}

/// Runs the network from the first projection `X P⁰` onward.
///
/// `weights[0]` is only used by the caller to form `first`; it is passed in
/// full so indices line up with [`ModelParams::weights`].
pub fn forward_projected(
    tape: &mut Tape,
    prop: &Propagation,
    first: Var,
    weights: &[Var],
    activation: Activation,
    mut dropout: Option<DropoutState<'_>>,
) -> Result<Var> {
    let conv = weights.len() - 1;
    let mut z = first;
    for (l, &w) in weights.iter().enumerate().take(conv) {
        if l > 0 {
            z = tape.matmul(z, w)?;
        }
        z = prop.apply(tape, z)?;
        z = activation.apply(tape, z)?;
        if let Some(d) = dropout.as_mut() {
            if d.prob > 0.0 {
                let (r, c) = tape.value(z).shape();
                let keep = 1.0 / (1.0 - d.prob);
                let mask = Matrix::from_fn(r, c, |_, _| if d.rng.gen::<f64>() < d.prob { 0.0 } else { keep });
                z = tape.dropout(z, Arc::new(mask))?;
            }
        }
    }
    Ok(tape.matmul(z, weights[conv])?)
}

/// Output handles of a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub logits: Var,
    pub log_probs: Var,
    pub probs: Var,
}

/// Full forward pass recorded on `tape`.
///
/// `weights` are the tape handles for `p.weights` (leaves when training,
/// constants otherwise). `mask` holds per-incidence values as in
/// [`Propagation::record`].
pub fn forward(
    tape: &mut Tape,
    h: &Hypergraph,
    x: &NodeFeatures,
    p: &ModelParams,
    weights: &[Var],
    mask: Option<Var>,
    dropout: Option<DropoutState<'_>>,
) -> Result<ForwardOutput> {
    p.check_inputs(h, x)?;
    let features = tape.constant(x.0.clone());
    let first = tape.matmul(features, weights[0])?;
    let prop = Propagation::record(tape, h, mask)?;
    let logits = forward_projected(tape, &prop, first, weights, p.activation, dropout)?;
    let log_probs = tape.log_softmax_rows(logits)?;
    let probs = tape.softmax_rows(logits)?;
    Ok(ForwardOutput {
        logits,
        log_probs,
        probs,
    })
}

/// Evaluation-mode logits for every node.
pub fn logits(h: &Hypergraph, x: &NodeFeatures, p: &ModelParams, mask: Option<&[f64]>) -> Result<Matrix> {
    let mut tape = Tape::new();
    let weights: Vec<Var> = p.weights.iter().map(|w| tape.constant(w.clone())).collect();
    let mask = mask
        .map(|m| -> Result<Var> { Ok(tape.constant(Matrix::column(m)?)) })
        .transpose()?;
    let out = forward(&mut tape, h, x, p, &weights, mask, None)?;
    Ok(tape.value(out.logits).clone())
}

/// Evaluation-mode class probabilities for every node.
pub fn probabilities(h: &Hypergraph, x: &NodeFeatures, p: &ModelParams) -> Result<Matrix> {
    let mut tape = Tape::new();
    let weights: Vec<Var> = p.weights.iter().map(|w| tape.constant(w.clone())).collect();
    let out = forward(&mut tape, h, x, p, &weights, None, None)?;
    Ok(tape.value(out.probs).clone())
}

/// Predicted class (lowest index on ties) and probability vector for `node`.
pub fn predict(h: &Hypergraph, x: &NodeFeatures, p: &ModelParams, node: usize) -> Result<(usize, Vec<f64>)> {
    if node >= h.num_nodes() {
        return Err(Error::NodeOutOfRange {
            node,
            num_nodes: h.num_nodes(),
        });
    }
    let probs = probabilities(h, x, p)?;
    Ok((probs.argmax_row(node), probs.row(node).to_vec()))
}

/// Per-node membership in the transductive split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub hidden_dims: Vec<usize>,
    pub negative_slope: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            hidden_dims: DEFAULT_HIDDEN.to_vec(),
            negative_slope: DEFAULT_NEGATIVE_SLOPE,
            dropout: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden_dims must be nonempty and positive".into()));
        }
        Ok(())
    }
}

/// One row of the training log. Epoch 0 is the initialisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
}

fn split_accuracy(logits: &Matrix, labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let hits = nodes.iter().filter(|&&n| logits.argmax_row(n) == labels[n]).count();
    hits as f64 / nodes.len() as f64
}

fn eval_nll(logits: &Matrix, labels: &[usize], nodes: &[usize]) -> f64 {
    let mut total = 0.0;
    for &n in nodes {
        let row = logits.row(n);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[labels[n]];
    }
    total / nodes.len() as f64
}

/// Accuracy of `p` on the nodes carrying `which` split tag.
pub fn accuracy_on(h: &Hypergraph, x: &NodeFeatures, p: &ModelParams, labels: &[usize], splits: &[Split], which: Split) -> Result<f64> {
    let l = logits(h, x, p, None)?;
    let nodes: Vec<usize> = (0..h.num_nodes()).filter(|&n| splits[n] == which).collect();
    Ok(split_accuracy(&l, labels, &nodes))
}

/// Full-batch gradient descent on the mean negative log-likelihood of the
/// training nodes, with L2 weight decay added to the gradient.
pub fn train(h: &Hypergraph, x: &NodeFeatures, labels: &[usize], splits: &[Split], num_classes: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if labels.len() != h.num_nodes() || splits.len() != h.num_nodes() {
        return Err(Error::Dimension("labels/splits length must equal node count".into()));
    }
    let train_nodes: Vec<usize> = (0..h.num_nodes()).filter(|&n| splits[n] == Split::Train).collect();
    let val_nodes: Vec<usize> = (0..h.num_nodes()).filter(|&n| splits[n] == Split::Val).collect();
    if train_nodes.is_empty() {
        return Err(Error::InvalidDataset("empty training split".into()));
    }
    if let Some(&n) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::InvalidDataset(format!("label {n} >= num_classes {num_classes}")));
    }

    let mut dims = vec![x.num_features()];
    dims.extend(&cfg.hidden_dims);
    dims.push(num_classes);
    let activation = Activation::LeakyRelu {
        negative_slope: cfg.negative_slope,
    };
    let mut params = ModelParams::init(dims, activation, cfg.dropout, cfg.seed)?;
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "dropout"));
    let targets = Arc::new(train_nodes.iter().map(|&n| (n, labels[n])).collect::<Vec<_>>());
    let scale = -1.0 / train_nodes.len() as f64;

    let log_entry = |epoch: usize, params: &ModelParams| -> Result<EpochLog> {
        let l = logits(h, x, params, None)?;
        Ok(EpochLog {
            epoch,
            loss: eval_nll(&l, labels, &train_nodes),
            train_accuracy: split_accuracy(&l, labels, &train_nodes),
            val_accuracy: split_accuracy(&l, labels, &val_nodes),
        })
    };

    let mut log = vec![log_entry(0, &params)?];
    for epoch in 1..=cfg.epochs {
        let mut tape = Tape::new();
        let weights: Vec<Var> = params.weights.iter().map(|w| tape.leaf(w.clone())).collect();
        let dropout = DropoutState {
            prob: cfg.dropout,
            rng: &mut dropout_rng,
        };
        let out = forward(&mut tape, h, x, &params, &weights, None, Some(dropout))?;
        let picked = tape.gather(out.log_probs, Arc::clone(&targets))?;
        let total = tape.sum(picked)?;
        let loss = tape.scale(total, scale)?;
        let grads = tape.backward(loss)?;
        for (w, &v) in params.weights.iter_mut().zip(&weights) {
            let mut g = grads.get(v);
            g.axpy(cfg.weight_decay, w);
            w.axpy(-cfg.learning_rate, &g);
        }
        log.push(log_entry(epoch, &params)?);
    }
    Ok(TrainOutcome { params, log })
}
