//! Reverse-mode differentiation over whole matrices.
//!
//! A [`Tape`] is an append-only list of nodes. Every primitive evaluates
//! eagerly, stores its output, and records its operands so that
//! [`Tape::backward`] can walk the list in reverse and accumulate adjoints.
//! Nodes that depend on no leaf are recorded as constants and skipped
//! during the reverse sweep.

use std::sync::Arc;

use super::matrix::Matrix;
use super::sparse::{spmm, spmm_t, Pattern};
use crate::error::DiffError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    MatMul(Var, Var),
    /// Sparse (pattern, values) times dense; `transpose` applies `Aᵀ`.
    SpMM {
        pattern: Arc<Pattern>,
        values: Var,
        x: Var,
        transpose: bool,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Rsqrt(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    /// `x` (n×f) with row `i` multiplied by `s[i]` (`s` is n×1).
    ScaleRows(Var, Var),
    /// Picks the listed `(row, col)` entries into a k×1 column.
    Gather(Var, Arc<Vec<(usize, usize)>>),
    /// Elementwise product with a fixed dropout mask.
    Dropout(Var, Arc<Matrix>),
    Sum(Var),
    L1(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`; zero if `v` did not influence the output.
    pub fn get(&self, v: Var) -> Matrix {
        match self.grads.get(v.0) {
            Some(Some(g)) => g.clone(),
            _ => {
                let (r, c) = self.shapes.get(v.0).copied().unwrap_or((0, 0));
                Matrix::zeros(r, c)
            }
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check(op: &'static str, m: Matrix) -> Result<Matrix, DiffError> {
    if m.is_finite() {
        Ok(m)
    } else {
        Err(DiffError::NonFinite(op))
    }
}

fn same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<(), DiffError> {
    if a.shape() != b.shape() {
        return Err(DiffError::Shape {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

fn softmax_row(src: &[f64], dst: &mut [f64]) {
    let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = (s - max).exp();
        total += *d;
    }
    for d in dst.iter_mut() {
        *d /= total;
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> Result<&Node, DiffError> {
        self.nodes.get(v.0).ok_or(DiffError::ForeignVar(v.0))
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input, true)
    }

    /// Input that is never differentiated.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let out = self.node(a)?.value.matmul(&self.node(b)?.value)?;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(check("matmul", out)?, Op::MatMul(a, b), g))
    }

    /// `A x`, where `A` has the given pattern and the values stored in `values` (nnz×1).
    pub fn spmm(&mut self, pattern: &Arc<Pattern>, values: Var, x: Var) -> Result<Var, DiffError> {
        self.spmm_impl(pattern, values, x, false)
    }

    /// `Aᵀ x`.
    pub fn spmm_t(&mut self, pattern: &Arc<Pattern>, values: Var, x: Var) -> Result<Var, DiffError> {
        self.spmm_impl(pattern, values, x, true)
    }

    fn spmm_impl(&mut self, pattern: &Arc<Pattern>, values: Var, x: Var, transpose: bool) -> Result<Var, DiffError> {
        let vals = &self.node(values)?.value;
        if vals.cols() != 1 || vals.rows() != pattern.nnz() {
            return Err(DiffError::Shape {
                op: "spmm values",
                lhs: (pattern.nnz(), 1),
                rhs: vals.shape(),
            });
        }
        let xv = &self.node(x)?.value;
        let out = if transpose {
            spmm_t(pattern, vals.as_slice(), xv)?
        } else {
            spmm(pattern, vals.as_slice(), xv)?
        };
        let g = self.grad_of(&[values, x]);
        let op = Op::SpMM {
            pattern: Arc::clone(pattern),
            values,
            x,
            transpose,
        };
        Ok(self.push(check("spmm", out)?, op, g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (av, bv) = (&self.node(a)?.value, &self.node(b)?.value);
        same_shape("add", av, bv)?;
        let out = av.zip_map(bv, |x, y| x + y);
        let g = self.grad_of(&[a, b]);
        Ok(self.push(check("add", out)?, Op::Add(a, b), g))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (av, bv) = (&self.node(a)?.value, &self.node(b)?.value);
        same_shape("mul", av, bv)?;
        let out = av.zip_map(bv, |x, y| x * y);
        let g = self.grad_of(&[a, b]);
        Ok(self.push(check("mul", out)?, Op::Mul(a, b), g))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, DiffError> {
        let out = self.node(a)?.value.map(|x| c * x);
        let g = self.grad_of(&[a]);
        Ok(self.push(check("scale", out)?, Op::Scale(a, c), g))
    }

    /// `x^{-1/2}`, with entries below `eps` mapped to exactly zero.
    pub fn rsqrt(&mut self, a: Var, eps: f64) -> Result<Var, DiffError> {
        let out = self
            .node(a)?
            .value
            .map(|x| if x < eps { 0.0 } else { 1.0 / x.sqrt() });
        let g = self.grad_of(&[a]);
        Ok(self.push(check("rsqrt", out)?, Op::Rsqrt(a), g))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var, DiffError> {
        let out = self
            .node(a)?
            .value
            .map(|x| if x > 0.0 { x } else { slope * x });
        let g = self.grad_of(&[a]);
        Ok(self.push(check("leaky_relu", out)?, Op::LeakyRelu(a, slope), g))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, DiffError> {
        let out = self.node(a)?.value.map(sigmoid);
        let g = self.grad_of(&[a]);
        Ok(self.push(check("sigmoid", out)?, Op::Sigmoid(a), g))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, DiffError> {
        let av = &self.node(a)?.value;
        let mut out = Matrix::zeros(av.rows(), av.cols());
        for r in 0..av.rows() {
            softmax_row(av.row(r), out.row_mut(r));
        }
        let g = self.grad_of(&[a]);
        Ok(self.push(check("softmax_rows", out)?, Op::SoftmaxRows(a), g))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var, DiffError> {
        let av = &self.node(a)?.value;
        let mut out = Matrix::zeros(av.rows(), av.cols());
        for r in 0..av.rows() {
            let src = av.row(r);
            let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + src.iter().map(|&s| (s - max).exp()).sum::<f64>().ln();
            for (d, &s) in out.row_mut(r).iter_mut().zip(src) {
                *d = s - lse;
            }
        }
        let g = self.grad_of(&[a]);
        Ok(self.push(check("log_softmax_rows", out)?, Op::LogSoftmaxRows(a), g))
    }

    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var, DiffError> {
        let (xv, sv) = (&self.node(x)?.value, &self.node(s)?.value);
        if sv.cols() != 1 || sv.rows() != xv.rows() {
            return Err(DiffError::Shape {
                op: "scale_rows",
                lhs: xv.shape(),
                rhs: sv.shape(),
            });
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let f = sv.get(r, 0);
            for v in out.row_mut(r) {
                *v *= f;
            }
        }
        let g = self.grad_of(&[x, s]);
        Ok(self.push(check("scale_rows", out)?, Op::ScaleRows(x, s), g))
    }

    pub fn gather(&mut self, x: Var, entries: Arc<Vec<(usize, usize)>>) -> Result<Var, DiffError> {
        let xv = &self.node(x)?.value;
        if let Some(&(r, c)) = entries.iter().find(|&&(r, c)| r >= xv.rows() || c >= xv.cols()) {
            return Err(DiffError::Shape {
                op: "gather",
                lhs: xv.shape(),
                rhs: (r, c),
            });
        }
        let vals: Vec<f64> = entries.iter().map(|&(r, c)| xv.get(r, c)).collect();
        let out = Matrix::from_vec(vals.len(), 1, vals)?;
        let g = self.grad_of(&[x]);
        Ok(self.push(out, Op::Gather(x, entries), g))
    }

    pub fn dropout(&mut self, x: Var, mask: Arc<Matrix>) -> Result<Var, DiffError> {
        let xv = &self.node(x)?.value;
        same_shape("dropout", xv, &mask)?;
        let out = xv.zip_map(&mask, |a, m| a * m);
        let g = self.grad_of(&[x]);
        Ok(self.push(check("dropout", out)?, Op::Dropout(x, mask), g))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, DiffError> {
        let s = self.node(x)?.value.sum();
        let out = check("sum", Matrix::filled(1, 1, s))?;
        let g = self.grad_of(&[x]);
        Ok(self.push(out, Op::Sum(x), g))
    }

    pub fn l1(&mut self, x: Var) -> Result<Var, DiffError> {
        let s = self.node(x)?.value.as_slice().iter().map(|v| v.abs()).sum();
        let out = check("l1", Matrix::filled(1, 1, s))?;
        let g = self.grad_of(&[x]);
        Ok(self.push(out, Op::L1(x), g))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients, DiffError> {
        let out = self.node(output)?;
        if out.value.shape() != (1, 1) {
            let (r, c) = out.value.shape();
            return Err(DiffError::NotScalar(r, c));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &upstream, &mut grads)?;
            grads[idx] = Some(upstream);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        grads.resize(self.nodes.len(), None);
        // constants report zero
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, up: &Matrix, grads: &mut [Option<Matrix>]) -> Result<(), DiffError> {
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Input => {}
            Op::MatMul(a, b) => {
                if needs(*a) {
                    let ga = up.matmul_t(val(*b))?;
                    self.accumulate(grads, *a, ga);
                }
                if needs(*b) {
                    let gb = val(*a).t_matmul(up)?;
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::SpMM {
                pattern,
                values,
                x,
                transpose,
            } => {
                let vals = val(*values);
                let xv = val(*x);
                if needs(*x) {
                    let gx = if *transpose {
                        spmm(pattern, vals.as_slice(), up)?
                    } else {
                        spmm_t(pattern, vals.as_slice(), up)?
                    };
                    self.accumulate(grads, *x, gx);
                }
                if needs(*values) {
                    let mut gv = Matrix::zeros(pattern.nnz(), 1);
                    for (k, &(r, c)) in pattern.coords().iter().enumerate() {
                        let (u, w) = if *transpose {
                            (up.row(c), xv.row(r))
                        } else {
                            (up.row(r), xv.row(c))
                        };
                        gv.set(k, 0, u.iter().zip(w).map(|(a, b)| a * b).sum());
                    }
                    self.accumulate(grads, *values, gv);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, up.clone());
                self.accumulate(grads, *b, up.clone());
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    self.accumulate(grads, *a, up.zip_map(val(*b), |u, y| u * y));
                }
                if needs(*b) {
                    self.accumulate(grads, *b, up.zip_map(val(*a), |u, x| u * x));
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accumulate(grads, *a, up.map(|u| c * u));
            }
            Op::Rsqrt(a) => {
                // d/dx x^{-1/2} = -1/2 y^3; guarded entries have y = 0.
                let g = up.zip_map(&node.value, |u, y| -0.5 * u * y * y * y);
                self.accumulate(grads, *a, g);
            }
            Op::LeakyRelu(a, slope) => {
                let slope = *slope;
                let g = up.zip_map(val(*a), |u, x| if x > 0.0 { u } else { slope * u });
                self.accumulate(grads, *a, g);
            }
            Op::Sigmoid(a) => {
                let g = up.zip_map(&node.value, |u, y| u * y * (1.0 - y));
                self.accumulate(grads, *a, g);
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut g = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = up.row(r).iter().zip(y.row(r)).map(|(u, s)| u * s).sum();
                    for ((d, &u), &s) in g.row_mut(r).iter_mut().zip(up.row(r)).zip(y.row(r)) {
                        *d = s * (u - dot);
                    }
                }
                self.accumulate(grads, *a, g);
            }
            Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let mut g = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let total: f64 = up.row(r).iter().sum();
                    for ((d, &u), &ly) in g.row_mut(r).iter_mut().zip(up.row(r)).zip(y.row(r)) {
                        *d = u - ly.exp() * total;
                    }
                }
                self.accumulate(grads, *a, g);
            }
            Op::ScaleRows(x, s) => {
                let (xv, sv) = (val(*x), val(*s));
                if needs(*x) {
                    let mut g = up.clone();
                    for r in 0..g.rows() {
                        let f = sv.get(r, 0);
                        for v in g.row_mut(r) {
                            *v *= f;
                        }
                    }
                    self.accumulate(grads, *x, g);
                }
                if needs(*s) {
                    let g = Matrix::from_fn(sv.rows(), 1, |r, _| {
                        up.row(r).iter().zip(xv.row(r)).map(|(u, x)| u * x).sum()
                    });
                    self.accumulate(grads, *s, g);
                }
            }
            Op::Gather(x, entries) => {
                let xv = val(*x);
                let mut g = Matrix::zeros(xv.rows(), xv.cols());
                for (k, &(r, c)) in entries.iter().enumerate() {
                    let cur = g.get(r, c);
                    g.set(r, c, cur + up.get(k, 0));
                }
                self.accumulate(grads, *x, g);
            }
            Op::Dropout(x, mask) => {
                self.accumulate(grads, *x, up.zip_map(mask, |u, m| u * m));
            }
            Op::Sum(x) => {
                let xv = val(*x);
                self.accumulate(grads, *x, Matrix::filled(xv.rows(), xv.cols(), up.get(0, 0)));
            }
            Op::L1(x) => {
                let u = up.get(0, 0);
                let g = val(*x).map(|v| {
                    if v > 0.0 {
                        u
                    } else if v < 0.0 {
                        -u
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *x, g);
            }
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
