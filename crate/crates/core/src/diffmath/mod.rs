//! Dense and sparse `f64` kernels with a small reverse-mode tape.

mod matrix;
mod sparse;
mod tape;

pub use matrix::Matrix;
pub use sparse::{spmm, spmm_t, Pattern, SparseMatrix};
pub use tape::{sigmoid, Gradients, Tape, Var};
