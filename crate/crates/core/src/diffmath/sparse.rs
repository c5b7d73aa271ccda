//! COO sparse matrices with a shared, immutable sparsity pattern.
//!
//! The pattern is kept separate from the values so that the perturbation
//! mask can be differentiated as a value vector over a fixed structure.

use std::sync::Arc;

use super::matrix::Matrix;
use crate::error::DiffError;

/// Sorted, deduplicated `(row, col)` coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    rows: usize,
    cols: usize,
    coords: Vec<(usize, usize)>,
}

impl Pattern {
    /// Builds a pattern, sorting the coordinates. Duplicates and
    /// out-of-range coordinates are rejected.
    pub fn new(rows: usize, cols: usize, mut coords: Vec<(usize, usize)>) -> Result<Self, DiffError> {
        coords.sort_unstable();
        for w in coords.windows(2) {
            if w[0] == w[1] {
                return Err(DiffError::Shape {
                    op: "pattern (duplicate)",
                    lhs: w[0],
                    rhs: w[1],
                });
            }
        }
        if let Some(&(r, c)) = coords.iter().find(|&&(r, c)| r >= rows || c >= cols) {
            return Err(DiffError::Shape {
                op: "pattern (out of range)",
                lhs: (r, c),
                rhs: (rows, cols),
            });
        }
        Ok(Self { rows, cols, coords })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }
}

/// Sparse matrix: a shared pattern plus one value per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(pattern: Arc<Pattern>, values: Vec<f64>) -> Result<Self, DiffError> {
        if values.len() != pattern.nnz() {
            return Err(DiffError::Shape {
                op: "sparse values",
                lhs: (pattern.nnz(), 1),
                rhs: (values.len(), 1),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DiffError::NonFinite("sparse values"));
        }
        Ok(Self { pattern, values })
    }

    /// Builds from unsorted triples; triples are sorted by coordinate.
    pub fn from_triples(rows: usize, cols: usize, mut triples: Vec<(usize, usize, f64)>) -> Result<Self, DiffError> {
        triples.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let coords = triples.iter().map(|&(r, c, _)| (r, c)).collect();
        let values = triples.into_iter().map(|(_, _, v)| v).collect();
        Self::new(Arc::new(Pattern::new(rows, cols, coords)?), values)
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.pattern.rows, self.pattern.cols)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.pattern.rows, self.pattern.cols);
        for (&(r, c), &v) in self.pattern.coords.iter().zip(&self.values) {
            out.set(r, c, v);
        }
        out
    }

    pub fn matmul(&self, x: &Matrix) -> Result<Matrix, DiffError> {
        spmm(&self.pattern, &self.values, x)
    }

    pub fn t_matmul(&self, x: &Matrix) -> Result<Matrix, DiffError> {
        spmm_t(&self.pattern, &self.values, x)
    }
}

/// `A x` where `A` has the given pattern and values.
pub fn spmm(pattern: &Pattern, values: &[f64], x: &Matrix) -> Result<Matrix, DiffError> {
    if pattern.cols != x.rows() || values.len() != pattern.nnz() {
        return Err(DiffError::Shape {
            op: "spmm",
            lhs: (pattern.rows, pattern.cols),
            rhs: x.shape(),
        });
    }
    let mut out = Matrix::zeros(pattern.rows, x.cols());
    for (&(r, c), &v) in pattern.coords.iter().zip(values) {
        if v == 0.0 {
            continue;
        }
        let src = x.row(c);
        for (o, &s) in out.row_mut(r).iter_mut().zip(src) {
            *o += v * s;
        }
    }
    Ok(out)
}

/// `Aᵀ x` where `A` has the given pattern and values.
pub fn spmm_t(pattern: &Pattern, values: &[f64], x: &Matrix) -> Result<Matrix, DiffError> {
    if pattern.rows != x.rows() || values.len() != pattern.nnz() {
        return Err(DiffError::Shape {
            op: "spmm_t",
            lhs: (pattern.cols, pattern.rows),
            rhs: x.shape(),
        });
    }
    let mut out = Matrix::zeros(pattern.cols, x.cols());
    for (&(r, c), &v) in pattern.coords.iter().zip(values) {
        if v == 0.0 {
            continue;
        }
        let src = x.row(r);
        for (o, &s) in out.row_mut(c).iter_mut().zip(src) {
            *o += v * s;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sparse_times_dense_is_zero() {
        let a = SparseMatrix::from_triples(3, 2, vec![]).unwrap();
        let x = Matrix::filled(2, 4, 1.5);
        let y = a.matmul(&x).unwrap();
        assert_eq!(y, Matrix::zeros(3, 4));
    }

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        assert!(Pattern::new(2, 2, vec![(0, 1), (0, 1)]).is_err());
        assert!(Pattern::new(2, 2, vec![(2, 0)]).is_err());
        assert!(SparseMatrix::from_triples(2, 2, vec![(0, 0, f64::INFINITY)]).is_err());
    }

    #[test]
    fn sorted_on_construction() {
        let a = SparseMatrix::from_triples(2, 2, vec![(1, 0, 2.0), (0, 1, 3.0)]).unwrap();
        assert_eq!(a.pattern().coords(), &[(0, 1), (1, 0)]);
        assert_eq!(a.values(), &[3.0, 2.0]);
    }
}
