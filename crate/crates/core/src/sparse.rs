//! Minimal sparse kernel: CSR matrices and a symmetric banded Cholesky.
//!
//! Structured rectangle meshes produce matrices with a small fixed bandwidth,
//! so a banded Cholesky covers every linear solve in the code (mass solves).
//! The CSR type supports a frozen sparsity pattern with slot lookup so that
//! time-dependent stiffness matrices can be refilled in place each step
//! without reallocating or re-sorting.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from (row, col, value) triplets.
    /// Duplicate entries are summed; rows end up with sorted columns.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::Dimension(format!(
                    "triplet ({i}, {j}) outside {n_rows}x{n_cols} matrix"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|&(i, j, _)| (i, j));

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds a zero-valued matrix with a frozen sparsity pattern from the
    /// given (row, col) pairs. Duplicates collapse to a single slot.
    pub fn pattern_from_pairs(
        n_rows: usize,
        n_cols: usize,
        mut pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        for &(i, j) in &pairs {
            if i >= n_rows || j >= n_cols {
                return Err(Error::Dimension(format!(
                    "pattern entry ({i}, {j}) outside {n_rows}x{n_cols} matrix"
                )));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(pairs.len());
        for &(i, j) in &pairs {
            col_idx.push(j);
            row_ptr[i + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let values = vec![0.0; col_idx.len()];
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Index of the stored entry (i, j) in the value array, if present.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .binary_search(&j)
            .ok()
            .map(|off| lo + off)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.values[s])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn set_zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// y = A x.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols, "matvec input length");
        assert_eq!(y.len(), self.n_rows, "matvec output length");
        for i in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// Maximum absolute asymmetry max |a_ij - a_ji|; zero pattern entries count.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Half-bandwidth: max |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0usize;
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                bw = bw.max(self.col_idx[k].abs_diff(i));
            }
        }
        bw
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }
}

/// Cholesky factorization A = L L^T of a symmetric positive definite matrix
/// stored by bands. Fill-in stays inside the band, so the factor reuses the
/// same layout: `band[i * (bw + 1) + d]` holds L[i, i - d].
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandCholesky {
    /// Factors a symmetric positive definite CSR matrix.
    /// Only the lower triangle is read; symmetry is the caller's invariant.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.n_rows() != a.n_cols() {
            return Err(Error::Dimension(format!(
                "cannot factor {}x{} matrix",
                a.n_rows(),
                a.n_cols()
            )));
        }
        let n = a.n_rows();
        let bw = a.bandwidth();
        let stride = bw + 1;
        let mut band = vec![0.0; n * stride];
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[k];
                if j <= i {
                    band[i * stride + (i - j)] = a.values[k];
                }
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = band[i * stride + (i - j)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= band[i * stride + (i - k)] * band[j * stride + (j - k)];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::Numerical(format!(
                            "matrix is not positive definite (pivot {s:.3e} at row {i})"
                        )));
                    }
                    band[i * stride] = s.sqrt();
                } else {
                    band[i * stride + (i - j)] = s / band[j * stride];
                }
            }
        }
        Ok(Self { n, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves A x = b in place.
    pub fn solve_into(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n, "solve rhs length");
        let stride = self.bw + 1;
        // Forward substitution L y = b.
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = b[i];
            for j in lo..i {
                s -= self.band[i * stride + (i - j)] * b[j];
            }
            b[i] = s / self.band[i * stride];
        }
        // Back substitution L^T x = y.
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut s = b[i];
            for j in (i + 1)..=hi {
                s -= self.band[j * stride + (j - i)] * b[j];
            }
            b[i] = s / self.band[i * stride];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_into(&mut x);
        x
    }
}
