//! Matrix exponential and phi-function actions.
//!
//! Dense routines (`expm_dense`, `phi_dense`) serve small systems and act as
//! oracles. Large operators are only touched through [`LinearOp`] matvecs;
//! `expm_apply` / `phi1_apply` / `phi2_apply` project onto a Krylov subspace,
//! evaluate the phi function on the small Hessenberg matrix, and sub-step on
//! non-convergence.

mod dense;
mod krylov;

pub use dense::{expm_dense, phi_dense, PHI_DENSE_MAX_DIM};
pub use krylov::{
    arnoldi, expm_apply, phi1_apply, phi2_apply, ApplyOutcome, ArnoldiDecomp, KrylovInfo,
};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use nalgebra::DMatrix;

/// Matrix-free linear operator: everything the Krylov routines need.
pub trait LinearOp {
    fn dim(&self) -> usize;

    /// y = A x. Both slices have length `dim()`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOp for CsrMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.n_rows(), self.n_cols());
        self.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y);
    }
}

impl LinearOp for DMatrix<f64> {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let xv = nalgebra::DVector::from_column_slice(x);
        let yv = self * xv;
        y.copy_from_slice(yv.as_slice());
    }
}

/// Diagonal operator.
#[derive(Debug, Clone)]
pub struct DiagOp(pub Vec<f64>);

impl LinearOp for DiagOp {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..x.len() {
            y[i] = self.0[i] * x[i];
        }
    }
}

/// Base operator plus a diagonal shift: (A + diag(d)) x.
/// This is how the linearized operator A + J is applied without forming it.
pub struct ShiftedOp<'a> {
    base: &'a dyn LinearOp,
    diag: &'a [f64],
}

impl<'a> ShiftedOp<'a> {
    pub fn new(base: &'a dyn LinearOp, diag: &'a [f64]) -> Self {
        assert_eq!(base.dim(), diag.len(), "diagonal shift length");
        Self { base, diag }
    }
}

impl LinearOp for ShiftedOp<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.base.apply(x, y);
        for i in 0..x.len() {
            y[i] += self.diag[i] * x[i];
        }
    }
}

/// Materializes an operator column by column. Test and oracle use only.
pub fn densify(l: &dyn LinearOp) -> DMatrix<f64> {
    let n = l.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        l.apply(&e, &mut col);
        e[j] = 0.0;
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    m
}

/// Settings for the Krylov phi-applications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovConfig {
    /// Relative tolerance for the a-posteriori error estimate.
    pub tol: f64,
    /// Subspace dimension cap; exceeding it triggers sub-stepping.
    pub max_dim: usize,
    /// Smallest subspace dimension at which convergence may be declared.
    pub min_dim: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_dim: 100,
            min_dim: 2,
        }
    }
}

impl KrylovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!(
                "krylov tol must lie in (0, 1), got {}",
                self.tol
            )));
        }
        if self.min_dim < 2 || self.max_dim < self.min_dim {
            return Err(Error::Config(format!(
                "krylov dims must satisfy 2 <= min_dim <= max_dim, got min {} max {}",
                self.min_dim, self.max_dim
            )));
        }
        Ok(())
    }
}
