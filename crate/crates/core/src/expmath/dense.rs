//! Dense matrix exponential (Pade with scaling and squaring) and phi
//! functions via one exponential of a block-augmented matrix.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

// Pade numerator coefficients and degree-selection thresholds for the
// backward-stable scaling-and-squaring method (the standard double-precision
// table, same values MATLAB/SciPy ship).
const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068;
const THETA13: f64 = 5.371920351148152;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for c in a.column_iter() {
        let s: f64 = c.iter().map(|x| x.abs()).sum();
        worst = worst.max(s);
    }
    worst
}

/// (U, V) for a degree m in {3, 5, 7, 9} Pade approximant.
fn pade_low(a: &DMatrix<f64>, m: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let b: &[f64] = match m {
        3 => &B3,
        5 => &B5,
        7 => &B7,
        9 => &B9,
        _ => unreachable!("unsupported Pade degree {m}"),
    };
    let n = a.nrows();
    let half = (m + 1) / 2;
    let a2 = a * a;
    let mut powers: Vec<DMatrix<f64>> = Vec::with_capacity(half);
    powers.push(DMatrix::identity(n, n));
    for p in 1..half {
        let next = &powers[p - 1] * &a2;
        powers.push(next);
    }
    let mut u_inner = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for (k, pw) in powers.iter().enumerate() {
        u_inner += pw * b[2 * k + 1];
        v += pw * b[2 * k];
    }
    (a * u_inner, v)
}

/// (U, V) for the degree-13 Pade approximant using the economical power split.
fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = &a6 * B13[13] + &a4 * B13[11] + &a2 * B13[9];
    let u_lo = &a6 * B13[7] + &a4 * B13[5] + &a2 * B13[3] + &id * B13[1];
    let u = a * (&a6 * u_hi + u_lo);
    let v_hi = &a6 * B13[12] + &a4 * B13[10] + &a2 * B13[8];
    let v = &a6 * v_hi + &a6 * B13[6] + &a4 * B13[4] + &a2 * B13[2] + &id * B13[0];
    (u, v)
}

fn pade_solve(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rhs = &v + &u;
    (v - u)
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Pade denominator in expm".into()))
}

/// Matrix exponential of a square real matrix.
pub fn expm_dense(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "expm needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let nrm = one_norm(a);
    if !nrm.is_finite() {
        return Err(Error::Numerical("non-finite entries in expm input".into()));
    }
    if nrm <= THETA9 {
        let m = if nrm <= THETA3 {
            3
        } else if nrm <= THETA5 {
            5
        } else if nrm <= THETA7 {
            7
        } else {
            9
        };
        let (u, v) = pade_low(a, m);
        return pade_solve(u, v);
    }
    let s = if nrm <= THETA13 {
        0u32
    } else {
        (nrm / THETA13).log2().ceil() as u32
    };
    let scaled = a * (0.5f64).powi(s as i32);
    let (u, v) = pade13(&scaled);
    let mut x = pade_solve(u, v)?;
    for _ in 0..s {
        x = &x * &x;
    }
    Ok(x)
}

/// Largest matrix the dense phi routine accepts.
pub const PHI_DENSE_MAX_DIM: usize = 200;

/// Dense phi_k(A) for k in {0, 1, 2}; phi_0 = exp.
///
/// For k >= 1 the result is read off one exponential of the block matrix
/// [[A, B], [0, N]] with B = [I, 0, ...] and N the block-nilpotent shift:
/// the top-right block equals phi_k(A).
pub fn phi_dense(a: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "phi_dense needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if k > 2 {
        return Err(Error::Config(format!(
            "phi_dense supports k <= 2, got k = {k}"
        )));
    }
    if a.nrows() > PHI_DENSE_MAX_DIM {
        return Err(Error::Config(format!(
            "phi_dense supports n <= {PHI_DENSE_MAX_DIM}, got n = {}",
            a.nrows()
        )));
    }
    if k == 0 {
        return expm_dense(a);
    }
    let n = a.nrows();
    let dim = (k + 1) * n;
    let mut aug = DMatrix::zeros(dim, dim);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    for i in 0..n {
        aug[(i, n + i)] = 1.0;
    }
    for j in 0..k.saturating_sub(1) {
        for i in 0..n {
            aug[((j + 1) * n + i, (j + 2) * n + i)] = 1.0;
        }
    }
    let e = expm_dense(&aug)?;
    Ok(e.view((0, k * n), (n, n)).into_owned())
}

/// exp(dt H) e1 and phi_j(dt H) e1 for j = 1..=p from one exponential of the
/// (m + p)-dimensional augmented matrix. H is the small Hessenberg matrix of
/// an Arnoldi decomposition; p <= 3 in practice.
pub(crate) fn phi_chain(h: &DMatrix<f64>, dt: f64, p: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    debug_assert_eq!(h.nrows(), h.ncols());
    debug_assert!(p >= 1);
    let m = h.nrows();
    let dim = m + p;
    let mut aug = DMatrix::zeros(dim, dim);
    aug.view_mut((0, 0), (m, m)).copy_from(&(h * dt));
    aug[(0, m)] = 1.0;
    for j in 0..p - 1 {
        aug[(m + j, m + j + 1)] = 1.0;
    }
    let e = expm_dense(&aug)?;
    let exp_col: Vec<f64> = (0..m).map(|i| e[(i, 0)]).collect();
    let phi_cols: Vec<Vec<f64>> = (0..p)
        .map(|j| (0..m).map(|i| e[(i, m + j)]).collect())
        .collect();
    Ok((exp_col, phi_cols))
}
