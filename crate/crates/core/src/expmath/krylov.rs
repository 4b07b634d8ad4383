//! Arnoldi decomposition and Krylov approximations of exp/phi actions.
//!
//! One inner solve projects the operator onto a Krylov subspace and evaluates
//! the required phi function on the small Hessenberg matrix. The error
//! estimate is the first omitted term of the residual expansion
//! beta h_{m+1,m} dt (e_m^T phi_{k+1}(dt H) e1); that term is also added to
//! the result as a cheap refinement. If the estimate never meets the
//! tolerance within the subspace cap, the time increment is halved and the
//! action is composed from sub-steps, up to a fixed recursion depth.

use super::dense::phi_chain;
use super::{KrylovConfig, LinearOp};
use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Recursion limit for halving dt on non-convergence.
const MAX_SUBSTEP_DEPTH: u32 = 6;
/// Happy-breakdown threshold, relative to the candidate norm before
/// orthogonalization.
const BREAKDOWN_REL: f64 = 1e-13;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Incremental Arnoldi with modified Gram-Schmidt and one extra
/// reorthogonalization pass.
struct ArnoldiIter<'a> {
    l: &'a dyn LinearOp,
    basis: Vec<Vec<f64>>,
    /// Column j holds the j + 2 entries h_{1..j+2, j+1} (1-based).
    h_cols: Vec<Vec<f64>>,
    breakdown: Option<usize>,
}

impl<'a> ArnoldiIter<'a> {
    /// Returns the iterator and the norm of the start vector.
    fn new(l: &'a dyn LinearOp, v: &[f64]) -> Result<(Self, f64)> {
        if v.len() != l.dim() {
            return Err(Error::Dimension(format!(
                "Arnoldi start vector has length {}, operator dimension is {}",
                v.len(),
                l.dim()
            )));
        }
        let beta = norm2(v);
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::Numerical(
                "Arnoldi starting vector is zero or non-finite".into(),
            ));
        }
        let v0: Vec<f64> = v.iter().map(|x| x / beta).collect();
        Ok((
            Self {
                l,
                basis: vec![v0],
                h_cols: Vec::new(),
                breakdown: None,
            },
            beta,
        ))
    }

    fn steps(&self) -> usize {
        self.h_cols.len()
    }

    /// Runs one step; returns the new h_{k+1,k}, or None when the iteration
    /// cannot continue (breakdown already recorded, or full dimension).
    fn advance(&mut self) -> Option<f64> {
        if self.breakdown.is_some() || self.steps() == self.l.dim() {
            return None;
        }
        let k = self.steps();
        let n = self.l.dim();
        let mut w = vec![0.0; n];
        self.l.apply(&self.basis[k], &mut w);
        let pre_norm = norm2(&w);
        let mut col = vec![0.0; k + 2];
        for _pass in 0..2 {
            for (i, vi) in self.basis.iter().enumerate() {
                let hij = dot(&w, vi);
                for (wx, vx) in w.iter_mut().zip(vi) {
                    *wx -= hij * vx;
                }
                col[i] += hij;
            }
        }
        let hnext = norm2(&w);
        col[k + 1] = hnext;
        self.h_cols.push(col);
        if hnext <= BREAKDOWN_REL * pre_norm || hnext == 0.0 {
            self.breakdown = Some(k + 1);
        } else {
            for wx in w.iter_mut() {
                *wx /= hnext;
            }
            self.basis.push(w);
        }
        Some(hnext)
    }

    /// Leading k x k block of the Hessenberg matrix.
    fn h_square(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(k, k, |i, j| {
            if i < self.h_cols[j].len() {
                self.h_cols[j][i]
            } else {
                0.0
            }
        })
    }

    /// h_{k+1,k}.
    fn h_next(&self, k: usize) -> f64 {
        self.h_cols[k - 1][k]
    }

    /// beta * V_k y for y of length k.
    fn combo(&self, y: &[f64], beta: f64) -> Vec<f64> {
        let mut w = vec![0.0; self.l.dim()];
        for (yi, vi) in y.iter().zip(&self.basis) {
            let c = beta * yi;
            for (wx, vx) in w.iter_mut().zip(vi) {
                *wx += c * vx;
            }
        }
        w
    }
}

/// Result of [`arnoldi`].
pub struct ArnoldiDecomp {
    /// Orthonormal basis vectors; k + 1 of them, or k after a breakdown.
    pub basis: Vec<Vec<f64>>,
    /// Extended Hessenberg matrix, (k + 1) x k; the bottom-right entry is
    /// h_{k+1,k} (zero after a breakdown).
    pub h: DMatrix<f64>,
    /// Step count at which the subspace became invariant, if it did.
    pub breakdown: Option<usize>,
}

/// Runs m Arnoldi steps from v (fewer on breakdown or full dimension).
pub fn arnoldi(l: &dyn LinearOp, v: &[f64], m: usize) -> Result<ArnoldiDecomp> {
    if m == 0 {
        return Err(Error::Config("Arnoldi needs at least one step".into()));
    }
    let (mut it, _beta) = ArnoldiIter::new(l, v)?;
    for _ in 0..m {
        if it.advance().is_none() {
            break;
        }
    }
    let k = it.steps();
    let h = DMatrix::from_fn(k + 1, k, |i, j| {
        if i < it.h_cols[j].len() {
            it.h_cols[j][i]
        } else {
            0.0
        }
    });
    Ok(ArnoldiDecomp {
        basis: it.basis,
        h,
        breakdown: it.breakdown,
    })
}

/// Accounting across one apply call, including sub-steps.
#[derive(Debug, Clone, Copy, Default)]
pub struct KrylovInfo {
    /// Largest subspace dimension any inner solve used.
    pub max_dim: usize,
    /// Number of accepted inner solves (1 means no sub-stepping).
    pub substeps: usize,
    /// Sum of the inner a-posteriori error estimates.
    pub error_est: f64,
}

/// Result vector plus solve accounting.
#[derive(Debug, Clone)]
pub struct ApplyOutcome {
    pub w: Vec<f64>,
    pub info: KrylovInfo,
}

struct Once {
    w: Vec<f64>,
    est: f64,
    dim: usize,
}

/// One projection attempt for phi_{k_phi}(dt L) v. Ok(None) means the
/// estimate never met tol within the subspace cap.
fn krylov_phi_once(
    l: &dyn LinearOp,
    dt: f64,
    v: &[f64],
    k_phi: usize,
    tol: f64,
    cfg: &KrylovConfig,
) -> Result<Option<Once>> {
    let n = l.dim();
    let (mut it, beta) = ArnoldiIter::new(l, v)?;
    let m_cap = cfg.max_dim.min(n);
    let mut next_check = cfg.min_dim.min(m_cap);
    loop {
        let stepped = it.advance().is_some();
        let j = it.steps();
        let exact = it.breakdown.is_some() || j == n;
        let terminal = !stepped || exact || j == m_cap;
        if terminal || j >= next_check {
            let h = it.h_square(j);
            let (exp_col, phi_cols) = phi_chain(&h, dt, k_phi + 1)?;
            let y = if k_phi == 0 {
                &exp_col
            } else {
                &phi_cols[k_phi - 1]
            };
            if exact {
                // Invariant subspace: the projected action is exact.
                return Ok(Some(Once {
                    w: it.combo(y, beta),
                    est: 0.0,
                    dim: j,
                }));
            }
            let coeff = beta * it.h_next(j) * dt * phi_cols[k_phi].last().unwrap();
            if coeff.abs() <= tol * beta {
                let mut w = it.combo(y, beta);
                let vnext = it.basis.last().unwrap();
                for (wx, vx) in w.iter_mut().zip(vnext) {
                    *wx += coeff * vx;
                }
                return Ok(Some(Once {
                    w,
                    est: coeff.abs(),
                    dim: j,
                }));
            }
            if terminal {
                return Ok(None);
            }
            next_check = (j * 2).min(m_cap);
        }
    }
}

struct Stats {
    max_dim: usize,
    leaves: usize,
    est: f64,
}

impl Stats {
    fn record(&mut self, o: &Once) {
        self.max_dim = self.max_dim.max(o.dim);
        self.leaves += 1;
        self.est += o.est;
    }
}

fn no_convergence(dt: f64, cfg: &KrylovConfig) -> Error {
    Error::KrylovNoConvergence(format!(
        "estimate above tolerance at subspace cap {} after {} halvings (leaf dt = {dt:.3e})",
        cfg.max_dim, MAX_SUBSTEP_DEPTH
    ))
}

/// e^{dt L} v with sub-step composition e^{dt L} = (e^{dt L / 2})^2.
fn exp_rec(
    l: &dyn LinearOp,
    dt: f64,
    v: &[f64],
    tol: f64,
    depth: u32,
    cfg: &KrylovConfig,
    stats: &mut Stats,
) -> Result<Vec<f64>> {
    if norm2(v) == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    match krylov_phi_once(l, dt, v, 0, tol, cfg)? {
        Some(o) => {
            stats.record(&o);
            Ok(o.w)
        }
        None if depth < MAX_SUBSTEP_DEPTH => {
            let half = exp_rec(l, 0.5 * dt, v, 0.5 * tol, depth + 1, cfg, stats)?;
            exp_rec(l, 0.5 * dt, &half, 0.5 * tol, depth + 1, cfg, stats)
        }
        None => Err(no_convergence(dt, cfg)),
    }
}

/// W(dt) = dt phi_1(dt L) v, the solution at dt of W' = L W + v, W(0) = 0.
/// Sub-step composition: W(dt) = e^{dt L / 2} W(dt/2) + W(dt/2).
fn w1_rec(
    l: &dyn LinearOp,
    dt: f64,
    v: &[f64],
    tol: f64,
    depth: u32,
    cfg: &KrylovConfig,
    stats: &mut Stats,
) -> Result<Vec<f64>> {
    if norm2(v) == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    match krylov_phi_once(l, dt, v, 1, tol, cfg)? {
        Some(o) => {
            stats.record(&o);
            Ok(o.w.iter().map(|x| x * dt).collect())
        }
        None if depth < MAX_SUBSTEP_DEPTH => {
            let half = w1_rec(l, 0.5 * dt, v, 0.5 * tol, depth + 1, cfg, stats)?;
            let mut w = exp_rec(l, 0.5 * dt, &half, 0.5 * tol, depth + 1, cfg, stats)?;
            for (wx, hx) in w.iter_mut().zip(&half) {
                *wx += hx;
            }
            Ok(w)
        }
        None => Err(no_convergence(dt, cfg)),
    }
}

/// Y(dt) = dt^2 phi_2(dt L) v, the solution at dt of Y' = L Y + t v, Y(0) = 0.
/// Sub-step composition with d = dt/2:
/// Y(dt) = e^{d L} Y(d) + d * (d phi_1(d L) v) + Y(d).
fn w2_rec(
    l: &dyn LinearOp,
    dt: f64,
    v: &[f64],
    tol: f64,
    depth: u32,
    cfg: &KrylovConfig,
    stats: &mut Stats,
) -> Result<Vec<f64>> {
    if norm2(v) == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    match krylov_phi_once(l, dt, v, 2, tol, cfg)? {
        Some(o) => {
            stats.record(&o);
            Ok(o.w.iter().map(|x| x * dt * dt).collect())
        }
        None if depth < MAX_SUBSTEP_DEPTH => {
            let d = 0.5 * dt;
            let y_half = w2_rec(l, d, v, 0.5 * tol, depth + 1, cfg, stats)?;
            let u_half = w1_rec(l, d, v, 0.5 * tol, depth + 1, cfg, stats)?;
            let mut w = exp_rec(l, d, &y_half, 0.5 * tol, depth + 1, cfg, stats)?;
            for i in 0..w.len() {
                w[i] += d * u_half[i] + y_half[i];
            }
            Ok(w)
        }
        None => Err(no_convergence(dt, cfg)),
    }
}

fn check_apply_args(l: &dyn LinearOp, dt: f64, v: &[f64], cfg: &KrylovConfig) -> Result<()> {
    cfg.validate()?;
    if v.len() != l.dim() {
        return Err(Error::Dimension(format!(
            "vector length {} does not match operator dimension {}",
            v.len(),
            l.dim()
        )));
    }
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::Config(format!(
            "time increment must be finite and nonnegative, got {dt}"
        )));
    }
    Ok(())
}

fn run<F>(body: F) -> Result<ApplyOutcome>
where
    F: FnOnce(&mut Stats) -> Result<Vec<f64>>,
{
    let mut stats = Stats {
        max_dim: 0,
        leaves: 0,
        est: 0.0,
    };
    let w = body(&mut stats)?;
    Ok(ApplyOutcome {
        w,
        info: KrylovInfo {
            max_dim: stats.max_dim,
            substeps: stats.leaves,
            error_est: stats.est,
        },
    })
}

/// w ~ e^{dt A} v.
pub fn expm_apply(
    l: &dyn LinearOp,
    dt: f64,
    v: &[f64],
    cfg: &KrylovConfig,
) -> Result<ApplyOutcome> {
    check_apply_args(l, dt, v, cfg)?;
    if dt == 0.0 {
        return Ok(ApplyOutcome {
            w: v.to_vec(),
            info: KrylovInfo::default(),
        });
    }
    run(|stats| exp_rec(l, dt, v, cfg.tol, 0, cfg, stats))
}

/// w ~ phi_1(dt A) v.
pub fn phi1_apply(
    l: &dyn LinearOp,
    dt: f64,
    v: &[f64],
    cfg: &KrylovConfig,
) -> Result<ApplyOutcome> {
    check_apply_args(l, dt, v, cfg)?;
    if dt == 0.0 {
        // phi_1(0) = I.
        return Ok(ApplyOutcome {
            w: v.to_vec(),
            info: KrylovInfo::default(),
        });
    }
    run(|stats| {
        let w1 = w1_rec(l, dt, v, cfg.tol, 0, cfg, stats)?;
        Ok(w1.iter().map(|x| x / dt).collect())
    })
}

/// w ~ phi_2(dt A) v.
pub fn phi2_apply(
    l: &dyn LinearOp,
    dt: f64,
    v: &[f64],
    cfg: &KrylovConfig,
) -> Result<ApplyOutcome> {
    check_apply_args(l, dt, v, cfg)?;
    if dt == 0.0 {
        // phi_2(0) = 1/2.
        return Ok(ApplyOutcome {
            w: v.iter().map(|x| 0.5 * x).collect(),
            info: KrylovInfo::default(),
        });
    }
    run(|stats| {
        let w2 = w2_rec(l, dt, v, cfg.tol, 0, cfg, stats)?;
        Ok(w2.iter().map(|x| x / (dt * dt)).collect())
    })
}

#[cfg(test)]
mod tests {
    use super::super::{densify, phi_dense, DiagOp};
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_dense(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| rng.gen_range(-scale..scale))
    }

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn arnoldi_basis_is_orthonormal_and_satisfies_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 30;
        let a = random_dense(n, 1.0, &mut rng);
        let v = random_vec(n, &mut rng);
        let m = 12;
        let d = arnoldi(&a, &v, m).unwrap();
        assert_eq!(d.basis.len(), m + 1);
        assert!(d.breakdown.is_none());
        // Orthonormality.
        for i in 0..d.basis.len() {
            for j in 0..=i {
                let g = dot(&d.basis[i], &d.basis[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - expect).abs() < 1e-12, "gram ({i}, {j}) = {g}");
            }
        }
        // A V_m = V_{m+1} H.
        let scale = d.h.amax();
        for j in 0..m {
            let mut av = vec![0.0; n];
            a.apply(&d.basis[j], &mut av);
            for i in 0..n {
                let mut rec = 0.0;
                for (r, basis_vec) in d.basis.iter().enumerate() {
                    rec += basis_vec[i] * d.h[(r, j)];
                }
                assert!(
                    (av[i] - rec).abs() < 1e-10 * scale.max(1.0),
                    "relation at column {j}, row {i}"
                );
            }
        }
    }

    #[test]
    fn arnoldi_breaks_down_on_invariant_subspace() {
        let l = DiagOp(vec![-1.0, -2.0, -3.0]);
        // Start on an eigenvector: one step must close the subspace.
        let d = arnoldi(&l, &[0.0, 1.0, 0.0], 5).unwrap();
        assert_eq!(d.breakdown, Some(1));
        assert_eq!(d.basis.len(), 1);
        assert_eq!(d.h.nrows(), 2);
        assert!((d.h[(0, 0)] + 2.0).abs() < 1e-14);
        assert!(d.h[(1, 0)].abs() < 1e-13);
    }

    #[test]
    fn arnoldi_rejects_zero_start() {
        let l = DiagOp(vec![-1.0, -2.0]);
        assert!(arnoldi(&l, &[0.0, 0.0], 3).is_err());
    }

    #[test]
    fn krylov_matches_dense_exp_and_phi() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let n = 40;
        let a = random_dense(n, 2.0, &mut rng);
        let v = random_vec(n, &mut rng);
        let cfg = KrylovConfig::default();
        for &dt in &[0.05, 0.4, 1.3] {
            let ad = &a * dt;
            let vd = nalgebra::DVector::from_column_slice(&v);
            let exact_exp = phi_dense(&ad, 0).unwrap() * &vd;
            let got = expm_apply(&a, dt, &v, &cfg).unwrap();
            assert!(
                max_err(&got.w, exact_exp.as_slice()) < 1e-8,
                "exp at dt = {dt}"
            );
            let exact_p1 = phi_dense(&ad, 1).unwrap() * &vd;
            let got = phi1_apply(&a, dt, &v, &cfg).unwrap();
            assert!(
                max_err(&got.w, exact_p1.as_slice()) < 1e-8,
                "phi1 at dt = {dt}"
            );
            let exact_p2 = phi_dense(&ad, 2).unwrap() * &vd;
            let got = phi2_apply(&a, dt, &v, &cfg).unwrap();
            assert!(
                max_err(&got.w, exact_p2.as_slice()) < 1e-8,
                "phi2 at dt = {dt}"
            );
        }
    }

    #[test]
    fn full_dimension_subspace_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 8;
        let a = random_dense(n, 1.0, &mut rng);
        let v = random_vec(n, &mut rng);
        let cfg = KrylovConfig::default();
        let got = expm_apply(&a, 0.7, &v, &cfg).unwrap();
        assert!(got.info.max_dim <= n);
        let exact = phi_dense(&(&a * 0.7), 0).unwrap() * nalgebra::DVector::from_column_slice(&v);
        assert!(max_err(&got.w, exact.as_slice()) < 1e-11);
    }

    #[test]
    fn substepping_engages_and_stays_accurate() {
        // Stiff diagonal operator with a tight subspace cap: a single
        // projection cannot converge, the recursion must split the step.
        let n = 60;
        let lambdas: Vec<f64> = (0..n).map(|i| -(i as f64) * 4.0).collect();
        let l = DiagOp(lambdas.clone());
        let v = vec![1.0; n];
        let cfg = KrylovConfig {
            tol: 1e-10,
            max_dim: 25,
            min_dim: 2,
        };
        let dt = 1.0;
        let got = expm_apply(&l, dt, &v, &cfg).unwrap();
        assert!(got.info.substeps > 1, "expected sub-stepping");
        let exact: Vec<f64> = lambdas.iter().map(|lam| (lam * dt).exp()).collect();
        assert!(max_err(&got.w, &exact) < 1e-8);

        let got = phi1_apply(&l, dt, &v, &cfg).unwrap();
        let exact: Vec<f64> = lambdas
            .iter()
            .map(|&lam| {
                if lam == 0.0 {
                    1.0
                } else {
                    ((lam * dt).exp() - 1.0) / (lam * dt)
                }
            })
            .collect();
        assert!(max_err(&got.w, &exact) < 1e-8);

        let got = phi2_apply(&l, dt, &v, &cfg).unwrap();
        let exact: Vec<f64> = lambdas
            .iter()
            .map(|&lam| {
                let z = lam * dt;
                if z == 0.0 {
                    0.5
                } else {
                    (z.exp() - 1.0 - z) / (z * z)
                }
            })
            .collect();
        assert!(max_err(&got.w, &exact) < 1e-8);
    }

    #[test]
    fn hopeless_oscillatory_operator_reports_no_convergence() {
        // Large skew-symmetric blocks keep the norm at 1e4 through every
        // halving; a cap of 6 dimensions can never resolve that.
        let n = 40;
        let mut trips = Vec::new();
        for b in 0..n / 2 {
            let (i, j) = (2 * b, 2 * b + 1);
            let omega = 1.0e4 * (1.0 + b as f64);
            trips.push((i, j, omega));
            trips.push((j, i, -omega));
        }
        let a = crate::sparse::CsrMatrix::from_triplets(n, n, &trips).unwrap();
        let v = vec![1.0; n];
        let cfg = KrylovConfig {
            tol: 1e-10,
            max_dim: 6,
            min_dim: 2,
        };
        let err = expm_apply(&a, 1.0, &v, &cfg).unwrap_err();
        assert!(matches!(err, Error::KrylovNoConvergence(_)), "got {err:?}");
    }

    #[test]
    fn zero_increment_and_zero_vector_shortcuts() {
        let l = DiagOp(vec![-1.0, -2.0, -3.0]);
        let v = vec![1.0, 2.0, 3.0];
        let cfg = KrylovConfig::default();
        assert_eq!(expm_apply(&l, 0.0, &v, &cfg).unwrap().w, v);
        assert_eq!(phi1_apply(&l, 0.0, &v, &cfg).unwrap().w, v);
        assert_eq!(phi2_apply(&l, 0.0, &v, &cfg).unwrap().w, vec![0.5, 1.0, 1.5]);
        let z = vec![0.0; 3];
        assert_eq!(expm_apply(&l, 0.5, &z, &cfg).unwrap().w, z);
        assert_eq!(phi1_apply(&l, 0.5, &z, &cfg).unwrap().w, z);
    }

    #[test]
    fn apply_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let a = random_dense(35, 3.0, &mut rng);
        let v = random_vec(35, &mut rng);
        let cfg = KrylovConfig {
            tol: 1e-9,
            max_dim: 20,
            min_dim: 2,
        };
        let w1 = phi1_apply(&a, 0.8, &v, &cfg).unwrap().w;
        let w2 = phi1_apply(&a, 0.8, &v, &cfg).unwrap().w;
        assert_eq!(w1, w2);
    }

    #[test]
    fn densify_reproduces_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let a = random_dense(9, 1.0, &mut rng);
        let d = densify(&a);
        assert_eq!(a, d);
    }
}
