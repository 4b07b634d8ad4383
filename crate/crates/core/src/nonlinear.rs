//! Pointwise semilinear reaction terms and their per-step linearization.
//!
//! The reaction acts nodally: (F(t, u))_i = f(t, u_i). A step linearizes
//! around (t_lin, w) as f(t, z) ~= J z + a t + remainder, with J the nodal
//! diagonal df/dz(t_lin, w_i) and a_i = df/dt(t_lin, w_i).

use crate::error::{Error, Result};

/// Relative step for the central difference fallback derivatives.
const FD_REL_STEP: f64 = 1e-6;

type ScalarFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A scalar reaction f(t, z) with optional analytic derivatives. Missing
/// derivatives fall back to central differences.
pub struct Nonlinearity {
    f: ScalarFn,
    df_dz: Option<ScalarFn>,
    df_dt: Option<ScalarFn>,
    /// Optional bound on |df/dz|; linearization fails loudly if the
    /// evaluated slope exceeds it.
    pub dz_bound: Option<f64>,
}

impl Nonlinearity {
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Box::new(f),
            df_dz: None,
            df_dt: None,
            dz_bound: None,
        }
    }

    pub fn with_dz(mut self, df_dz: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.df_dz = Some(Box::new(df_dz));
        self
    }

    pub fn with_dt(mut self, df_dt: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.df_dt = Some(Box::new(df_dt));
        self
    }

    pub fn with_dz_bound(mut self, bound: f64) -> Self {
        self.dz_bound = Some(bound);
        self
    }

    /// f identically zero; turns the problem linear.
    pub fn zero() -> Self {
        Self::new(|_, _| 0.0)
            .with_dz(|_, _| 0.0)
            .with_dt(|_, _| 0.0)
    }

    /// f(t, z) = c z with exact derivatives.
    pub fn linear(c: f64) -> Self {
        Self::new(move |_, z| c * z)
            .with_dz(move |_, _| c)
            .with_dt(|_, _| 0.0)
    }

    /// f(t, z) + c0 z, with derivatives and the slope bound adjusted to
    /// match. Pairing this with an operator shifted by -c0 relocates the
    /// linear part without changing the problem.
    pub fn shifted(self, c0: f64) -> Self {
        if c0 == 0.0 {
            return self;
        }
        let base = std::sync::Arc::new(self);
        let bound = base.dz_bound.map(|k| k + c0.abs());
        let b1 = base.clone();
        let b2 = base.clone();
        let out = Self::new(move |t, z| b1.eval(t, z) + c0 * z)
            .with_dz(move |t, z| b2.dz(t, z) + c0)
            .with_dt(move |t, z| base.dt(t, z));
        match bound {
            Some(k) => out.with_dz_bound(k),
            None => out,
        }
    }

    pub fn eval(&self, t: f64, z: f64) -> f64 {
        (self.f)(t, z)
    }

    pub fn dz(&self, t: f64, z: f64) -> f64 {
        match &self.df_dz {
            Some(g) => g(t, z),
            None => {
                let h = FD_REL_STEP * z.abs().max(1.0);
                ((self.f)(t, z + h) - (self.f)(t, z - h)) / (2.0 * h)
            }
        }
    }

    pub fn dt(&self, t: f64, z: f64) -> f64 {
        match &self.df_dt {
            Some(g) => g(t, z),
            None => {
                let h = FD_REL_STEP * t.abs().max(1.0);
                ((self.f)(t + h, z) - (self.f)(t - h, z)) / (2.0 * h)
            }
        }
    }
}

/// Nodal evaluation out_i = f(t, u_i).
pub fn eval_f(nl: &Nonlinearity, t: f64, u: &[f64], out: &mut [f64]) {
    assert_eq!(u.len(), out.len(), "eval_f length");
    for (o, &z) in out.iter_mut().zip(u) {
        *o = nl.eval(t, z);
    }
}

/// Per-step linearization data: diagonal Jacobian and time slope, both
/// frozen at one (t, state) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub t_lin: f64,
    pub j_diag: Vec<f64>,
    pub a_vec: Vec<f64>,
}

/// Evaluates J = diag df/dz(t, w_i) and a_i = df/dt(t, w_i). Fails when a
/// slope is non-finite or exceeds the declared bound.
pub fn eval_linearization(nl: &Nonlinearity, t: f64, w: &[f64]) -> Result<Linearization> {
    let mut j_diag = Vec::with_capacity(w.len());
    let mut a_vec = Vec::with_capacity(w.len());
    for &z in w {
        let j = nl.dz(t, z);
        if !j.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite reaction slope at (t, z) = ({t}, {z})"
            )));
        }
        if let Some(bound) = nl.dz_bound {
            if j.abs() > bound {
                return Err(Error::Numerical(format!(
                    "reaction slope {j} exceeds declared bound {bound} at (t, z) = ({t}, {z})"
                )));
            }
        }
        j_diag.push(j);
        a_vec.push(nl.dt(t, z));
    }
    Ok(Linearization { t_lin: t, j_diag, a_vec })
}

/// Remainder G(t, u) = F(t, u) - J u - a t for a fixed linearization.
pub fn eval_remainder(
    nl: &Nonlinearity,
    lin: &Linearization,
    t: f64,
    u: &[f64],
    out: &mut [f64],
) -> Result<()> {
    if u.len() != lin.j_diag.len() || out.len() != lin.j_diag.len() {
        return Err(Error::Dimension(format!(
            "remainder with {} states against linearization of size {}",
            u.len(),
            lin.j_diag.len()
        )));
    }
    for i in 0..u.len() {
        out[i] = nl.eval(t, u[i]) - lin.j_diag[i] * u[i] - lin.a_vec[i] * t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn saturating() -> Nonlinearity {
        Nonlinearity::new(|t, z| (-t).exp() * z / (1.0 + z.abs()))
            .with_dz(|t, z| (-t).exp() / (1.0 + z.abs()).powi(2))
            .with_dt(|t, z| -(-t).exp() * z / (1.0 + z.abs()))
    }

    #[test]
    fn analytic_derivatives_match_central_differences() {
        let nl = saturating();
        for &t in &[0.0_f64, 0.4, 1.0] {
            for &z in &[-2.3_f64, -0.5, 0.1, 0.9, 4.0] {
                let h = 1e-6 * z.abs().max(1.0);
                let fd_z = (nl.eval(t, z + h) - nl.eval(t, z - h)) / (2.0 * h);
                assert!(
                    (nl.dz(t, z) - fd_z).abs() < 1e-8,
                    "df/dz at ({t}, {z}): {} vs {fd_z}",
                    nl.dz(t, z)
                );
                let ht = 1e-6 * t.abs().max(1.0);
                let fd_t = (nl.eval(t + ht, z) - nl.eval(t - ht, z)) / (2.0 * ht);
                assert!((nl.dt(t, z) - fd_t).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn finite_difference_fallback_tracks_analytic_values() {
        let analytic = saturating();
        let bare = Nonlinearity::new(|t, z| (-t).exp() * z / (1.0 + z.abs()));
        for &t in &[0.2, 0.8] {
            for &z in &[-1.7, 0.3, 2.5] {
                assert!((bare.dz(t, z) - analytic.dz(t, z)).abs() < 1e-9);
                assert!((bare.dt(t, z) - analytic.dt(t, z)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn linearization_and_remainder_recompose_f() {
        let nl = saturating();
        let w = vec![0.3, -1.2, 2.0, 0.0];
        let lin = eval_linearization(&nl, 0.45, &w).unwrap();
        // At any (t, u), F = J u + a t + G by construction.
        let u = vec![0.31, -1.18, 2.05, 0.02];
        let t = 0.5;
        let mut g = vec![0.0; 4];
        eval_remainder(&nl, &lin, t, &u, &mut g).unwrap();
        for i in 0..4 {
            let recomposed = lin.j_diag[i] * u[i] + lin.a_vec[i] * t + g[i];
            assert!((recomposed - nl.eval(t, u[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn remainder_variation_is_second_order_near_the_base_point() {
        // G(t, u) - G(t_lin, w) should shrink like the square of the
        // perturbation radius; halving the radius quarters the change.
        let nl = saturating();
        let w = vec![0.7];
        let t0 = 0.4;
        let lin = eval_linearization(&nl, t0, &w).unwrap();
        let mut g0 = vec![0.0];
        eval_remainder(&nl, &lin, t0, &w, &mut g0).unwrap();
        let mut deltas = Vec::new();
        for &r in &[1e-2, 5e-3, 2.5e-3] {
            let mut g = vec![0.0];
            eval_remainder(&nl, &lin, t0 + r, &[w[0] + r], &mut g).unwrap();
            deltas.push((g[0] - g0[0]).abs());
        }
        for pair in deltas.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
        }
    }

    #[test]
    fn slope_bound_rejects_steep_reactions() {
        let nl = Nonlinearity::linear(2.0).with_dz_bound(0.5);
        assert!(eval_linearization(&nl, 0.0, &[1.0]).is_err());
        let ok = Nonlinearity::linear(0.4).with_dz_bound(0.5);
        assert!(eval_linearization(&ok, 0.0, &[1.0]).is_ok());
    }

    #[test]
    fn lipschitz_probe_on_the_saturating_reaction() {
        // |f(t, z1) - f(t, z2)| <= sup|df/dz| |z1 - z2| with sup = e^{-t}.
        let nl = saturating();
        for &t in &[0.0_f64, 0.5, 1.0] {
            let bound = (-t).exp();
            let zs: Vec<f64> = (0..40).map(|i| -4.0 + 0.2 * i as f64).collect();
            for &z1 in &zs {
                for &z2 in &zs {
                    let lhs = (nl.eval(t, z1) - nl.eval(t, z2)).abs();
                    assert!(lhs <= bound * (z1 - z2).abs() + 1e-14);
                }
            }
        }
    }

    #[test]
    fn zero_and_linear_presets() {
        let z = Nonlinearity::zero();
        assert_eq!(z.eval(0.3, 7.0), 0.0);
        assert_eq!(z.dz(0.3, 7.0), 0.0);
        let lin = Nonlinearity::linear(-1.5);
        assert_eq!(lin.eval(0.0, 2.0), -3.0);
        assert_eq!(lin.dz(9.0, 4.0), -1.5);
        assert_eq!(lin.dt(9.0, 4.0), 0.0);
        let mut out = vec![0.0; 3];
        eval_f(&lin, 0.0, &[1.0, -2.0, 0.5], &mut out);
        assert_eq!(out, vec![-1.5, 3.0, -0.75]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let nl = Nonlinearity::zero();
        let lin = eval_linearization(&nl, 0.0, &[0.0, 0.0]).unwrap();
        let mut out = vec![0.0; 2];
        assert!(eval_remainder(&nl, &lin, 0.0, &[1.0], &mut out).is_err());
    }
}
