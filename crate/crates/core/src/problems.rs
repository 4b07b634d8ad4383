//! Benchmark problem builders.
//!
//! `reactive_transport` is the main benchmark: advection-diffusion with a
//! saturating decaying reaction on a rectangle, inflow value 1 held on the
//! left edge, homogeneous Neumann elsewhere, started from zero (or from the
//! smooth / sharp-front variants used by the data-regularity study).
//! `heat_dirichlet` is the manufactured problem with a separable exact
//! solution used for spatial orders, and `scalar_decay` the closed-form
//! scalar used to pin temporal orders.

use crate::assembly::CoefficientField;
use crate::error::{Error, Result};
use crate::mesh::{build_rect_mesh, BoundaryTag};
use crate::nonlinear::Nonlinearity;
use crate::system::{AnySystem, DiagonalSystem, FemSystem};
use std::path::Path;
use std::sync::Arc;

/// f(t, z) = e^{-t} z / (1 + |z|): globally Lipschitz in z with constant
/// e^{-t} <= 1, smooth in t.
pub fn saturating_decay() -> Nonlinearity {
    Nonlinearity::new(|t: f64, z: f64| (-t).exp() * z / (1.0 + z.abs()))
        .with_dz(|t, z| (-t).exp() / (1.0 + z.abs()).powi(2))
        .with_dt(|t, z| -(-t).exp() * z / (1.0 + z.abs()))
        .with_dz_bound(1.0 + 1e-12)
}

/// Node-wise vector field on the structured rectangle grid, interpolated
/// with the same P1 triangles the solver uses.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalVectorField {
    nx: usize,
    ny: usize,
    l1: f64,
    l2: f64,
    values: Vec<[f64; 2]>,
}

impl NodalVectorField {
    pub fn new(nx: usize, ny: usize, l1: f64, l2: f64, values: Vec<[f64; 2]>) -> Result<Self> {
        let expect = (nx + 1) * (ny + 1);
        if values.len() != expect {
            return Err(Error::Config(format!(
                "velocity field has {} nodes, the {nx}x{ny} grid needs {expect}",
                values.len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("velocity field has non-finite entries".into()));
        }
        Ok(Self { nx, ny, l1, l2, values })
    }

    /// Reads one `vx vy` pair per line in row-major node order; blank lines
    /// and `#` comments are skipped.
    pub fn from_file(path: &Path, nx: usize, ny: usize, l1: f64, l2: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<f64> {
                tok.ok_or_else(|| {
                    Error::Config(format!(
                        "{}:{}: expected `vx vy`",
                        path.display(),
                        lineno + 1
                    ))
                })?
                .parse()
                .map_err(|e| {
                    Error::Config(format!("{}:{}: {e}", path.display(), lineno + 1))
                })
            };
            let vx = parse(it.next())?;
            let vy = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::Config(format!(
                    "{}:{}: expected exactly two numbers",
                    path.display(),
                    lineno + 1
                )));
            }
            values.push([vx, vy]);
        }
        Self::new(nx, ny, l1, l2, values)
    }

    fn node(&self, i: usize, j: usize) -> [f64; 2] {
        self.values[j * (self.nx + 1) + i]
    }

    /// P1 interpolation via structured point location (clamped to the
    /// grid), matching the solver's triangulation of each cell.
    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        let fx = (x / self.l1 * self.nx as f64).clamp(0.0, self.nx as f64);
        let fy = (y / self.l2 * self.ny as f64).clamp(0.0, self.ny as f64);
        let i = (fx.floor() as usize).min(self.nx - 1);
        let j = (fy.floor() as usize).min(self.ny - 1);
        let xi = fx - i as f64;
        let eta = fy - j as f64;
        let sw = self.node(i, j);
        let ne = self.node(i + 1, j + 1);
        if xi >= eta {
            // Lower triangle (sw, se, ne).
            let se = self.node(i + 1, j);
            let w = [1.0 - xi, xi - eta, eta];
            [
                w[0] * sw[0] + w[1] * se[0] + w[2] * ne[0],
                w[0] * sw[1] + w[1] * se[1] + w[2] * ne[1],
            ]
        } else {
            // Upper triangle (sw, ne, nw).
            let nw = self.node(i, j + 1);
            let w = [1.0 - eta, xi, eta - xi];
            [
                w[0] * sw[0] + w[1] * ne[0] + w[2] * nw[0],
                w[0] * sw[1] + w[1] * ne[1] + w[2] * nw[1],
            ]
        }
    }
}

/// Advection field options for the transport benchmark.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocityField {
    /// Divergence-free cellular flow from the streamfunction
    /// sin(pi x / L1) sin(pi y / L2), scaled to unit maximum speed; its
    /// normal component vanishes on the whole boundary.
    Cellular,
    Uniform { vx: f64, vy: f64 },
    Nodal(NodalVectorField),
}

impl VelocityField {
    fn evaluator(&self, l1: f64, l2: f64) -> Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync> {
        match self {
            VelocityField::Cellular => {
                let pi = std::f64::consts::PI;
                // v = (d psi / dy, -d psi / dx) * min(L1, L2) / pi.
                let s = l1.min(l2) / pi;
                Arc::new(move |x, y| {
                    [
                        s * pi / l2 * (pi * x / l1).sin() * (pi * y / l2).cos(),
                        -s * pi / l1 * (pi * x / l1).cos() * (pi * y / l2).sin(),
                    ]
                })
            }
            VelocityField::Uniform { vx, vy } => {
                let (vx, vy) = (*vx, *vy);
                Arc::new(move |_, _| [vx, vy])
            }
            VelocityField::Nodal(field) => {
                let field = field.clone();
                Arc::new(move |x, y| field.eval(x, y))
            }
        }
    }
}

/// Initial data variants for the transport benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialData {
    /// u0 = 0 (the benchmark default; incompatible with the inflow value).
    Zero,
    /// u0 = (1 - x/L1)^2: smooth, matches the inflow value at x = 0 and
    /// has zero normal derivative on the other edges.
    Smooth,
    /// u0 = 1 for x < L1/2, else 0: a sharp front (low-regularity data).
    Front,
}

/// Reaction term variants for the transport benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reaction {
    /// e^{-t} z / (1 + |z|), the benchmark default.
    Saturating,
    /// No reaction; the problem turns linear.
    Zero,
    /// c z with constant c.
    Linear(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportConfig {
    pub nx: usize,
    pub ny: usize,
    pub l1: f64,
    pub l2: f64,
    /// D(t) = 1 + e^{-t} when true, D = 1 when false.
    pub variable_diffusion: bool,
    pub velocity: VelocityField,
    pub initial: InitialData,
    pub reaction: Reaction,
    /// Relocates c0 I from the operator into the reaction (A - c0 I paired
    /// with F + c0 z). Zero by default; the transport form is already
    /// coercive up to the bounded reaction.
    pub stabilization_shift: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            nx: 32,
            ny: 32,
            l1: 1.0,
            l2: 1.0,
            variable_diffusion: true,
            velocity: VelocityField::Cellular,
            initial: InitialData::Zero,
            reaction: Reaction::Saturating,
            stabilization_shift: 0.0,
        }
    }
}

/// du/dt = D(t)(lap u - v . grad u) + e^{-t} u/(1+|u|), u = 1 on the left
/// edge, homogeneous Neumann elsewhere.
pub fn reactive_transport(cfg: &TransportConfig) -> Result<AnySystem> {
    let mut mesh = build_rect_mesh(cfg.nx, cfg.ny, cfg.l1, cfg.l2)?;
    mesh.tag_boundary(|x, _| {
        if x == 0.0 {
            BoundaryTag::Dirichlet
        } else {
            BoundaryTag::Neumann
        }
    });
    let variable = cfg.variable_diffusion;
    let d = move |t: f64| if variable { 1.0 + (-t).exp() } else { 1.0 };
    let vel = cfg.velocity.evaluator(cfg.l1, cfg.l2);
    let coeff = CoefficientField::new(
        move |t, _, _| {
            let dv = d(t);
            [[dv, 0.0], [0.0, dv]]
        },
        move |t, x, y| {
            let dv = d(t);
            let v = vel(x, y);
            [dv * v[0], dv * v[1]]
        },
    );
    let l1 = cfg.l1;
    let initial = cfg.initial;
    let u0 = move |x: f64, _y: f64| match initial {
        InitialData::Zero => 0.0,
        InitialData::Smooth => (1.0 - x / l1).powi(2),
        InitialData::Front => {
            if x < 0.5 * l1 {
                1.0
            } else {
                0.0
            }
        }
    };
    let reaction = match cfg.reaction {
        Reaction::Saturating => saturating_decay(),
        Reaction::Zero => Nonlinearity::zero(),
        Reaction::Linear(c) => Nonlinearity::linear(c),
    };
    let c0 = cfg.stabilization_shift;
    if !c0.is_finite() {
        return Err(Error::Config(format!(
            "stabilization shift {c0} must be finite"
        )));
    }
    let sys = FemSystem::new(mesh, coeff, reaction.shifted(c0), |_, _| 1.0, u0)?
        .with_spectral_shift(c0);
    Ok(AnySystem::Fem(sys))
}

/// Heat equation on the unit square with homogeneous Dirichlet data and
/// u0 = sin(pi x) sin(pi y); the exact solution stays separable.
pub fn heat_dirichlet(nx: usize, ny: usize) -> Result<AnySystem> {
    let mut mesh = build_rect_mesh(nx, ny, 1.0, 1.0)?;
    mesh.tag_boundary(|_, _| BoundaryTag::Dirichlet);
    let pi = std::f64::consts::PI;
    let sys = FemSystem::new(
        mesh,
        CoefficientField::isotropic(|_| 1.0),
        Nonlinearity::zero(),
        |_, _| 0.0,
        move |x, y| (pi * x).sin() * (pi * y).sin(),
    )?;
    Ok(AnySystem::Fem(sys))
}

/// Exact solution of the heat problem: e^{-2 pi^2 t} sin(pi x) sin(pi y).
pub fn heat_exact(t: f64) -> impl Fn(f64, f64) -> f64 {
    let pi = std::f64::consts::PI;
    move |x, y| (-2.0 * pi * pi * t).exp() * (pi * x).sin() * (pi * y).sin()
}

/// u' = -(1 + e^{-t}) u, u(0) = 1; closed form available.
pub fn scalar_decay() -> AnySystem {
    AnySystem::Diagonal(DiagonalSystem::new(
        vec![1.0],
        |t, _| -(1.0 + (-t).exp()),
        Nonlinearity::zero(),
    ))
}

/// Closed-form solution of [`scalar_decay`] at time t.
pub fn scalar_decay_exact(t: f64) -> f64 {
    (-(t + 1.0 - (-t).exp())).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::SemilinearSystem;
    use std::io::Write;

    #[test]
    fn cellular_velocity_is_divergence_free_and_tangential() {
        let cfg = TransportConfig::default();
        let vel = cfg.velocity.evaluator(1.0, 1.0);
        // Normal component vanishes on the boundary.
        for k in 0..=20 {
            let s = k as f64 / 20.0;
            assert!(vel(0.0, s)[0].abs() < 1e-14);
            assert!(vel(1.0, s)[0].abs() < 1e-14);
            assert!(vel(s, 0.0)[1].abs() < 1e-14);
            assert!(vel(s, 1.0)[1].abs() < 1e-14);
        }
        // Divergence by central differences, interior sample grid.
        let h = 1e-5;
        for i in 1..10 {
            for j in 1..10 {
                let (x, y) = (i as f64 / 10.0, j as f64 / 10.0);
                let div = (vel(x + h, y)[0] - vel(x - h, y)[0]) / (2.0 * h)
                    + (vel(x, y + h)[1] - vel(x, y - h)[1]) / (2.0 * h);
                assert!(div.abs() < 1e-8, "div {div} at ({x}, {y})");
            }
        }
        // Unit maximum speed, attained at an edge midpoint.
        let speed = |x: f64, y: f64| {
            let v = vel(x, y);
            (v[0] * v[0] + v[1] * v[1]).sqrt()
        };
        assert!((speed(0.5, 0.0) - 1.0).abs() < 1e-12);
        let mut max = 0.0_f64;
        for i in 0..=40 {
            for j in 0..=40 {
                max = max.max(speed(i as f64 / 40.0, j as f64 / 40.0));
            }
        }
        assert!(max <= 1.0 + 1e-12, "max speed {max}");
    }

    #[test]
    fn transport_system_has_expected_shape() {
        let cfg = TransportConfig {
            nx: 8,
            ny: 8,
            ..Default::default()
        };
        let sys = reactive_transport(&cfg).unwrap();
        // 81 nodes minus the 9 on the inflow edge.
        assert_eq!(sys.dim(), 72);
        let fem = sys.as_fem().unwrap();
        let full = fem.full_field(&sys.initial_state());
        for (node, p) in fem.mesh().nodes().iter().enumerate() {
            if p[0] == 0.0 {
                assert_eq!(full[node], 1.0);
            }
        }
    }

    #[test]
    fn initial_data_variants_project_as_described() {
        for (initial, probe) in [
            (InitialData::Smooth, true),
            (InitialData::Front, false),
        ] {
            let cfg = TransportConfig {
                nx: 16,
                ny: 4,
                initial,
                ..Default::default()
            };
            let sys = reactive_transport(&cfg).unwrap();
            let fem = sys.as_fem().unwrap();
            let u0 = sys.initial_state();
            let full = fem.full_field(&u0);
            if probe {
                // Smooth variant: projection reproduces the quadratic at
                // interior nodes to projection accuracy.
                for (node, p) in fem.mesh().nodes().iter().enumerate() {
                    if p[0] > 0.0 {
                        assert!((full[node] - (1.0 - p[0]).powi(2)).abs() < 5e-3);
                    }
                }
            } else {
                // Front variant: clearly 1 left of the front, 0 right of it.
                for (node, p) in fem.mesh().nodes().iter().enumerate() {
                    if p[0] > 0.0 && (p[0] - 0.5).abs() > 0.15 {
                        let expect = if p[0] < 0.5 { 1.0 } else { 0.0 };
                        assert!(
                            (full[node] - expect).abs() < 0.2,
                            "node {node} at {p:?}: {}",
                            full[node]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn nodal_velocity_round_trips_grid_samples() {
        // Sample an affine field at the grid nodes; P1 interpolation must
        // reproduce it exactly everywhere.
        let (nx, ny) = (5, 4);
        let f = |x: f64, y: f64| [2.0 * x - y + 0.5, x + 3.0 * y];
        let mut values = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                values.push(f(i as f64 / nx as f64, j as f64 / ny as f64));
            }
        }
        let field = NodalVectorField::new(nx, ny, 1.0, 1.0, values).unwrap();
        for &(x, y) in &[(0.13, 0.27), (0.5, 0.5), (0.99, 0.01), (0.0, 1.0)] {
            let got = field.eval(x, y);
            let want = f(x, y);
            assert!((got[0] - want[0]).abs() < 1e-13);
            assert!((got[1] - want[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn nodal_velocity_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vel.txt");
        let mut fh = std::fs::File::create(&path).unwrap();
        writeln!(fh, "# 2x1 grid, 6 nodes").unwrap();
        for k in 0..6 {
            writeln!(fh, "{} {}", k as f64, -(k as f64)).unwrap();
        }
        drop(fh);
        let field = NodalVectorField::from_file(&path, 2, 1, 1.0, 1.0).unwrap();
        assert_eq!(field.eval(0.0, 0.0), [0.0, 0.0]);
        assert_eq!(field.eval(1.0, 1.0), [5.0, -5.0]);
        // Wrong node count is rejected.
        assert!(NodalVectorField::from_file(&path, 3, 3, 1.0, 1.0).is_err());
        // Malformed line is rejected.
        std::fs::write(&path, "0.0 0.0 0.0\n").unwrap();
        assert!(NodalVectorField::from_file(&path, 1, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn heat_problem_matches_its_exact_solution_at_t_zero() {
        let sys = heat_dirichlet(16, 16).unwrap();
        let fem = sys.as_fem().unwrap();
        let err = fem
            .l2_error_vs(&sys.initial_state(), heat_exact(0.0))
            .unwrap();
        // Projection error only.
        assert!(err < 5e-3, "initial projection error {err}");
    }

    #[test]
    fn scalar_decay_closed_form() {
        assert_eq!(scalar_decay_exact(0.0), 1.0);
        let t = 1.0;
        let expect = (-(2.0 - (-1.0_f64).exp())).exp();
        assert!((scalar_decay_exact(t) - expect).abs() < 1e-15);
        let sys = scalar_decay();
        assert_eq!(sys.dim(), 1);
        assert_eq!(sys.initial_state(), vec![1.0]);
    }

    #[test]
    fn stabilization_shift_only_relocates_terms() {
        use crate::integrator::{magros_run, RunOptions, TimeGrid};
        let run = |c0: f64| {
            let cfg = TransportConfig {
                nx: 5,
                ny: 5,
                stabilization_shift: c0,
                ..TransportConfig::default()
            };
            let mut sys = reactive_transport(&cfg).unwrap();
            let grid = TimeGrid::new(1.0, 8).unwrap();
            magros_run(&mut sys, &grid, &RunOptions::default())
                .unwrap()
                .final_state
        };
        let base = run(0.0);
        let shifted = run(0.7);
        // A - c0 I with F + c0 z rebuilds the same step: the linearized
        // operator and the bracket vector are both unchanged, so only
        // rounding separates the trajectories.
        for (a, b) in base.iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn reaction_variants_change_the_dynamics_as_stated() {
        use crate::integrator::{magros_run, RunOptions, TimeGrid};
        let run = |reaction: Reaction| {
            let cfg = TransportConfig {
                nx: 4,
                ny: 4,
                reaction,
                ..TransportConfig::default()
            };
            let mut sys = reactive_transport(&cfg).unwrap();
            let grid = TimeGrid::new(0.5, 8).unwrap();
            let state = magros_run(&mut sys, &grid, &RunOptions::default())
                .unwrap()
                .final_state;
            (sys.state_norm(&state), state)
        };
        let (n_sat, _) = run(Reaction::Saturating);
        let (n_zero, s_zero) = run(Reaction::Zero);
        let (n_lin, s_lin) = run(Reaction::Linear(0.0));
        // A zero linear coefficient is the zero reaction.
        assert_eq!(s_zero, s_lin);
        assert_eq!(n_zero, n_lin);
        // The saturating source feeds the field, so it ends larger.
        assert!(n_sat > n_zero);
    }
}
