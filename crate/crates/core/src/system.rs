//! Semi-discrete systems du/dt = A(t) u + F(t, u) + forcing(t) presented to
//! the time integrators.
//!
//! `refresh_linear(t)` rebuilds the time-dependent linear part; `linear_op`
//! and `linear_forcing` then refer to that frozen time until the next
//! refresh. The reaction F acts nodally through [`Nonlinearity`].

use crate::assembly::{
    self, assemble_mass, l2_error_vs_function, restrict_matrix, CoefficientField, DirichletLift,
    DofMap, StiffnessAssembler,
};
use crate::error::{Error, Result};
use crate::expmath::{DiagOp, LinearOp};
use crate::mesh::Mesh;
use crate::nonlinear::Nonlinearity;
use crate::sparse::{BandCholesky, CsrMatrix};

pub trait SemilinearSystem: Send {
    /// Number of unknowns (free DOFs).
    fn dim(&self) -> usize;
    /// Rebuilds the linear part frozen at time t.
    fn refresh_linear(&mut self, t: f64) -> Result<()>;
    /// The operator A at the last refreshed time.
    fn linear_op(&self) -> &dyn LinearOp;
    /// Adds the state-independent forcing (boundary lift) at the last
    /// refreshed time: out += forcing.
    fn linear_forcing(&self, out: &mut [f64]);
    fn nonlinearity(&self) -> &Nonlinearity;
    fn initial_state(&self) -> Vec<f64>;
    /// Discrete L2 norm of a state (mass-weighted for FEM systems).
    fn state_norm(&self, u: &[f64]) -> f64;
    /// Reconstructs the presentable field (adds boundary values).
    fn full_field(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }
}

/// A(t) = -M_ff^{-1} K_ff(t) - shift I applied through the factored mass
/// matrix. The shift is the free-DOF half of the stabilization relocation;
/// the matching +shift z lives in the reaction term.
struct FemOp {
    k_ff: CsrMatrix,
    mass_chol: BandCholesky,
    forcing: Vec<f64>,
    shift: f64,
}

impl LinearOp for FemOp {
    fn dim(&self) -> usize {
        self.k_ff.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.k_ff.matvec_into(x, y);
        self.mass_chol.solve_into(y);
        for (v, xi) in y.iter_mut().zip(x) {
            *v = -*v - self.shift * xi;
        }
    }
}

/// P1 Galerkin discretization of the parabolic problem on a tagged mesh,
/// reduced to free DOFs with a time-independent Dirichlet lift.
pub struct FemSystem {
    mesh: Mesh,
    map: DofMap,
    coeff: CoefficientField,
    nonlin: Nonlinearity,
    lift: DirichletLift,
    mass_ff: CsrMatrix,
    assembler: StiffnessAssembler,
    op: FemOp,
    coupling: Vec<f64>,
    u0: Vec<f64>,
    refreshed_at: Option<f64>,
}

impl FemSystem {
    /// Builds the reduced system. The initial state is the L2 projection of
    /// `u0` restricted to the free DOFs; `dirichlet_g` supplies the (time
    /// independent) boundary values.
    pub fn new(
        mesh: Mesh,
        coeff: CoefficientField,
        nonlin: Nonlinearity,
        dirichlet_g: impl Fn(f64, f64) -> f64,
        u0: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let map = DofMap::new(&mesh)?;
        let lift = DirichletLift::from_rule(&mesh, &map, dirichlet_g);
        let mass_full = assemble_mass(&mesh);
        let mass_ff = restrict_matrix(&mass_full, &map);
        let mass_chol = BandCholesky::factor(&mass_ff)
            .map_err(|e| Error::Numerical(format!("mass factorization failed: {e}")))?;
        let assembler = StiffnessAssembler::new(&mesh, &map);
        let k_ff = assembler.new_matrix();
        let u0_full = assembly::project_l2(&mesh, u0)?;
        let u0_free = map.restrict(&u0_full);
        let n = map.n_free();
        Ok(Self {
            mesh,
            map,
            coeff,
            nonlin,
            lift,
            mass_ff,
            assembler,
            op: FemOp {
                k_ff,
                mass_chol,
                forcing: vec![0.0; n],
                shift: 0.0,
            },
            coupling: vec![0.0; n],
            u0: u0_free,
            refreshed_at: None,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dof_map(&self) -> &DofMap {
        &self.map
    }

    pub fn lift(&self) -> &DirichletLift {
        &self.lift
    }

    pub fn coefficients(&self) -> &CoefficientField {
        &self.coeff
    }

    pub fn mass_free(&self) -> &CsrMatrix {
        &self.mass_ff
    }

    pub fn refreshed_at(&self) -> Option<f64> {
        self.refreshed_at
    }

    /// Moves the linear part c0 I from the operator into the reaction:
    /// A becomes A - c0 I and the caller pairs it with F + c0 z (see
    /// [`Nonlinearity::shifted`]). The trajectory is unchanged.
    pub fn with_spectral_shift(mut self, c0: f64) -> Self {
        self.op.shift = c0;
        self
    }

    pub fn spectral_shift(&self) -> f64 {
        self.op.shift
    }

    /// Continuum L2 error of the reconstructed field against a function.
    pub fn l2_error_vs(&self, u_free: &[f64], f: impl Fn(f64, f64) -> f64) -> Result<f64> {
        let full = self.full_field(u_free);
        l2_error_vs_function(&self.mesh, &full, f)
    }
}

impl SemilinearSystem for FemSystem {
    fn dim(&self) -> usize {
        self.map.n_free()
    }

    fn refresh_linear(&mut self, t: f64) -> Result<()> {
        self.assembler.assemble_into(
            &self.mesh,
            &self.coeff,
            t,
            &self.lift.full,
            &mut self.op.k_ff,
            &mut self.coupling,
        )?;
        self.op.forcing.copy_from_slice(&self.coupling);
        self.op.mass_chol.solve_into(&mut self.op.forcing);
        self.op.forcing.iter_mut().for_each(|v| *v = -*v);
        self.refreshed_at = Some(t);
        Ok(())
    }

    fn linear_op(&self) -> &dyn LinearOp {
        &self.op
    }

    fn linear_forcing(&self, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.op.forcing) {
            *o += f;
        }
    }

    fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlin
    }

    fn initial_state(&self) -> Vec<f64> {
        self.u0.clone()
    }

    fn state_norm(&self, u: &[f64]) -> f64 {
        assembly::l2_norm(&self.mass_ff, u).expect("state length matches free DOFs")
    }

    fn full_field(&self, u: &[f64]) -> Vec<f64> {
        self.map.prolong_with(u, &self.lift.full)
    }
}

/// Diagonal test system: du_i/dt = lambda(t, i) u_i + f(t, u_i). Euclidean
/// norm, no boundary forcing.
pub struct DiagonalSystem {
    lambda: Box<dyn Fn(f64, usize) -> f64 + Send + Sync>,
    nonlin: Nonlinearity,
    u0: Vec<f64>,
    op: DiagOp,
    refreshed_at: Option<f64>,
}

impl DiagonalSystem {
    pub fn new(
        u0: Vec<f64>,
        lambda: impl Fn(f64, usize) -> f64 + Send + Sync + 'static,
        nonlin: Nonlinearity,
    ) -> Self {
        let n = u0.len();
        Self {
            lambda: Box::new(lambda),
            nonlin,
            u0,
            op: DiagOp(vec![0.0; n]),
            refreshed_at: None,
        }
    }

    pub fn lambda_at(&self, t: f64, i: usize) -> f64 {
        (self.lambda)(t, i)
    }
}

impl SemilinearSystem for DiagonalSystem {
    fn dim(&self) -> usize {
        self.u0.len()
    }

    fn refresh_linear(&mut self, t: f64) -> Result<()> {
        for (i, d) in self.op.0.iter_mut().enumerate() {
            *d = (self.lambda)(t, i);
        }
        self.refreshed_at = Some(t);
        Ok(())
    }

    fn linear_op(&self) -> &dyn LinearOp {
        &self.op
    }

    fn linear_forcing(&self, _out: &mut [f64]) {}

    fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlin
    }

    fn initial_state(&self) -> Vec<f64> {
        self.u0.clone()
    }

    fn state_norm(&self, u: &[f64]) -> f64 {
        u.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Concrete system kinds, so harness plumbing (oracle references, error
/// norms) can dispatch without trait objects.
pub enum AnySystem {
    Fem(FemSystem),
    Diagonal(DiagonalSystem),
}

impl AnySystem {
    pub fn as_fem(&self) -> Option<&FemSystem> {
        match self {
            AnySystem::Fem(s) => Some(s),
            AnySystem::Diagonal(_) => None,
        }
    }
}

impl SemilinearSystem for AnySystem {
    fn dim(&self) -> usize {
        match self {
            AnySystem::Fem(s) => s.dim(),
            AnySystem::Diagonal(s) => s.dim(),
        }
    }

    fn refresh_linear(&mut self, t: f64) -> Result<()> {
        match self {
            AnySystem::Fem(s) => s.refresh_linear(t),
            AnySystem::Diagonal(s) => s.refresh_linear(t),
        }
    }

    fn linear_op(&self) -> &dyn LinearOp {
        match self {
            AnySystem::Fem(s) => s.linear_op(),
            AnySystem::Diagonal(s) => s.linear_op(),
        }
    }

    fn linear_forcing(&self, out: &mut [f64]) {
        match self {
            AnySystem::Fem(s) => s.linear_forcing(out),
            AnySystem::Diagonal(s) => s.linear_forcing(out),
        }
    }

    fn nonlinearity(&self) -> &Nonlinearity {
        match self {
            AnySystem::Fem(s) => s.nonlinearity(),
            AnySystem::Diagonal(s) => s.nonlinearity(),
        }
    }

    fn initial_state(&self) -> Vec<f64> {
        match self {
            AnySystem::Fem(s) => s.initial_state(),
            AnySystem::Diagonal(s) => s.initial_state(),
        }
    }

    fn state_norm(&self, u: &[f64]) -> f64 {
        match self {
            AnySystem::Fem(s) => s.state_norm(u),
            AnySystem::Diagonal(s) => s.state_norm(u),
        }
    }

    fn full_field(&self, u: &[f64]) -> Vec<f64> {
        match self {
            AnySystem::Fem(s) => s.full_field(u),
            AnySystem::Diagonal(s) => s.full_field(u),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expmath::densify;
    use crate::mesh::{build_rect_mesh, BoundaryTag};

    fn strip_system() -> FemSystem {
        let mut mesh = build_rect_mesh(4, 3, 1.0, 1.0).unwrap();
        mesh.tag_boundary(|x, _| {
            if x == 0.0 {
                BoundaryTag::Dirichlet
            } else {
                BoundaryTag::Neumann
            }
        });
        FemSystem::new(
            mesh,
            CoefficientField::isotropic(|t| 1.0 + (-t).exp()),
            Nonlinearity::zero(),
            |_, _| 1.0,
            |_, _| 0.0,
        )
        .unwrap()
    }

    #[test]
    fn fem_operator_matches_direct_mass_solve() {
        let mut sys = strip_system();
        sys.refresh_linear(0.3).unwrap();
        let n = sys.dim();
        assert_eq!(n, 4 * 4);
        let k_full = crate::assembly::assemble_stiffness(sys.mesh(), sys.coefficients(), 0.3).unwrap();
        let (k_ff, coupling) = crate::assembly::apply_dirichlet(&k_full, sys.dof_map(), sys.lift()).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = vec![0.0; n];
        sys.linear_op().apply(&x, &mut y);
        // Oracle: dense solve of M y = -K x.
        let m_dense = sys.mass_free().to_dense();
        let rhs = nalgebra::DVector::from_vec(k_ff.matvec(&x)).map(|v| -v);
        let y_ref = m_dense.clone().cholesky().unwrap().solve(&rhs);
        for i in 0..n {
            assert!((y[i] - y_ref[i]).abs() < 1e-11);
        }
        // Forcing: -M^{-1} (K lift) restricted to free rows.
        let mut f = vec![0.0; n];
        sys.linear_forcing(&mut f);
        let f_ref = m_dense.cholesky().unwrap().solve(&nalgebra::DVector::from_vec(coupling).map(|v| -v));
        for i in 0..n {
            assert!((f[i] - f_ref[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn refresh_tracks_the_requested_time() {
        let mut sys = strip_system();
        assert_eq!(sys.refreshed_at(), None);
        sys.refresh_linear(0.25).unwrap();
        assert_eq!(sys.refreshed_at(), Some(0.25));
        let d0 = densify(sys.linear_op());
        sys.refresh_linear(5.0).unwrap();
        let d1 = densify(sys.linear_op());
        // D(t) = 1 + e^{-t} shrinks with t, so the operator must change.
        assert!((d0[(0, 0)] - d1[(0, 0)]).abs() > 1e-3);
    }

    #[test]
    fn initial_state_is_the_projected_function_on_free_dofs() {
        let sys = strip_system();
        // u0 = 0 projects to zero.
        assert!(sys.initial_state().iter().all(|&v| v == 0.0));
        // Full field carries the boundary lift.
        let full = sys.full_field(&sys.initial_state());
        let mesh = sys.mesh();
        for (node, p) in mesh.nodes().iter().enumerate() {
            let expect = if p[0] == 0.0 { 1.0 } else { 0.0 };
            assert_eq!(full[node], expect);
        }
    }

    #[test]
    fn state_norm_is_the_mass_weighted_norm() {
        let sys = strip_system();
        let n = sys.dim();
        let u = vec![1.0; n];
        let norm = sys.state_norm(&u);
        let direct = crate::assembly::l2_norm(sys.mass_free(), &u).unwrap();
        assert_eq!(norm, direct);
        assert!(norm > 0.0);
    }

    #[test]
    fn diagonal_system_evaluates_lambda_per_index() {
        let mut sys = DiagonalSystem::new(
            vec![1.0, 2.0],
            |t, i| -(1.0 + t) * (i + 1) as f64,
            Nonlinearity::zero(),
        );
        sys.refresh_linear(1.0).unwrap();
        let mut y = vec![0.0; 2];
        sys.linear_op().apply(&[1.0, 1.0], &mut y);
        assert_eq!(y, vec![-2.0, -4.0]);
        assert_eq!(sys.state_norm(&[3.0, 4.0]), 5.0);
        assert_eq!(sys.lambda_at(0.0, 1), -2.0);
    }
}
