//! P1 finite element assembly on triangle meshes.
//!
//! Sign conventions: the continuous operator is
//! A(t) u = div(q_diff grad u) - q_adv . grad u, and the assembled stiffness
//! matrix K(t) represents the bilinear form
//! a(t)(u, v) = int q_diff grad u . grad v + (q_adv . grad u) v dx
//!            + sum over Robin facets of int alpha0 u v ds
//!            + c0 int u v dx,
//! so the semi-discrete system reads M du/dt = -K(t) u + loads.

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh};
use crate::quadrature::{triangle_gauss_64, triangle_midpoint_rule};
use crate::sparse::{BandCholesky, CsrMatrix};

/// Time- and space-dependent coefficients of the linear part.
pub struct CoefficientField {
    q_diff: Box<dyn Fn(f64, f64, f64) -> [[f64; 2]; 2] + Send + Sync>,
    q_adv: Box<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>,
    /// Zero-order shift c0 added as c0 * mass; keeps weakly nonmonotone
    /// forms coercive. Default 0.
    pub gaarding_shift: f64,
}

impl CoefficientField {
    pub fn new(
        q_diff: impl Fn(f64, f64, f64) -> [[f64; 2]; 2] + Send + Sync + 'static,
        q_adv: impl Fn(f64, f64, f64) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        Self {
            q_diff: Box::new(q_diff),
            q_adv: Box::new(q_adv),
            gaarding_shift: 0.0,
        }
    }

    /// Scalar diffusion d(t) * I without advection.
    pub fn isotropic(d: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(
            move |t, _x, _y| {
                let v = d(t);
                [[v, 0.0], [0.0, v]]
            },
            |_t, _x, _y| [0.0, 0.0],
        )
    }

    pub fn with_gaarding_shift(mut self, c0: f64) -> Self {
        self.gaarding_shift = c0;
        self
    }

    /// Evaluates the diffusion tensor and rejects tensors that are not
    /// symmetric positive definite.
    pub fn eval_diff(&self, t: f64, x: f64, y: f64) -> Result<[[f64; 2]; 2]> {
        let q = (self.q_diff)(t, x, y);
        let scale = q[0][0].abs().max(q[1][1].abs()).max(1e-300);
        if (q[0][1] - q[1][0]).abs() > 1e-12 * scale {
            return Err(Error::Assembly(format!(
                "diffusion tensor not symmetric at (t, x, y) = ({t}, {x}, {y})"
            )));
        }
        let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
        if !(q[0][0] > 0.0 && det > 0.0) {
            return Err(Error::Assembly(format!(
                "diffusion tensor not positive definite at (t, x, y) = ({t}, {x}, {y})"
            )));
        }
        Ok(q)
    }

    pub fn eval_adv(&self, t: f64, x: f64, y: f64) -> [f64; 2] {
        (self.q_adv)(t, x, y)
    }
}

/// Area and constant P1 basis gradients of a triangle.
fn p1_geometry(v: &[[f64; 2]; 3]) -> (f64, [[f64; 2]; 3]) {
    let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
    let area = 0.5 * det;
    let grads = [
        [(v[1][1] - v[2][1]) / det, (v[2][0] - v[1][0]) / det],
        [(v[2][1] - v[0][1]) / det, (v[0][0] - v[2][0]) / det],
        [(v[0][1] - v[1][1]) / det, (v[1][0] - v[0][0]) / det],
    ];
    (area, grads)
}

/// Barycentric coordinates of (x, y) in the triangle.
fn barycentric(v: &[[f64; 2]; 3], x: f64, y: f64) -> [f64; 3] {
    let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
    let l0 = ((v[1][0] - x) * (v[2][1] - y) - (v[2][0] - x) * (v[1][1] - y)) / det;
    let l1 = ((v[2][0] - x) * (v[0][1] - y) - (v[0][0] - x) * (v[2][1] - y)) / det;
    [l0, l1, 1.0 - l0 - l1]
}

/// Exact P1 element mass matrix: area / 12 * [[2,1,1],[1,2,1],[1,1,2]].
fn element_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// Element stiffness for the coefficients frozen at time t, integrated with
/// the edge-midpoint rule (exact for the polynomial degrees met here when
/// coefficients are element-wise smooth).
fn element_stiffness(
    coeff: &CoefficientField,
    t: f64,
    v: &[[f64; 2]; 3],
) -> Result<[[f64; 3]; 3]> {
    let (_, grads) = p1_geometry(v);
    let mut k = [[0.0; 3]; 3];
    for ([x, y], w) in triangle_midpoint_rule(v) {
        let q = coeff.eval_diff(t, x, y)?;
        let adv = coeff.eval_adv(t, x, y);
        let lam = barycentric(v, x, y);
        for (b, gb) in grads.iter().enumerate() {
            let flux = [
                q[0][0] * gb[0] + q[0][1] * gb[1],
                q[1][0] * gb[0] + q[1][1] * gb[1],
            ];
            let drift = adv[0] * gb[0] + adv[1] * gb[1];
            for (a, ga) in grads.iter().enumerate() {
                k[a][b] += w * (flux[0] * ga[0] + flux[1] * ga[1] + drift * lam[a]);
            }
        }
    }
    if coeff.gaarding_shift != 0.0 {
        let (area, _) = p1_geometry(v);
        let m = element_mass(area);
        for a in 0..3 {
            for b in 0..3 {
                k[a][b] += coeff.gaarding_shift * m[a][b];
            }
        }
    }
    Ok(k)
}

/// Robin facet contribution alpha0 * facet P1 mass (len/6 * [[2,1],[1,2]]).
fn facet_robin(alpha0: f64, pa: [f64; 2], pb: [f64; 2]) -> [[f64; 2]; 2] {
    let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
    let d = alpha0 * len / 3.0;
    let o = alpha0 * len / 6.0;
    [[d, o], [o, d]]
}

/// Consistent mass matrix over all nodes.
pub fn assemble_mass(mesh: &Mesh) -> CsrMatrix {
    let n = mesh.n_nodes();
    let mut trips = Vec::with_capacity(9 * mesh.n_elements());
    for e in 0..mesh.n_elements() {
        let verts = mesh.element_coords(e);
        let (area, _) = p1_geometry(&verts);
        let m = element_mass(area);
        let idx = mesh.elements()[e];
        for a in 0..3 {
            for b in 0..3 {
                trips.push((idx[a], idx[b], m[a][b]));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &trips).expect("mass triplets in range")
}

/// Stiffness matrix over all nodes for the coefficients frozen at time t,
/// including Robin boundary terms and the Gaarding shift.
pub fn assemble_stiffness(mesh: &Mesh, coeff: &CoefficientField, t: f64) -> Result<CsrMatrix> {
    let n = mesh.n_nodes();
    let mut trips = Vec::with_capacity(9 * mesh.n_elements() + 4 * mesh.facets().len());
    for e in 0..mesh.n_elements() {
        let verts = mesh.element_coords(e);
        let k = element_stiffness(coeff, t, &verts)?;
        let idx = mesh.elements()[e];
        for a in 0..3 {
            for b in 0..3 {
                trips.push((idx[a], idx[b], k[a][b]));
            }
        }
    }
    for f in mesh.facets() {
        if let BoundaryTag::Robin { alpha0 } = f.tag {
            let [na, nb] = f.nodes;
            let r = facet_robin(alpha0, mesh.nodes()[na], mesh.nodes()[nb]);
            let idx = [na, nb];
            for a in 0..2 {
                for b in 0..2 {
                    trips.push((idx[a], idx[b], r[a][b]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &trips)
}

/// Weighted norm sqrt(v^T M v); M must be the (symmetric positive) mass
/// matrix of the same space as v.
pub fn l2_norm(mass: &CsrMatrix, v: &[f64]) -> Result<f64> {
    if mass.n_rows() != v.len() || mass.n_cols() != v.len() {
        return Err(Error::Dimension(format!(
            "norm of length-{} vector against {}x{} mass matrix",
            v.len(),
            mass.n_rows(),
            mass.n_cols()
        )));
    }
    let mv = mass.matvec(v);
    let q: f64 = v.iter().zip(&mv).map(|(a, b)| a * b).sum();
    // Tiny negative values can appear from round-off.
    Ok(q.max(0.0).sqrt())
}

/// L2 projection onto the P1 space: solves M c = b with
/// b_i = int f phi_i dx over the whole mesh.
pub fn project_l2(mesh: &Mesh, f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    let mass = assemble_mass(mesh);
    let chol = BandCholesky::factor(&mass)
        .map_err(|e| Error::Numerical(format!("mass matrix factorization failed: {e}")))?;
    let mut b = vec![0.0; mesh.n_nodes()];
    for e in 0..mesh.n_elements() {
        let verts = mesh.element_coords(e);
        let idx = mesh.elements()[e];
        for ([x, y], w) in triangle_gauss_64(&verts) {
            let fv = f(x, y);
            let lam = barycentric(&verts, x, y);
            for a in 0..3 {
                b[idx[a]] += w * fv * lam[a];
            }
        }
    }
    chol.solve_into(&mut b);
    Ok(b)
}

/// L2(domain) distance between a P1 field (full nodal values) and a given
/// function, integrated element-wise with the high-order rule.
pub fn l2_error_vs_function(
    mesh: &Mesh,
    full_values: &[f64],
    f: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    if full_values.len() != mesh.n_nodes() {
        return Err(Error::Dimension(format!(
            "field has {} values, mesh has {} nodes",
            full_values.len(),
            mesh.n_nodes()
        )));
    }
    let mut acc = 0.0;
    for e in 0..mesh.n_elements() {
        let verts = mesh.element_coords(e);
        let idx = mesh.elements()[e];
        for ([x, y], w) in triangle_gauss_64(&verts) {
            let lam = barycentric(&verts, x, y);
            let uh = lam[0] * full_values[idx[0]]
                + lam[1] * full_values[idx[1]]
                + lam[2] * full_values[idx[2]];
            acc += w * (uh - f(x, y)).powi(2);
        }
    }
    Ok(acc.max(0.0).sqrt())
}

/// Mapping between full node numbering and the free (non-Dirichlet)
/// unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    free_of_node: Vec<Option<usize>>,
    node_of_free: Vec<usize>,
}

impl DofMap {
    /// Classifies nodes by the mesh's Dirichlet marks.
    pub fn new(mesh: &Mesh) -> Result<Self> {
        let marks = mesh.dirichlet_nodes();
        let mut free_of_node = Vec::with_capacity(marks.len());
        let mut node_of_free = Vec::new();
        for (node, &is_dirichlet) in marks.iter().enumerate() {
            if is_dirichlet {
                free_of_node.push(None);
            } else {
                free_of_node.push(Some(node_of_free.len()));
                node_of_free.push(node);
            }
        }
        if node_of_free.is_empty() {
            return Err(Error::Assembly(
                "every node is Dirichlet; the reduced system is empty".into(),
            ));
        }
        Ok(Self {
            free_of_node,
            node_of_free,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.free_of_node.len()
    }

    pub fn n_free(&self) -> usize {
        self.node_of_free.len()
    }

    pub fn free_index(&self, node: usize) -> Option<usize> {
        self.free_of_node[node]
    }

    pub fn node_index(&self, free: usize) -> usize {
        self.node_of_free[free]
    }

    /// Extracts the free entries of a full-length vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        assert_eq!(full.len(), self.n_nodes(), "restrict length");
        self.node_of_free.iter().map(|&n| full[n]).collect()
    }

    /// Scatters free values into a full vector, filling constrained nodes
    /// from `boundary` (typically a Dirichlet lift).
    pub fn prolong_with(&self, free: &[f64], boundary: &[f64]) -> Vec<f64> {
        assert_eq!(free.len(), self.n_free(), "prolong free length");
        assert_eq!(boundary.len(), self.n_nodes(), "prolong boundary length");
        let mut full = boundary.to_vec();
        for (fi, &node) in self.node_of_free.iter().enumerate() {
            full[node] = free[fi];
        }
        full
    }
}

/// Dirichlet boundary values as a full-length vector (zero at free nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletLift {
    pub full: Vec<f64>,
}

impl DirichletLift {
    pub fn from_rule(mesh: &Mesh, map: &DofMap, g: impl Fn(f64, f64) -> f64) -> Self {
        let mut full = vec![0.0; mesh.n_nodes()];
        for node in 0..mesh.n_nodes() {
            if map.free_index(node).is_none() {
                let [x, y] = mesh.nodes()[node];
                full[node] = g(x, y);
            }
        }
        Self { full }
    }
}

/// Reduces a full matrix to the free-free block and the coupling vector
/// (K * lift) restricted to free rows, so that the constrained system reads
/// M_ff du/dt = -(K_ff u + coupling) + loads.
pub fn apply_dirichlet(
    k: &CsrMatrix,
    map: &DofMap,
    lift: &DirichletLift,
) -> Result<(CsrMatrix, Vec<f64>)> {
    if k.n_rows() != map.n_nodes() || k.n_cols() != map.n_nodes() {
        return Err(Error::Dimension(format!(
            "matrix is {}x{}, mesh has {} nodes",
            k.n_rows(),
            k.n_cols(),
            map.n_nodes()
        )));
    }
    if lift.full.len() != map.n_nodes() {
        return Err(Error::Dimension("lift length mismatch".into()));
    }
    let nf = map.n_free();
    let mut trips = Vec::new();
    for node in 0..map.n_nodes() {
        if let Some(fi) = map.free_index(node) {
            for col in 0..map.n_nodes() {
                let v = k.get(node, col);
                if v != 0.0 {
                    if let Some(fj) = map.free_index(col) {
                        trips.push((fi, fj, v));
                    }
                }
            }
        }
    }
    let k_ff = CsrMatrix::from_triplets(nf, nf, &trips)?;
    let coupling = map.restrict(&k.matvec(&lift.full));
    Ok((k_ff, coupling))
}

/// Restricts a full matrix to the free-free block (used for the mass).
pub fn restrict_matrix(m: &CsrMatrix, map: &DofMap) -> CsrMatrix {
    let nf = map.n_free();
    let mut trips = Vec::new();
    for fi in 0..nf {
        let node = map.node_index(fi);
        for col in 0..map.n_nodes() {
            let v = m.get(node, col);
            if v != 0.0 {
                if let Some(fj) = map.free_index(col) {
                    trips.push((fi, fj, v));
                }
            }
        }
    }
    CsrMatrix::from_triplets(nf, nf, &trips).expect("restricted triplets in range")
}

/// Where one local stiffness entry lands in the reduced system.
#[derive(Debug, Clone, Copy)]
enum Target {
    /// Value slot in the free-free CSR matrix.
    Slot(usize),
    /// Free row coupled to a constrained column: accumulate value * lift.
    Couple { row: usize, lift_node: usize },
    /// Constrained row: discarded.
    Skip,
}

/// Precomputed scatter map for refilling the reduced stiffness matrix and
/// coupling vector in place each step, without re-sorting triplets. The
/// element loop order is fixed, so refills are bitwise deterministic.
pub struct StiffnessAssembler {
    pattern: CsrMatrix,
    element_targets: Vec<[[Target; 3]; 3]>,
    facet_targets: Vec<(usize, [[Target; 2]; 2], [f64; 2], [f64; 2], f64)>,
}

impl StiffnessAssembler {
    pub fn new(mesh: &Mesh, map: &DofMap) -> Self {
        let mut pairs = Vec::with_capacity(9 * mesh.n_elements());
        for e in mesh.elements() {
            for &a in e {
                for &b in e {
                    if let (Some(fi), Some(fj)) = (map.free_index(a), map.free_index(b)) {
                        pairs.push((fi, fj));
                    }
                }
            }
        }
        let pattern = CsrMatrix::pattern_from_pairs(map.n_free(), map.n_free(), pairs)
            .expect("pattern indices in range");

        let classify = |a: usize, b: usize| -> Target {
            match (map.free_index(a), map.free_index(b)) {
                (Some(fi), Some(fj)) => Target::Slot(
                    pattern
                        .slot(fi, fj)
                        .expect("pattern covers all free element pairs"),
                ),
                (Some(fi), None) => Target::Couple {
                    row: fi,
                    lift_node: b,
                },
                (None, _) => Target::Skip,
            }
        };

        let mut element_targets = Vec::with_capacity(mesh.n_elements());
        for e in mesh.elements() {
            let mut t = [[Target::Skip; 3]; 3];
            for (la, &a) in e.iter().enumerate() {
                for (lb, &b) in e.iter().enumerate() {
                    t[la][lb] = classify(a, b);
                }
            }
            element_targets.push(t);
        }

        let mut facet_targets = Vec::new();
        for (fid, f) in mesh.facets().iter().enumerate() {
            if let BoundaryTag::Robin { alpha0 } = f.tag {
                let [na, nb] = f.nodes;
                let mut t = [[Target::Skip; 2]; 2];
                let idx = [na, nb];
                for a in 0..2 {
                    for b in 0..2 {
                        t[a][b] = classify(idx[a], idx[b]);
                    }
                }
                facet_targets.push((fid, t, mesh.nodes()[na], mesh.nodes()[nb], alpha0));
            }
        }

        Self {
            pattern,
            element_targets,
            facet_targets,
        }
    }

    /// Empty matrix with the reduced sparsity pattern, for use as the
    /// `k_ff` argument of [`Self::assemble_into`].
    pub fn new_matrix(&self) -> CsrMatrix {
        self.pattern.clone()
    }

    /// Refills `k_ff` and `coupling` for the coefficients frozen at time t.
    /// `lift_full` supplies Dirichlet values for the coupling accumulation.
    pub fn assemble_into(
        &self,
        mesh: &Mesh,
        coeff: &CoefficientField,
        t: f64,
        lift_full: &[f64],
        k_ff: &mut CsrMatrix,
        coupling: &mut [f64],
    ) -> Result<()> {
        k_ff.set_zero();
        coupling.iter_mut().for_each(|c| *c = 0.0);
        let scatter =
            |targets: &[&[Target]], k_local: &[&[f64]], k: &mut CsrMatrix, c: &mut [f64]| {
                for (row_t, row_v) in targets.iter().zip(k_local) {
                    for (tgt, &val) in row_t.iter().zip(*row_v) {
                        match *tgt {
                            Target::Slot(s) => k.values_mut()[s] += val,
                            Target::Couple { row, lift_node } => {
                                c[row] += val * lift_full[lift_node]
                            }
                            Target::Skip => {}
                        }
                    }
                }
            };
        for (e, targets) in self.element_targets.iter().enumerate() {
            let verts = mesh.element_coords(e);
            let k_local = element_stiffness(coeff, t, &verts)?;
            scatter(
                &[&targets[0], &targets[1], &targets[2]],
                &[&k_local[0], &k_local[1], &k_local[2]],
                k_ff,
                coupling,
            );
        }
        for (_fid, targets, pa, pb, alpha0) in &self.facet_targets {
            let r = facet_robin(*alpha0, *pa, *pb);
            scatter(
                &[&targets[0], &targets[1]],
                &[&r[0], &r[1]],
                k_ff,
                coupling,
            );
        }
        Ok(())
    }
}
