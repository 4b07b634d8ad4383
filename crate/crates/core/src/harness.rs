//! Convergence study drivers.
//!
//! Each study builds fresh systems per resolution, computes the reference
//! state first, calibrates the stability ball from it, then runs the rows in
//! parallel. Rows that fail are recorded in the report instead of dropped;
//! the order fit uses the surviving rows. Row order and all accumulation
//! orders are fixed, so a study is bitwise reproducible regardless of the
//! thread count.

use crate::assembly::{l2_error_vs_function, project_l2};
use crate::error::{Error, Result};
use crate::expmath::KrylovConfig;
use crate::integrator::{
    reference_solve, run_scheme, ReferenceMode, RunDiagnostics, RunOptions, RunResult, Scheme,
    StepOptions, TimeGrid,
};
use crate::problems::{
    heat_dirichlet, heat_exact, reactive_transport, scalar_decay, scalar_decay_exact, InitialData,
    TransportConfig,
};
use crate::report::ConvergenceReport;
use crate::system::{AnySystem, SemilinearSystem};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::Path;

/// Absolute error floor below which convergence rates are meaningless;
/// scaled by the reference magnitude when that exceeds one.
fn error_floor(scale: f64) -> f64 {
    1e-11 * scale.max(1.0)
}

/// A problem a study can instantiate, possibly at several mesh sizes.
#[derive(Debug, Clone)]
pub enum ProblemSpec {
    Transport(TransportConfig),
    Heat { nx: usize, ny: usize },
    ScalarDecay,
}

impl ProblemSpec {
    pub fn build(&self) -> Result<AnySystem> {
        match self {
            ProblemSpec::Transport(cfg) => reactive_transport(cfg),
            ProblemSpec::Heat { nx, ny } => heat_dirichlet(*nx, *ny),
            ProblemSpec::ScalarDecay => Ok(scalar_decay()),
        }
    }

    /// The same problem on an n x n mesh.
    pub fn with_mesh(&self, n: usize) -> Result<ProblemSpec> {
        match self {
            ProblemSpec::Transport(cfg) => {
                let mut cfg = cfg.clone();
                cfg.nx = n;
                cfg.ny = n;
                Ok(ProblemSpec::Transport(cfg))
            }
            ProblemSpec::Heat { .. } => Ok(ProblemSpec::Heat { nx: n, ny: n }),
            ProblemSpec::ScalarDecay => Err(Error::Config(
                "mesh refinement does not apply to a scalar problem".into(),
            )),
        }
    }

    /// Largest mesh subdivision count, when the problem is mesh-based.
    pub fn mesh_n(&self) -> Option<usize> {
        match self {
            ProblemSpec::Transport(cfg) => Some(cfg.nx.max(cfg.ny)),
            ProblemSpec::Heat { nx, ny } => Some(*nx.max(ny)),
            ProblemSpec::ScalarDecay => None,
        }
    }

    /// Mesh size h of the n x n refinement (longest element edge).
    pub fn mesh_h(&self, n: usize) -> Option<f64> {
        let (l1, l2) = match self {
            ProblemSpec::Transport(cfg) => (cfg.l1, cfg.l2),
            ProblemSpec::Heat { .. } => (1.0, 1.0),
            ProblemSpec::ScalarDecay => return None,
        };
        Some((l1 / n as f64).hypot(l2 / n as f64))
    }

    /// Exact final state in study coordinates, for problems that have one.
    pub fn closed_form(&self, t: f64) -> Option<Vec<f64>> {
        match self {
            ProblemSpec::ScalarDecay => Some(vec![scalar_decay_exact(t)]),
            _ => None,
        }
    }

    /// Exact solution field at time t, for problems that have one.
    pub fn exact_field(&self, t: f64) -> Option<Box<dyn Fn(f64, f64) -> f64 + Send + Sync>> {
        match self {
            ProblemSpec::Heat { .. } => Some(Box::new(heat_exact(t))),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ProblemSpec::Transport(cfg) => {
                let d = if cfg.variable_diffusion {
                    "variable diffusion"
                } else {
                    "constant diffusion"
                };
                let init = match cfg.initial {
                    InitialData::Zero => "",
                    InitialData::Smooth => ", smooth start",
                    InitialData::Front => ", front start",
                };
                format!("reactive transport {}x{}, {d}{init}", cfg.nx, cfg.ny)
            }
            ProblemSpec::Heat { nx, ny } => format!("heat {nx}x{ny}"),
            ProblemSpec::ScalarDecay => "scalar decay".into(),
        }
    }
}

/// Knobs shared by every study.
#[derive(Debug, Clone)]
pub struct StudySettings {
    pub krylov: KrylovConfig,
    pub scheme: Scheme,
    /// Stability ball radius as a multiple of the calibration norm.
    pub r_factor: f64,
    /// Explicit stability radius; overrides the calibrated one.
    pub stability_r: Option<f64>,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            krylov: KrylovConfig::default(),
            scheme: Scheme::Magros,
            r_factor: 10.0,
            stability_r: None,
        }
    }
}

fn stability_limit(settings: &StudySettings, base_norm: f64) -> f64 {
    settings
        .stability_r
        .unwrap_or(settings.r_factor * base_norm.max(1.0))
}

fn stability_rule(settings: &StudySettings, basis: &str) -> String {
    match settings.stability_r {
        Some(r) => format!("configured radius {r:.6e}"),
        None => format!("{} x max({basis}, 1)", settings.r_factor),
    }
}

/// How a temporal study obtains its reference state at the final time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemporalReference {
    /// Production scheme at this step count (must be strictly finer than
    /// every study resolution).
    SchemeSteps(usize),
    /// Adaptive dense ODE integration of the same semi-discrete system.
    Oracle { tol: f64 },
    /// The problem's closed-form solution.
    ClosedForm,
}

impl TemporalReference {
    fn describe(&self) -> String {
        match self {
            TemporalReference::SchemeSteps(m) => format!("magros at M={m}"),
            TemporalReference::Oracle { tol } => format!("adaptive oracle, tol={tol:.1e}"),
            TemporalReference::ClosedForm => "closed form".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TemporalStudy {
    pub problem: ProblemSpec,
    pub t_final: f64,
    pub steps_list: Vec<usize>,
    pub reference: TemporalReference,
    pub settings: StudySettings,
    /// Optional finer mesh on which the finest step counts are repeated to
    /// confirm the temporal errors do not sit on the spatial floor. Needs a
    /// scheme reference and a mesh-based problem.
    pub floor_check_mesh: Option<usize>,
}

struct RowOutcome {
    label: String,
    resolution: f64,
    outcome: Result<(f64, RunDiagnostics)>,
}

/// One study row per step count, in parallel; errors are measured against
/// `u_ref` in the row system's own norm.
fn temporal_rows(
    problem: &ProblemSpec,
    scheme: Scheme,
    t_final: f64,
    steps_list: &[usize],
    u_ref: &[f64],
    norm_limit: f64,
    krylov: &KrylovConfig,
) -> Vec<RowOutcome> {
    steps_list
        .par_iter()
        .map(|&m| {
            let outcome = (|| {
                let mut sys = problem.build()?;
                if sys.dim() != u_ref.len() {
                    return Err(Error::Dimension(format!(
                        "study state has {} entries, reference has {}",
                        sys.dim(),
                        u_ref.len()
                    )));
                }
                let grid = TimeGrid::new(t_final, m)?;
                let opts = RunOptions {
                    step: StepOptions {
                        krylov: krylov.clone(),
                        ..StepOptions::default()
                    },
                    norm_limit: Some(norm_limit),
                    snapshot_steps: Vec::new(),
                };
                let run = run_scheme(&mut sys, scheme, &grid, &opts)?;
                let diff: Vec<f64> = run
                    .final_state
                    .iter()
                    .zip(u_ref)
                    .map(|(a, b)| a - b)
                    .collect();
                Ok((sys.state_norm(&diff), run.diagnostics))
            })();
            RowOutcome {
                label: format!("M={m}"),
                resolution: t_final / m as f64,
                outcome,
            }
        })
        .collect()
}

/// Folds row outcomes into a report plus run-wide diagnostics
/// (max Krylov dimension, max trajectory norm over the successful rows).
fn assemble_report(
    title: String,
    rows: Vec<RowOutcome>,
    floor: f64,
) -> (ConvergenceReport, usize, f64) {
    let mut max_dim = 0usize;
    let mut max_norm = 0.0f64;
    let tuples: Vec<(String, f64, Result<f64>)> = rows
        .into_iter()
        .map(|r| {
            let err = r.outcome.map(|(e, diag)| {
                max_dim = max_dim.max(diag.max_krylov_dim);
                max_norm = max_norm.max(diag.max_state_norm);
                e
            });
            (r.label, r.resolution, err)
        })
        .collect();
    (
        ConvergenceReport::from_rows(title, tuples, floor),
        max_dim,
        max_norm,
    )
}

fn validate_steps(steps_list: &[usize]) -> Result<()> {
    if steps_list.is_empty() {
        return Err(Error::Config("empty resolution list".into()));
    }
    if !steps_list.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Config(
            "step counts must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn validate_reference(
    reference: TemporalReference,
    steps_list: &[usize],
    problem: &ProblemSpec,
) -> Result<()> {
    match reference {
        TemporalReference::SchemeSteps(r) => {
            let finest = *steps_list.last().expect("non-empty by validate_steps");
            if r <= finest {
                return Err(Error::Config(format!(
                    "reference step count {r} must be strictly finer than the finest study count {finest}"
                )));
            }
        }
        TemporalReference::Oracle { tol } => {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::Config(format!("oracle tolerance {tol} must be positive")));
            }
        }
        TemporalReference::ClosedForm => {
            if problem.closed_form(0.0).is_none() {
                return Err(Error::Config(format!(
                    "no closed-form solution for {}",
                    problem.label()
                )));
            }
        }
    }
    Ok(())
}

/// Temporal convergence study: fixed mesh, halving step sizes, error at the
/// final time against the configured reference.
pub fn temporal_study(study: &TemporalStudy) -> Result<ConvergenceReport> {
    validate_steps(&study.steps_list)?;
    validate_reference(study.reference, &study.steps_list, &study.problem)?;
    if let Some(n) = study.floor_check_mesh {
        if !matches!(study.reference, TemporalReference::SchemeSteps(_)) {
            return Err(Error::Config(
                "the spatial floor check needs a scheme reference".into(),
            ));
        }
        match study.problem.mesh_n() {
            None => {
                return Err(Error::Config(
                    "the spatial floor check needs a mesh-based problem".into(),
                ))
            }
            Some(base) if n <= base => {
                return Err(Error::Config(format!(
                    "floor check mesh {n} must be finer than the study mesh {base}"
                )))
            }
            Some(_) => {}
        }
    }

    let settings = &study.settings;
    let (u_ref, ref_norm) = temporal_reference_state(&study.problem, study.t_final, study.reference, &settings.krylov)?;
    let limit = stability_limit(settings, ref_norm);
    let rows = temporal_rows(
        &study.problem,
        settings.scheme,
        study.t_final,
        &study.steps_list,
        &u_ref,
        limit,
        &settings.krylov,
    );
    let title = format!(
        "{}: temporal convergence, {}",
        study.problem.label(),
        settings.scheme
    );
    let (mut report, max_dim, max_norm) = assemble_report(title, rows, error_floor(ref_norm));

    let meta = &mut report.metadata;
    meta.insert("problem".into(), study.problem.label());
    meta.insert("scheme".into(), settings.scheme.to_string());
    meta.insert("t_final".into(), format!("{}", study.t_final));
    meta.insert("reference".into(), study.reference.describe());
    meta.insert("reference_norm".into(), format!("{ref_norm:.17e}"));
    meta.insert("stability_bound".into(), format!("{limit:.17e}"));
    meta.insert(
        "stability_rule".into(),
        stability_rule(settings, "reference norm"),
    );
    meta.insert("max_state_norm".into(), format!("{max_norm:.17e}"));
    meta.insert("max_krylov_dim".into(), format!("{max_dim}"));

    if let Some(n) = study.floor_check_mesh {
        let note = floor_check(study, n, limit)?;
        report.metadata.insert("floor_check".into(), note);
    }
    Ok(report)
}

fn temporal_reference_state(
    problem: &ProblemSpec,
    t_final: f64,
    reference: TemporalReference,
    krylov: &KrylovConfig,
) -> Result<(Vec<f64>, f64)> {
    let mut sys = problem.build()?;
    let u_ref = match reference {
        TemporalReference::SchemeSteps(steps) => {
            reference_solve(&mut sys, t_final, ReferenceMode::SchemeFine { steps }, krylov)?
        }
        TemporalReference::Oracle { tol } => {
            reference_solve(&mut sys, t_final, ReferenceMode::Oracle { tol }, krylov)?
        }
        TemporalReference::ClosedForm => problem.closed_form(t_final).ok_or_else(|| {
            Error::Config(format!("no closed-form solution for {}", problem.label()))
        })?,
    };
    let norm = sys.state_norm(&u_ref);
    Ok((u_ref, norm))
}

/// Repeats the finest step counts on a finer mesh and reports how much the
/// errors move. A large shift means the temporal errors were contaminated by
/// the spatial discretization and the study mesh is too coarse.
fn floor_check(study: &TemporalStudy, n: usize, limit: f64) -> Result<String> {
    let take = study.steps_list.len().min(2);
    let tail = &study.steps_list[study.steps_list.len() - take..];
    let fine = study.problem.with_mesh(n)?;
    let (u_ref, _) = temporal_reference_state(
        &fine,
        study.t_final,
        study.reference,
        &study.settings.krylov,
    )?;
    let fine_rows = temporal_rows(
        &fine,
        study.settings.scheme,
        study.t_final,
        tail,
        &u_ref,
        limit,
        &study.settings.krylov,
    );
    // Coarse-mesh errors for the same step counts, recomputed so the check
    // does not depend on row layout.
    let (u_ref_c, _) = temporal_reference_state(
        &study.problem,
        study.t_final,
        study.reference,
        &study.settings.krylov,
    )?;
    let coarse_rows = temporal_rows(
        &study.problem,
        study.settings.scheme,
        study.t_final,
        tail,
        &u_ref_c,
        limit,
        &study.settings.krylov,
    );
    let mut max_shift = 0.0f64;
    for (f, c) in fine_rows.iter().zip(&coarse_rows) {
        if let (Ok((ef, _)), Ok((ec, _))) = (&f.outcome, &c.outcome) {
            if *ec > 0.0 {
                max_shift = max_shift.max((ef - ec).abs() / ec);
            }
        }
    }
    let note = if max_shift > 0.10 {
        let msg = format!(
            "warning: finest errors shift {:.1}% on the {n}x{n} mesh; temporal errors may sit on the spatial floor",
            100.0 * max_shift
        );
        eprintln!("{msg}");
        msg
    } else {
        format!(
            "ok, finest errors shift {:.1}% on the {n}x{n} mesh",
            100.0 * max_shift
        )
    };
    Ok(note)
}

#[derive(Debug, Clone)]
pub struct SpatialStudy {
    /// Must be mesh-based with a closed-form solution field.
    pub problem: ProblemSpec,
    pub t_final: f64,
    /// Fixed step count used on every mesh; chosen so temporal errors are
    /// negligible against the spatial ones.
    pub steps: usize,
    pub meshes: Vec<usize>,
    pub settings: StudySettings,
}

/// Spatial convergence study: halving mesh sizes at a fixed small step size,
/// continuum L2 error against the exact field at the final time.
pub fn spatial_study(study: &SpatialStudy) -> Result<ConvergenceReport> {
    validate_steps(&study.meshes)?;
    if study.problem.mesh_n().is_none() {
        return Err(Error::Config(
            "spatial study needs a mesh-based problem".into(),
        ));
    }
    if study.problem.exact_field(0.0).is_none() {
        return Err(Error::Config(format!(
            "no closed-form field for {}",
            study.problem.label()
        )));
    }
    let settings = &study.settings;
    let rows: Vec<RowOutcome> = study
        .meshes
        .par_iter()
        .map(|&n| {
            let outcome = (|| {
                let spec_n = study.problem.with_mesh(n)?;
                let mut sys = spec_n.build()?;
                let u0 = sys.initial_state();
                let limit = stability_limit(settings, sys.state_norm(&u0));
                let grid = TimeGrid::new(study.t_final, study.steps)?;
                let opts = RunOptions {
                    step: StepOptions {
                        krylov: settings.krylov.clone(),
                        ..StepOptions::default()
                    },
                    norm_limit: Some(limit),
                    snapshot_steps: Vec::new(),
                };
                let run = run_scheme(&mut sys, settings.scheme, &grid, &opts)?;
                let fem = sys.as_fem().ok_or_else(|| {
                    Error::Config("spatial study needs a mesh-based problem".into())
                })?;
                let exact = study
                    .problem
                    .exact_field(study.t_final)
                    .expect("checked above");
                let err = fem.l2_error_vs(&run.final_state, |x, y| exact(x, y))?;
                Ok((err, run.diagnostics))
            })();
            RowOutcome {
                label: format!("{n}x{n}"),
                resolution: study.problem.mesh_h(n).expect("mesh-based"),
                outcome,
            }
        })
        .collect();
    let title = format!(
        "{}: spatial convergence, {}",
        study.problem.label(),
        settings.scheme
    );
    let (mut report, max_dim, max_norm) = assemble_report(title, rows, error_floor(1.0));
    let dt = study.t_final / study.steps as f64;
    let meta = &mut report.metadata;
    meta.insert("problem".into(), study.problem.label());
    meta.insert("scheme".into(), settings.scheme.to_string());
    meta.insert("t_final".into(), format!("{}", study.t_final));
    meta.insert("steps".into(), format!("{}", study.steps));
    meta.insert("dt".into(), format!("{dt:.6e}"));
    meta.insert(
        "stability_rule".into(),
        stability_rule(settings, "initial norm, per mesh"),
    );
    meta.insert("max_state_norm".into(), format!("{max_norm:.17e}"));
    meta.insert("max_krylov_dim".into(), format!("{max_dim}"));
    Ok(report)
}

/// Best-approximation control for a spatial study: the L2 error of the L2
/// projection of the exact field on each mesh. No solve error can fall below
/// this curve, so it bounds what the study can observe.
pub fn projection_control(
    problem: &ProblemSpec,
    meshes: &[usize],
    t: f64,
) -> Result<ConvergenceReport> {
    validate_steps(meshes)?;
    if problem.mesh_n().is_none() || problem.exact_field(0.0).is_none() {
        return Err(Error::Config(
            "projection control needs a mesh-based problem with a closed-form field".into(),
        ));
    }
    let rows: Vec<(String, f64, Result<f64>)> = meshes
        .par_iter()
        .map(|&n| {
            let outcome = (|| {
                let spec_n = problem.with_mesh(n)?;
                let sys = spec_n.build()?;
                let fem = sys
                    .as_fem()
                    .ok_or_else(|| Error::Config("projection control needs a mesh".into()))?;
                let exact = problem.exact_field(t).expect("checked above");
                let p = project_l2(fem.mesh(), |x, y| exact(x, y))?;
                l2_error_vs_function(fem.mesh(), &p, |x, y| exact(x, y))
            })();
            (
                format!("{n}x{n}"),
                problem.mesh_h(n).expect("mesh-based"),
                outcome,
            )
        })
        .collect();
    let mut report = ConvergenceReport::from_rows(
        format!("{}: L2 projection control", problem.label()),
        rows,
        error_floor(1.0),
    );
    report.metadata.insert("t".into(), format!("{t}"));
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct ComparisonStudy {
    /// Shared transport setup; the diffusion flag is overridden per curve.
    pub transport: TransportConfig,
    pub t_final: f64,
    pub steps_list: Vec<usize>,
    pub reference_steps: usize,
    pub settings: StudySettings,
}

#[derive(Debug, Clone)]
pub struct ComparisonOutcome {
    pub steps_list: Vec<usize>,
    pub t_final: f64,
    pub variable_magros: ConvergenceReport,
    pub constant_magros: ConvergenceReport,
    pub constant_exprb2: ConvergenceReport,
    pub metadata: BTreeMap<String, String>,
}

impl ComparisonOutcome {
    pub fn reports(&self) -> [&ConvergenceReport; 3] {
        [
            &self.variable_magros,
            &self.constant_magros,
            &self.constant_exprb2,
        ]
    }

    /// One CSV with all three error curves side by side.
    pub fn write_combined_csv(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "# reactive transport scheme comparison")?;
        for (k, v) in &self.metadata {
            writeln!(file, "# {k}: {v}")?;
        }
        let mut w = csv::Writer::from_writer(file);
        w.write_record([
            "steps",
            "dt",
            "error_magros_variable",
            "error_magros_constant",
            "error_exprb2_constant",
        ])?;
        let cell = |rep: &ConvergenceReport, i: usize| {
            rep.rows[i]
                .error
                .map(|e| format!("{e:.12e}"))
                .unwrap_or_default()
        };
        for (i, &m) in self.steps_list.iter().enumerate() {
            w.write_record([
                format!("{m}"),
                format!("{:.12e}", self.t_final / m as f64),
                cell(&self.variable_magros, i),
                cell(&self.constant_magros, i),
                cell(&self.constant_exprb2, i),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Three-curve benchmark on one transport setup: the production scheme with
/// time-varying diffusion, and both schemes with constant diffusion (the
/// baseline needs a time-independent stiff part). Each diffusion variant
/// gets its own fine-scheme reference; the constant-diffusion curves share
/// theirs.
pub fn comparison_study(study: &ComparisonStudy) -> Result<ComparisonOutcome> {
    validate_steps(&study.steps_list)?;
    let reference = TemporalReference::SchemeSteps(study.reference_steps);
    let variable = ProblemSpec::Transport(TransportConfig {
        variable_diffusion: true,
        ..study.transport.clone()
    });
    let constant = ProblemSpec::Transport(TransportConfig {
        variable_diffusion: false,
        ..study.transport.clone()
    });
    validate_reference(reference, &study.steps_list, &variable)?;

    let settings = &study.settings;
    let (ref_v, ref_c) = rayon::join(
        || temporal_reference_state(&variable, study.t_final, reference, &settings.krylov),
        || temporal_reference_state(&constant, study.t_final, reference, &settings.krylov),
    );
    let (u_ref_v, norm_v) = ref_v?;
    let (u_ref_c, norm_c) = ref_c?;
    let limit_v = stability_limit(settings, norm_v);
    let limit_c = stability_limit(settings, norm_c);

    let run = |problem: &ProblemSpec, scheme: Scheme, u_ref: &[f64], limit: f64, norm: f64| {
        let rows = temporal_rows(
            problem,
            scheme,
            study.t_final,
            &study.steps_list,
            u_ref,
            limit,
            &settings.krylov,
        );
        let title = format!("{}: temporal convergence, {}", problem.label(), scheme);
        let (mut report, max_dim, max_norm) = assemble_report(title, rows, error_floor(norm));
        let meta = &mut report.metadata;
        meta.insert("problem".into(), problem.label());
        meta.insert("scheme".into(), scheme.to_string());
        meta.insert("t_final".into(), format!("{}", study.t_final));
        meta.insert("reference".into(), reference.describe());
        meta.insert("reference_norm".into(), format!("{norm:.17e}"));
        meta.insert("stability_bound".into(), format!("{limit:.17e}"));
        meta.insert(
            "stability_rule".into(),
            stability_rule(settings, "reference norm"),
        );
        meta.insert("max_state_norm".into(), format!("{max_norm:.17e}"));
        meta.insert("max_krylov_dim".into(), format!("{max_dim}"));
        report
    };

    let variable_magros = run(&variable, Scheme::Magros, &u_ref_v, limit_v, norm_v);
    let constant_magros = run(&constant, Scheme::Magros, &u_ref_c, limit_c, norm_c);
    let constant_exprb2 = run(&constant, Scheme::Exprb2, &u_ref_c, limit_c, norm_c);

    let mut metadata = BTreeMap::new();
    metadata.insert(
        "mesh".into(),
        format!("{}x{}", study.transport.nx, study.transport.ny),
    );
    metadata.insert("t_final".into(), format!("{}", study.t_final));
    metadata.insert("reference".into(), reference.describe());
    Ok(ComparisonOutcome {
        steps_list: study.steps_list.clone(),
        t_final: study.t_final,
        variable_magros,
        constant_magros,
        constant_exprb2,
        metadata,
    })
}

#[derive(Debug, Clone)]
pub struct NonsmoothStudy {
    /// Shared transport setup; the initial data is overridden per curve.
    pub transport: TransportConfig,
    pub t_final: f64,
    pub steps_list: Vec<usize>,
    pub reference_steps: usize,
    pub settings: StudySettings,
}

#[derive(Debug, Clone)]
pub struct NonsmoothOutcome {
    pub smooth: ConvergenceReport,
    pub rough: ConvergenceReport,
}

/// The same temporal study with smooth and with discontinuous initial data.
/// The rough start excites high modes the linearization cannot track, so its
/// observed order should trail the smooth one.
pub fn nonsmooth_study(study: &NonsmoothStudy) -> Result<NonsmoothOutcome> {
    let mk = |initial: InitialData, tag: &str| -> Result<ConvergenceReport> {
        let temporal = TemporalStudy {
            problem: ProblemSpec::Transport(TransportConfig {
                initial,
                ..study.transport.clone()
            }),
            t_final: study.t_final,
            steps_list: study.steps_list.clone(),
            reference: TemporalReference::SchemeSteps(study.reference_steps),
            settings: study.settings.clone(),
            floor_check_mesh: None,
        };
        let mut report = temporal_study(&temporal)?;
        report
            .metadata
            .insert("initial_regularity".into(), tag.into());
        Ok(report)
    };
    Ok(NonsmoothOutcome {
        smooth: mk(InitialData::Smooth, "smooth")?,
        rough: mk(InitialData::Front, "front")?,
    })
}

/// One production run that records the states nearest to the requested
/// times, for visualization. Returns the system alongside the result so the
/// caller can prolong snapshots to full fields.
pub fn snapshot_run(
    problem: &ProblemSpec,
    scheme: Scheme,
    t_final: f64,
    steps: usize,
    krylov: &KrylovConfig,
    times: &[f64],
    norm_limit: Option<f64>,
) -> Result<(AnySystem, RunResult)> {
    let grid = TimeGrid::new(t_final, steps)?;
    let mut indices = Vec::with_capacity(times.len());
    for &t in times {
        if !(0.0..=t_final).contains(&t) {
            return Err(Error::Config(format!(
                "snapshot time {t} outside [0, {t_final}]"
            )));
        }
        indices.push(((t / grid.dt()).round() as usize).min(steps));
    }
    indices.sort_unstable();
    indices.dedup();
    let mut sys = problem.build()?;
    let opts = RunOptions {
        step: StepOptions {
            krylov: krylov.clone(),
            ..StepOptions::default()
        },
        norm_limit,
        snapshot_steps: indices,
    };
    let run = run_scheme(&mut sys, scheme, &grid, &opts)?;
    Ok((sys, run))
}
