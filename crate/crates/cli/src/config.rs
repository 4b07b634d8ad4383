//! Config file schema and resolution into executable run plans.
//!
//! Configs are TOML. Every struct rejects unknown keys, and keys that do
//! not apply to the selected mode or problem kind are hard errors too, so a
//! typo cannot silently change an experiment.

use magros_core::harness::{
    ComparisonStudy, NonsmoothStudy, ProblemSpec, SpatialStudy, StudySettings, TemporalReference,
    TemporalStudy,
};
use magros_core::integrator::Scheme;
use magros_core::problems::{
    InitialData, NodalVectorField, Reaction, TransportConfig, VelocityField,
};
use magros_core::{Error, Result};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

/// Bundled named configs: (name, text, one-line description).
pub const BUNDLED: &[(&str, &str, &str)] = &[
    (
        "smoke",
        include_str!("../configs/smoke.toml"),
        "tiny single run exercising every output path in under a second",
    ),
    (
        "temporal_comparison",
        include_str!("../configs/temporal_comparison.toml"),
        "three-curve temporal benchmark on the reactive transport problem",
    ),
    (
        "spatial_heat",
        include_str!("../configs/spatial_heat.toml"),
        "spatial orders on the heat problem with a closed-form solution",
    ),
    (
        "temporal_linear_oracle",
        include_str!("../configs/temporal_linear_oracle.toml"),
        "temporal orders against a closed-form scalar solution",
    ),
    (
        "nonsmooth_start",
        include_str!("../configs/nonsmooth_start.toml"),
        "smooth versus sharp-front initial data on the same transport setup",
    ),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|(_, text, _)| *text)
}

/// First 16 hex characters of the SHA-256 of the raw config text; embedded
/// in every output file.
pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: String,
    threads: Option<usize>,
    floor_check_mesh: Option<usize>,
    problem: RawProblem,
    time: RawTime,
    scheme: Option<RawScheme>,
    reference: Option<RawReference>,
    spatial: Option<RawSpatial>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    kind: String,
    nx: Option<usize>,
    ny: Option<usize>,
    #[serde(rename = "L1")]
    l1: Option<f64>,
    #[serde(rename = "L2")]
    l2: Option<f64>,
    variable_diffusion: Option<bool>,
    velocity: Option<String>,
    velocity_vx: Option<f64>,
    velocity_vy: Option<f64>,
    velocity_file: Option<PathBuf>,
    velocity_file_nx: Option<usize>,
    velocity_file_ny: Option<usize>,
    initial: Option<String>,
    nonlinearity: Option<String>,
    linear_coefficient: Option<f64>,
    stabilization_shift: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    #[serde(rename = "T")]
    t_final: f64,
    #[serde(rename = "M")]
    steps: StepsSpec,
    snapshot_times: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum StepsSpec {
    One(usize),
    Sweep(Vec<usize>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    name: Option<String>,
    krylov_tol: Option<f64>,
    krylov_max_dim: Option<usize>,
    #[serde(rename = "stability_R")]
    stability_r: Option<f64>,
    r_factor: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReference {
    kind: String,
    steps: Option<usize>,
    tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpatial {
    meshes: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

/// What the run command will execute.
#[derive(Debug, Clone)]
pub enum Plan {
    Single {
        problem: ProblemSpec,
        scheme: Scheme,
        t_final: f64,
        steps: usize,
        settings: StudySettings,
    },
    Temporal(TemporalStudy),
    Spatial(SpatialStudy),
    Comparison(ComparisonStudy),
    Nonsmooth(NonsmoothStudy),
}

impl Plan {
    pub fn mode_name(&self) -> &'static str {
        match self {
            Plan::Single { .. } => "single",
            Plan::Temporal(_) => "temporal",
            Plan::Spatial(_) => "spatial",
            Plan::Comparison(_) => "comparison",
            Plan::Nonsmooth(_) => "nonsmooth",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunPlan {
    pub name: String,
    pub plan: Plan,
    /// 0 lets the thread pool pick its default size.
    pub threads: usize,
    pub snapshot_times: Vec<f64>,
    pub output_dir: PathBuf,
    pub hash: String,
}

fn forbid<T>(opt: &Option<T>, key: &str, context: &str) -> Result<()> {
    if opt.is_some() {
        return Err(Error::Config(format!("`{key}` does not apply to {context}")));
    }
    Ok(())
}

fn resolve_velocity(p: &RawProblem, l1: f64, l2: f64) -> Result<VelocityField> {
    let kind = p.velocity.as_deref().unwrap_or("cellular");
    match kind {
        "cellular" => {
            forbid(&p.velocity_vx, "velocity_vx", "the cellular velocity")?;
            forbid(&p.velocity_vy, "velocity_vy", "the cellular velocity")?;
            forbid(&p.velocity_file, "velocity_file", "the cellular velocity")?;
            forbid(&p.velocity_file_nx, "velocity_file_nx", "the cellular velocity")?;
            forbid(&p.velocity_file_ny, "velocity_file_ny", "the cellular velocity")?;
            Ok(VelocityField::Cellular)
        }
        "uniform" => {
            forbid(&p.velocity_file, "velocity_file", "a uniform velocity")?;
            forbid(&p.velocity_file_nx, "velocity_file_nx", "a uniform velocity")?;
            forbid(&p.velocity_file_ny, "velocity_file_ny", "a uniform velocity")?;
            let vx = p
                .velocity_vx
                .ok_or_else(|| Error::Config("uniform velocity needs `velocity_vx`".into()))?;
            let vy = p
                .velocity_vy
                .ok_or_else(|| Error::Config("uniform velocity needs `velocity_vy`".into()))?;
            Ok(VelocityField::Uniform { vx, vy })
        }
        "file" => {
            forbid(&p.velocity_vx, "velocity_vx", "a file velocity")?;
            forbid(&p.velocity_vy, "velocity_vy", "a file velocity")?;
            let path = p
                .velocity_file
                .as_ref()
                .ok_or_else(|| Error::Config("file velocity needs `velocity_file`".into()))?;
            let nx = p.velocity_file_nx.ok_or_else(|| {
                Error::Config("file velocity needs `velocity_file_nx`".into())
            })?;
            let ny = p.velocity_file_ny.ok_or_else(|| {
                Error::Config("file velocity needs `velocity_file_ny`".into())
            })?;
            let field = NodalVectorField::from_file(path, nx, ny, l1, l2)?;
            Ok(VelocityField::Nodal(field))
        }
        other => Err(Error::Config(format!(
            "unknown velocity `{other}` (expected cellular, uniform or file)"
        ))),
    }
}

fn resolve_reaction(p: &RawProblem) -> Result<Reaction> {
    let kind = p.nonlinearity.as_deref().unwrap_or("saturating");
    match kind {
        "saturating" => {
            forbid(&p.linear_coefficient, "linear_coefficient", "the saturating reaction")?;
            Ok(Reaction::Saturating)
        }
        "zero" => {
            forbid(&p.linear_coefficient, "linear_coefficient", "the zero reaction")?;
            Ok(Reaction::Zero)
        }
        "linear" => {
            let c = p.linear_coefficient.ok_or_else(|| {
                Error::Config("the linear reaction needs `linear_coefficient`".into())
            })?;
            Ok(Reaction::Linear(c))
        }
        other => Err(Error::Config(format!(
            "unknown nonlinearity `{other}` (expected saturating, zero or linear)"
        ))),
    }
}

fn resolve_initial(p: &RawProblem) -> Result<InitialData> {
    match p.initial.as_deref().unwrap_or("zero") {
        "zero" => Ok(InitialData::Zero),
        "smooth" => Ok(InitialData::Smooth),
        "front" => Ok(InitialData::Front),
        other => Err(Error::Config(format!(
            "unknown initial data `{other}` (expected zero, smooth or front)"
        ))),
    }
}

fn resolve_problem(p: &RawProblem) -> Result<ProblemSpec> {
    match p.kind.as_str() {
        "transport" => {
            let l1 = p.l1.unwrap_or(1.0);
            let l2 = p.l2.unwrap_or(1.0);
            if !(l1 > 0.0 && l2 > 0.0) {
                return Err(Error::Config(format!(
                    "domain lengths must be positive, got {l1} x {l2}"
                )));
            }
            let cfg = TransportConfig {
                nx: p.nx.unwrap_or(32),
                ny: p.ny.unwrap_or(32),
                l1,
                l2,
                variable_diffusion: p.variable_diffusion.unwrap_or(true),
                velocity: resolve_velocity(p, l1, l2)?,
                initial: resolve_initial(p)?,
                reaction: resolve_reaction(p)?,
                stabilization_shift: p.stabilization_shift.unwrap_or(0.0),
            };
            Ok(ProblemSpec::Transport(cfg))
        }
        "heat" => {
            let ctx = "the heat problem";
            forbid(&p.l1, "L1", ctx)?;
            forbid(&p.l2, "L2", ctx)?;
            forbid(&p.variable_diffusion, "variable_diffusion", ctx)?;
            forbid(&p.velocity, "velocity", ctx)?;
            forbid(&p.velocity_vx, "velocity_vx", ctx)?;
            forbid(&p.velocity_vy, "velocity_vy", ctx)?;
            forbid(&p.velocity_file, "velocity_file", ctx)?;
            forbid(&p.velocity_file_nx, "velocity_file_nx", ctx)?;
            forbid(&p.velocity_file_ny, "velocity_file_ny", ctx)?;
            forbid(&p.initial, "initial", ctx)?;
            forbid(&p.nonlinearity, "nonlinearity", ctx)?;
            forbid(&p.linear_coefficient, "linear_coefficient", ctx)?;
            forbid(&p.stabilization_shift, "stabilization_shift", ctx)?;
            Ok(ProblemSpec::Heat {
                nx: p.nx.unwrap_or(32),
                ny: p.ny.unwrap_or(32),
            })
        }
        "scalar_decay" => {
            let ctx = "the scalar problem";
            forbid(&p.nx, "nx", ctx)?;
            forbid(&p.ny, "ny", ctx)?;
            forbid(&p.l1, "L1", ctx)?;
            forbid(&p.l2, "L2", ctx)?;
            forbid(&p.variable_diffusion, "variable_diffusion", ctx)?;
            forbid(&p.velocity, "velocity", ctx)?;
            forbid(&p.velocity_vx, "velocity_vx", ctx)?;
            forbid(&p.velocity_vy, "velocity_vy", ctx)?;
            forbid(&p.velocity_file, "velocity_file", ctx)?;
            forbid(&p.velocity_file_nx, "velocity_file_nx", ctx)?;
            forbid(&p.velocity_file_ny, "velocity_file_ny", ctx)?;
            forbid(&p.initial, "initial", ctx)?;
            forbid(&p.nonlinearity, "nonlinearity", ctx)?;
            forbid(&p.linear_coefficient, "linear_coefficient", ctx)?;
            forbid(&p.stabilization_shift, "stabilization_shift", ctx)?;
            Ok(ProblemSpec::ScalarDecay)
        }
        other => Err(Error::Config(format!(
            "unknown problem kind `{other}` (expected transport, heat or scalar_decay)"
        ))),
    }
}

/// Returns the settings plus whether a scheme name was given explicitly
/// (the comparison mode runs both schemes and rejects an explicit choice).
fn resolve_settings(raw: Option<&RawScheme>) -> Result<(StudySettings, bool)> {
    let mut settings = StudySettings::default();
    let Some(raw) = raw else {
        return Ok((settings, false));
    };
    let mut named = false;
    if let Some(name) = &raw.name {
        settings.scheme = match name.as_str() {
            "magros" => Scheme::Magros,
            "exprb2" => Scheme::Exprb2,
            other => {
                return Err(Error::Config(format!(
                    "unknown scheme `{other}` (expected magros or exprb2; references are configured in [reference])"
                )))
            }
        };
        named = true;
    }
    if let Some(tol) = raw.krylov_tol {
        settings.krylov.tol = tol;
    }
    if let Some(dim) = raw.krylov_max_dim {
        settings.krylov.max_dim = dim;
    }
    settings.krylov.validate()?;
    if let Some(r) = raw.stability_r {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Config(format!(
                "stability_R must be positive and finite, got {r}"
            )));
        }
        settings.stability_r = Some(r);
    }
    if let Some(f) = raw.r_factor {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::Config(format!(
                "r_factor must be positive and finite, got {f}"
            )));
        }
        settings.r_factor = f;
    }
    Ok((settings, named))
}

fn resolve_reference(raw: &RawReference, scheme_only: bool) -> Result<TemporalReference> {
    match raw.kind.as_str() {
        "scheme" => {
            forbid(&raw.tol, "tol", "a scheme reference")?;
            let steps = raw
                .steps
                .ok_or_else(|| Error::Config("a scheme reference needs `steps`".into()))?;
            Ok(TemporalReference::SchemeSteps(steps))
        }
        "oracle" if !scheme_only => {
            forbid(&raw.steps, "steps", "an oracle reference")?;
            let tol = raw
                .tol
                .ok_or_else(|| Error::Config("an oracle reference needs `tol`".into()))?;
            Ok(TemporalReference::Oracle { tol })
        }
        "closed_form" if !scheme_only => {
            forbid(&raw.steps, "steps", "a closed-form reference")?;
            forbid(&raw.tol, "tol", "a closed-form reference")?;
            Ok(TemporalReference::ClosedForm)
        }
        "oracle" | "closed_form" => Err(Error::Config(format!(
            "this mode compares diffusion variants against the fine scheme; `{}` references are not supported here",
            raw.kind
        ))),
        other => Err(Error::Config(format!(
            "unknown reference kind `{other}` (expected scheme, oracle or closed_form)"
        ))),
    }
}

fn sweep(steps: &StepsSpec, mode: &str) -> Result<Vec<usize>> {
    match steps {
        StepsSpec::One(_) => Err(Error::Config(format!(
            "{mode} mode needs a step sweep, e.g. M = [16, 32, 64]"
        ))),
        StepsSpec::Sweep(v) if v.len() < 2 => Err(Error::Config(format!(
            "{mode} mode needs at least two step counts"
        ))),
        StepsSpec::Sweep(v) => Ok(v.clone()),
    }
}

fn single_steps(steps: &StepsSpec, mode: &str) -> Result<usize> {
    match steps {
        StepsSpec::One(m) => Ok(*m),
        StepsSpec::Sweep(v) if v.len() == 1 => Ok(v[0]),
        StepsSpec::Sweep(_) => Err(Error::Config(format!(
            "{mode} mode takes a single step count, e.g. M = 256"
        ))),
    }
}

/// Parses and cross-validates a config. `name` labels outputs (usually the
/// file stem or bundled name); `out_override` wins over the config's own
/// output directory.
pub fn parse(name: &str, text: &str, out_override: Option<PathBuf>) -> Result<RunPlan> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let hash = config_hash(text);
    let (settings, scheme_named) = resolve_settings(raw.scheme.as_ref())?;
    let problem = resolve_problem(&raw.problem)?;
    let t_final = raw.time.t_final;
    let snapshot_times = raw.time.snapshot_times.clone().unwrap_or_default();
    let mode = raw.mode.as_str();

    if mode != "single" && !snapshot_times.is_empty() {
        return Err(Error::Config(
            "`snapshot_times` applies to single mode only".into(),
        ));
    }
    if mode != "temporal" {
        forbid(&raw.floor_check_mesh, "floor_check_mesh", &format!("{mode} mode"))?;
    }
    if mode != "spatial" {
        forbid(&raw.spatial, "[spatial]", &format!("{mode} mode"))?;
    }

    let plan = match mode {
        "single" => {
            forbid(&raw.reference, "[reference]", "single mode")?;
            if !snapshot_times.is_empty() && problem.mesh_n().is_none() {
                return Err(Error::Config(
                    "snapshot output needs a mesh-based problem".into(),
                ));
            }
            Plan::Single {
                scheme: settings.scheme,
                problem,
                t_final,
                steps: single_steps(&raw.time.steps, mode)?,
                settings,
            }
        }
        "temporal" => {
            let reference = raw
                .reference
                .as_ref()
                .ok_or_else(|| Error::Config("temporal mode needs a [reference] section".into()))?;
            Plan::Temporal(TemporalStudy {
                problem,
                t_final,
                steps_list: sweep(&raw.time.steps, mode)?,
                reference: resolve_reference(reference, false)?,
                settings,
                floor_check_mesh: raw.floor_check_mesh,
            })
        }
        "spatial" => {
            forbid(&raw.reference, "[reference]", "spatial mode")?;
            let spatial = raw
                .spatial
                .as_ref()
                .ok_or_else(|| Error::Config("spatial mode needs a [spatial] section".into()))?;
            Plan::Spatial(SpatialStudy {
                problem,
                t_final,
                steps: single_steps(&raw.time.steps, mode)?,
                meshes: spatial.meshes.clone(),
                settings,
            })
        }
        "comparison" => {
            if scheme_named {
                return Err(Error::Config(
                    "comparison mode runs both schemes; remove `scheme.name`".into(),
                ));
            }
            forbid(
                &raw.problem.variable_diffusion,
                "variable_diffusion",
                "comparison mode (it is set per curve)",
            )?;
            let reference = raw
                .reference
                .as_ref()
                .ok_or_else(|| Error::Config("comparison mode needs a [reference] section".into()))?;
            let TemporalReference::SchemeSteps(reference_steps) =
                resolve_reference(reference, true)?
            else {
                unreachable!("scheme_only resolution")
            };
            let ProblemSpec::Transport(transport) = problem else {
                return Err(Error::Config(
                    "comparison mode runs the transport problem".into(),
                ));
            };
            Plan::Comparison(ComparisonStudy {
                transport,
                t_final,
                steps_list: sweep(&raw.time.steps, mode)?,
                reference_steps,
                settings,
            })
        }
        "nonsmooth" => {
            forbid(
                &raw.problem.initial,
                "initial",
                "nonsmooth mode (it is set per curve)",
            )?;
            let reference = raw
                .reference
                .as_ref()
                .ok_or_else(|| Error::Config("nonsmooth mode needs a [reference] section".into()))?;
            let TemporalReference::SchemeSteps(reference_steps) =
                resolve_reference(reference, true)?
            else {
                unreachable!("scheme_only resolution")
            };
            let ProblemSpec::Transport(transport) = problem else {
                return Err(Error::Config(
                    "nonsmooth mode runs the transport problem".into(),
                ));
            };
            Plan::Nonsmooth(NonsmoothStudy {
                transport,
                t_final,
                steps_list: sweep(&raw.time.steps, mode)?,
                reference_steps,
                settings,
            })
        }
        other => {
            return Err(Error::Config(format!(
                "unknown mode `{other}` (expected single, temporal, spatial, comparison or nonsmooth)"
            )))
        }
    };

    let output_dir = match out_override {
        Some(dir) => dir,
        None => raw
            .output
            .as_ref()
            .and_then(|o| o.dir.clone())
            .unwrap_or_else(|| Path::new("out").join(name)),
    };

    Ok(RunPlan {
        name: name.to_string(),
        plan,
        threads: raw.threads.unwrap_or(0),
        snapshot_times,
        output_dir,
        hash,
    })
}
