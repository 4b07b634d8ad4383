//! Executes a resolved run plan and writes its artifacts.
//!
//! Every output file embeds the config hash (CSV metadata comment, VTK
//! title line, summary field). All numeric outputs are deterministic for a
//! given config; the summary additionally carries wall time and a
//! timestamp, which are the only fields that change between reruns.

use crate::config::{Plan, RunPlan};
use magros_core::harness::{
    comparison_study, nonsmooth_study, projection_control, snapshot_run, spatial_study,
    temporal_study,
};
use magros_core::integrator::RunDiagnostics;
use magros_core::report::ConvergenceReport;
use magros_core::system::SemilinearSystem;
use magros_core::{Error, Result};
use serde::Serialize;
use std::path::Path;
use std::time::Instant;

#[derive(Serialize)]
struct SnapshotInfo {
    step: usize,
    time: f64,
    file: Option<String>,
}

#[derive(Serialize)]
struct SingleSummary {
    scheme: String,
    t_final: f64,
    steps: usize,
    final_norm: f64,
    diagnostics: RunDiagnostics,
    snapshots: Vec<SnapshotInfo>,
}

#[derive(Serialize)]
struct Summary {
    name: String,
    mode: String,
    config: String,
    reports: Vec<ConvergenceReport>,
    single: Option<SingleSummary>,
    artifacts: Vec<String>,
    wall_seconds: f64,
    timestamp_unix: u64,
}

/// Runs the plan inside a thread pool sized by the config and writes all
/// outputs. On failure after the output directory exists, a `.failed`
/// marker with the error text is left next to any partial outputs.
pub fn execute(plan: &RunPlan) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_plan(plan))
}

fn run_plan(plan: &RunPlan) -> Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(&plan.output_dir)?;
    let marker = plan.output_dir.join(".failed");
    let _ = std::fs::remove_file(&marker);
    match produce(plan, started) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = std::fs::write(&marker, format!("{e}\n"));
            Err(e)
        }
    }
}

fn produce(plan: &RunPlan, started: Instant) -> Result<()> {
    let mut reports: Vec<ConvergenceReport> = Vec::new();
    let mut artifacts: Vec<String> = Vec::new();
    let mut single = None;

    // Stamps the hash, prints the table and writes the CSV.
    let emit = |report: &mut ConvergenceReport, file: &str| -> Result<()> {
        report.metadata.insert("config".into(), plan.hash.clone());
        report.print();
        println!();
        report.write_csv(&plan.output_dir.join(file))?;
        Ok(())
    };

    match &plan.plan {
        Plan::Single {
            problem,
            scheme,
            t_final,
            steps,
            settings,
        } => {
            let (sys, run) = snapshot_run(
                problem,
                *scheme,
                *t_final,
                *steps,
                &settings.krylov,
                &plan.snapshot_times,
                settings.stability_r,
            )?;
            let d = &run.diagnostics;
            println!(
                "{}: {scheme} with {steps} steps to T = {t_final}",
                problem.label()
            );
            println!(
                "final norm {:.6e}, max norm {:.6e}, max Krylov dim {}, substeps {}",
                d.final_state_norm, d.max_state_norm, d.max_krylov_dim, d.total_substeps
            );
            let mut snapshots = Vec::new();
            for (step, time, state) in &run.snapshots {
                let file = if let Some(fem) = sys.as_fem() {
                    let name = format!("snapshot_m{step:05}.vtk");
                    let title = format!("{} config={} t={time:.6e}", plan.name, plan.hash);
                    let full = sys.full_field(state);
                    fem.mesh()
                        .write_vtk(&plan.output_dir.join(&name), &title, "u", &full)?;
                    artifacts.push(name.clone());
                    Some(name)
                } else {
                    None
                };
                snapshots.push(SnapshotInfo {
                    step: *step,
                    time: *time,
                    file,
                });
            }
            single = Some(SingleSummary {
                scheme: scheme.to_string(),
                t_final: *t_final,
                steps: *steps,
                final_norm: d.final_state_norm,
                diagnostics: *d,
                snapshots,
            });
        }
        Plan::Temporal(study) => {
            let mut report = temporal_study(study)?;
            emit(&mut report, "temporal.csv")?;
            artifacts.push("temporal.csv".into());
            reports.push(report);
        }
        Plan::Spatial(study) => {
            let mut report = spatial_study(study)?;
            emit(&mut report, "spatial.csv")?;
            artifacts.push("spatial.csv".into());
            reports.push(report);
            let mut control = projection_control(&study.problem, &study.meshes, study.t_final)?;
            emit(&mut control, "projection_control.csv")?;
            artifacts.push("projection_control.csv".into());
            reports.push(control);
        }
        Plan::Comparison(study) => {
            let mut out = comparison_study(study)?;
            out.metadata.insert("config".into(), plan.hash.clone());
            emit(&mut out.variable_magros, "magros_variable.csv")?;
            emit(&mut out.constant_magros, "magros_constant.csv")?;
            emit(&mut out.constant_exprb2, "exprb2_constant.csv")?;
            out.write_combined_csv(&plan.output_dir.join("combined.csv"))?;
            for f in [
                "magros_variable.csv",
                "magros_constant.csv",
                "exprb2_constant.csv",
                "combined.csv",
            ] {
                artifacts.push(f.into());
            }
            reports.push(out.variable_magros);
            reports.push(out.constant_magros);
            reports.push(out.constant_exprb2);
        }
        Plan::Nonsmooth(study) => {
            let mut out = nonsmooth_study(study)?;
            emit(&mut out.smooth, "smooth.csv")?;
            emit(&mut out.rough, "front.csv")?;
            artifacts.push("smooth.csv".into());
            artifacts.push("front.csv".into());
            reports.push(out.smooth);
            reports.push(out.rough);
        }
    }

    let summary = Summary {
        name: plan.name.clone(),
        mode: plan.plan.mode_name().to_string(),
        config: plan.hash.clone(),
        reports,
        single,
        artifacts,
        wall_seconds: started.elapsed().as_secs_f64(),
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    write_summary(&plan.output_dir.join("summary.json"), &summary)?;
    println!(
        "wrote {} file(s) to {}",
        summary.artifacts.len() + 1,
        plan.output_dir.display()
    );
    Ok(())
}

fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
