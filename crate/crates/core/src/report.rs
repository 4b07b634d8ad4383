//! Convergence reports: order fitting, tabular output, CSV export.

use crate::error::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Least-squares slope of log(error) against log(resolution), plus the
/// pairwise orders between consecutive rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    pub pairwise: Vec<f64>,
}

pub fn estimate_order(resolutions: &[f64], errors: &[f64]) -> Result<OrderFit> {
    if resolutions.len() != errors.len() {
        return Err(Error::Config(format!(
            "{} resolutions against {} errors",
            resolutions.len(),
            errors.len()
        )));
    }
    if resolutions.len() < 2 {
        return Err(Error::Config("order fit needs at least two points".into()));
    }
    for (&r, &e) in resolutions.iter().zip(errors) {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Config(format!("non-positive resolution {r}")));
        }
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::Config(format!("non-positive error {e}")));
        }
    }
    let xs: Vec<f64> = resolutions.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("resolutions must be distinct".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    if !slope.is_finite() {
        return Err(Error::Numerical("order fit produced a non-finite slope".into()));
    }
    let pairwise = resolutions
        .windows(2)
        .zip(errors.windows(2))
        .map(|(r, e)| (e[0] / e[1]).ln() / (r[0] / r[1]).ln())
        .collect();
    Ok(OrderFit { slope, pairwise })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub label: String,
    /// Step size dt for temporal studies, mesh size h for spatial ones.
    pub resolution: f64,
    /// None when the row's run failed.
    pub error: Option<f64>,
    pub pairwise_order: Option<f64>,
    /// Failure description or other per-row remark.
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub title: String,
    pub rows: Vec<ReportRow>,
    /// Fitted over the successful rows; None when fewer than two succeeded
    /// or every error sits at the round-off floor.
    pub slope: Option<f64>,
    pub below_floor: bool,
    pub metadata: BTreeMap<String, String>,
}

impl ConvergenceReport {
    /// Assembles rows (label, resolution, error-or-failure), fits the order
    /// over the successes, and flags the round-off floor: when every error
    /// is at most `floor` no slope is fitted.
    pub fn from_rows(
        title: impl Into<String>,
        rows: Vec<(String, f64, Result<f64>)>,
        floor: f64,
    ) -> Self {
        let mut out_rows: Vec<ReportRow> = rows
            .into_iter()
            .map(|(label, resolution, error)| match error {
                Ok(e) => ReportRow {
                    label,
                    resolution,
                    error: Some(e),
                    pairwise_order: None,
                    note: String::new(),
                },
                Err(err) => ReportRow {
                    label,
                    resolution,
                    error: None,
                    pairwise_order: None,
                    note: format!("failed: {err}"),
                },
            })
            .collect();
        let ok: Vec<(usize, f64, f64)> = out_rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.error.map(|e| (i, r.resolution, e)))
            .collect();
        let below_floor = !ok.is_empty() && ok.iter().all(|&(_, _, e)| e <= floor);
        let mut slope = None;
        if !below_floor && ok.len() >= 2 {
            let res: Vec<f64> = ok.iter().map(|&(_, r, _)| r).collect();
            // Clamp exact zeros (identical states) to the floor so the fit
            // over the remaining rows stays defined.
            let errs: Vec<f64> = ok.iter().map(|&(_, _, e)| e.max(floor)).collect();
            if let Ok(fit) = estimate_order(&res, &errs) {
                slope = Some(fit.slope);
                for (k, w) in ok.windows(2).enumerate() {
                    out_rows[w[1].0].pairwise_order = Some(fit.pairwise[k]);
                }
            }
        }
        Self {
            title: title.into(),
            rows: out_rows,
            slope,
            below_floor,
            metadata: BTreeMap::new(),
        }
    }

    pub fn print(&self) {
        println!("{}", self.title);
        println!("{:>12} {:>14} {:>10}  note", "resolution", "error", "order");
        for r in &self.rows {
            let err = r
                .error
                .map(|e| format!("{e:.6e}"))
                .unwrap_or_else(|| "-".into());
            let ord = r
                .pairwise_order
                .map(|o| format!("{o:.3}"))
                .unwrap_or_else(|| "-".into());
            println!("{:>12.6e} {err:>14} {ord:>10}  {}", r.resolution, r.note);
        }
        match (self.below_floor, self.slope) {
            (true, _) => println!("errors at round-off floor; no order fitted"),
            (false, Some(s)) => println!("fitted order {s:.3}"),
            (false, None) => println!("too few successful rows to fit an order"),
        }
        for (k, v) in &self.metadata {
            println!("  {k}: {v}");
        }
    }

    /// True when every consecutive pair of successful errors strictly
    /// decreases (refinement helped at every level).
    pub fn errors_strictly_decreasing(&self) -> bool {
        let errs: Vec<f64> = self.rows.iter().filter_map(|r| r.error).collect();
        errs.windows(2).all(|w| w[1] < w[0])
    }

    /// Writes `resolution,error,pairwise_order` rows; the title and any
    /// metadata go into leading `#` comment lines. Failed rows keep their
    /// resolution with empty cells.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "# {}", self.title)?;
        for (k, v) in &self.metadata {
            writeln!(file, "# {k}: {v}")?;
        }
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["resolution", "error", "pairwise_order"])?;
        for r in &self.rows {
            w.write_record([
                format!("{:.12e}", r.resolution),
                r.error.map(|e| format!("{e:.12e}")).unwrap_or_default(),
                r.pairwise_order
                    .map(|o| format!("{o:.6}"))
                    .unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
