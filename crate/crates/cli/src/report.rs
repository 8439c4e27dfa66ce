//! `report.json` and the per-path CSV files.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use gpe_homotopy::tracer::PathSample;
use gpe_homotopy::verify::{BoundReport, EigenpairFlags, OrderReport};
use gpe_homotopy::{Grid, PathOutcome, PathResult, RandomMatrixKind};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub index: usize,
    pub outcome: PathOutcome,
    pub start_lambda: f64,
    pub lambda: Option<f64>,
    /// `‖H(φ, λ, 1)‖∞` of the stored eigenvector.
    pub residual: Option<f64>,
    pub flags: Option<EigenpairFlags>,
    pub accepted_steps: usize,
    pub corrector_rejects: usize,
    pub angle_rejects: usize,
    pub orientation_flips: usize,
    pub newton_iterations: usize,
    pub min_sigma: Option<f64>,
    pub bound: BoundReport,
    pub warnings: Vec<String>,
    pub phi_file: Option<String>,
    pub log_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSummary {
    pub checkpoints: Vec<f64>,
    pub lambdas: Vec<Vec<Option<f64>>>,
    pub preserved: bool,
    pub violations: Vec<(f64, usize, usize)>,
    pub min_separation: Option<f64>,
}

impl From<OrderReport> for OrderSummary {
    fn from(r: OrderReport) -> Self {
        Self {
            checkpoints: r.checkpoints,
            lambdas: r.lambdas,
            preserved: r.preserved,
            violations: r.violations,
            min_separation: r.min_separation.is_finite().then_some(r.min_separation),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub setup_seconds: f64,
    pub trace_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: RunConfig,
    /// Seed of the start-matrix draw that passed the eigen-gap check.
    pub sample_seed: u64,
    pub sigma: f64,
    pub kind: RandomMatrixKind,
    pub norm_const: f64,
    pub lambda_bound: f64,
    pub paths: Vec<PathSummary>,
    pub order: OrderSummary,
    pub timings: Timings,
}

impl RunReport {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::corrupt(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn path(&self, index: usize) -> Option<&PathSummary> {
        self.paths.iter().find(|p| p.index == index)
    }
}

pub fn summarize(
    r: &PathResult,
    bound: BoundReport,
    phi_file: Option<String>,
    log_file: String,
) -> PathSummary {
    PathSummary {
        index: r.index,
        outcome: r.outcome.clone(),
        start_lambda: r.samples.first().map_or(f64::NAN, |s| s.lambda),
        lambda: r.lambda(),
        residual: r.eigenpair.as_ref().map(|e| e.residual),
        flags: r.eigenpair.as_ref().map(|e| e.flags.clone()),
        accepted_steps: r.accepted_steps,
        corrector_rejects: r.corrector_rejects,
        angle_rejects: r.angle_rejects,
        orientation_flips: r.orientation_flips,
        newton_iterations: r.newton_iterations,
        min_sigma: r.min_sigma.is_finite().then_some(r.min_sigma),
        bound,
        warnings: r.warnings.clone(),
        phi_file,
        log_file,
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))?;
    let inner = w
        .into_inner()
        .map_err(|e| CliError::io(path, e.into_error()))?;
    inner
        .into_inner()
        .map_err(|e| CliError::io(path, e.into_error()))?
        .sync_all()
        .ok();
    Ok(())
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::corrupt(path, e)
}

/// Eigenvector on the interior nodes: columns `x[,y],phi`.
pub fn write_phi(path: &Path, grid: &Grid, phi: &[f64]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let header: &[&str] = if grid.dim() == 1 {
        &["x", "phi"]
    } else {
        &["x", "y", "phi"]
    };
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for (k, v) in phi.iter().enumerate() {
        let mut rec: Vec<String> = grid.node(k).iter().map(|&x| num(x)).collect();
        rec.push(num(*v));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    finish(w, path)
}

/// Reads an eigenvector file, checking its nodes against `grid`.
pub fn read_phi(path: &Path, grid: &Grid) -> Result<Vec<f64>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let dim = grid.dim();
    let mut phi = Vec::with_capacity(grid.len());
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != dim + 1 {
            return Err(CliError::corrupt(
                path,
                format!("row {} has {} columns", k + 1, rec.len()),
            ));
        }
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::corrupt(path, format!("row {}: {e}", k + 1)))?;
        if k >= grid.len() {
            return Err(CliError::corrupt(path, "more rows than grid nodes"));
        }
        let node = grid.node(k);
        let h = grid.steps().iter().cloned().fold(f64::INFINITY, f64::min);
        if node
            .iter()
            .zip(&vals)
            .any(|(a, b)| (a - b).abs() > 1e-9 * h)
        {
            return Err(CliError::corrupt(
                path,
                format!("row {} does not match the grid", k + 1),
            ));
        }
        phi.push(vals[dim]);
    }
    if phi.len() != grid.len() {
        return Err(CliError::corrupt(
            path,
            format!("{} rows, expected {}", phi.len(), grid.len()),
        ));
    }
    Ok(phi)
}

pub fn write_log(path: &Path, samples: &[PathSample]) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_record(["step", "t", "lambda", "ds", "theta_deg", "sigma_min"])
        .map_err(|e| csv_err(path, e))?;
    for s in samples {
        w.write_record([
            s.step.to_string(),
            num(s.t),
            num(s.lambda),
            num(s.ds),
            num(s.theta_deg),
            num(s.sigma_min),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish(w, path)
}

/// Reads a path log back into samples (the residual column is not stored).
pub fn read_log(path: &Path) -> Result<Vec<PathSample>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |m: String| CliError::corrupt(path, format!("row {}: {m}", k + 1));
        if rec.len() != 6 {
            return Err(bad(format!("{} columns", rec.len())));
        }
        let step: usize = rec[0].trim().parse().map_err(|e| bad(format!("{e}")))?;
        let f: Vec<f64> = (1..6)
            .map(|i| rec[i].trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("{e}")))?;
        out.push(PathSample {
            step,
            t: f[0],
            lambda: f[1],
            ds: f[2],
            theta_deg: f[3],
            sigma_min: f[4],
            residual: f64::NAN,
        });
    }
    Ok(out)
}

/// Plot data including the Dirichlet boundary: `x,phi` in 1D, `x,y,phi`
/// in 2D (x outer, y inner). Returns the number of rows written.
pub fn write_plot(path: &Path, grid: &Grid, phi: &[f64]) -> Result<usize, CliError> {
    let mut w = create(path)?;
    let mut rows = 0;
    match grid.dim() {
        1 => {
            w.write_record(["x", "phi"]).map_err(|e| csv_err(path, e))?;
            let xs = grid.axis_with_boundary(0);
            let n = grid.counts()[0];
            for (j, x) in xs.iter().enumerate() {
                let v = if j == 0 || j == n + 1 {
                    0.0
                } else {
                    phi[j - 1]
                };
                w.write_record([num(*x), num(v)])
                    .map_err(|e| csv_err(path, e))?;
                rows += 1;
            }
        }
        _ => {
            w.write_record(["x", "y", "phi"])
                .map_err(|e| csv_err(path, e))?;
            let xs = grid.axis_with_boundary(0);
            let ys = grid.axis_with_boundary(1);
            let (m, n) = (grid.counts()[0], grid.counts()[1]);
            for (i, x) in xs.iter().enumerate() {
                for (j, y) in ys.iter().enumerate() {
                    let interior = (1..=m).contains(&i) && (1..=n).contains(&j);
                    let v = if interior { phi[grid.index(i, j)] } else { 0.0 };
                    w.write_record([num(*x), num(*y), num(v)])
                        .map_err(|e| csv_err(path, e))?;
                    rows += 1;
                }
            }
        }
    }
    finish(w, path)?;
    Ok(rows)
}
