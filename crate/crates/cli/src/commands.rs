use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gpe_homotopy::tracer::trace_all;
use gpe_homotopy::verify::{
    check_antisymmetric, check_bound, check_bound_values, check_order_preservation,
    default_checkpoints, scf_ground_state, target_residual, Eigenpair, ScfOptions,
    ANTISYMMETRY_TOL,
};
use gpe_homotopy::{Domain, HomotopyProblem, PathOutcome, PathResult, Potential};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{self, summarize, RunReport, Timings, REPORT_FILE};

pub fn phi_file_name(index: usize) -> String {
    format!("path_{index}_phi.csv")
}

pub fn log_file_name(index: usize) -> String {
    format!("path_{index}_log.csv")
}

pub struct SolveOutcome {
    pub report: RunReport,
    pub report_path: PathBuf,
    pub results: Vec<PathResult>,
}

impl SolveOutcome {
    /// 0 if at least one path reached `t = 1`, 1 if none did.
    pub fn exit_code(&self) -> i32 {
        if self
            .report
            .paths
            .iter()
            .any(|p| !matches!(p.outcome, PathOutcome::Failed { .. }))
        {
            0
        } else {
            1
        }
    }
}

/// Traces the configured paths and writes `report.json`, one eigenvector
/// file and one path log per path into `cfg.out`.
pub fn cmd_solve(cfg: &RunConfig) -> Result<SolveOutcome, CliError> {
    cfg.validate()?;
    let t_start = Instant::now();
    let problem = HomotopyProblem::new(cfg.problem_spec()?, &cfg.homotopy_options())?;
    let setup_seconds = t_start.elapsed().as_secs_f64();

    let t_trace = Instant::now();
    let results = trace_all(&problem, &cfg.trace_config(), &cfg.paths, cfg.workers)?;
    let trace_seconds = t_trace.elapsed().as_secs_f64();

    let out = &cfg.out;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut paths = Vec::with_capacity(results.len());
    for r in &results {
        let log_file = log_file_name(r.index);
        report::write_log(&out.join(&log_file), &r.samples)?;
        let phi_file = match &r.eigenpair {
            Some(e) => {
                let name = phi_file_name(r.index);
                report::write_phi(&out.join(&name), problem.grid(), &e.phi)?;
                Some(name)
            }
            None => None,
        };
        paths.push(summarize(r, check_bound(r, &problem), phi_file, log_file));
    }
    let order = check_order_preservation(&results, &default_checkpoints());

    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        sample_seed: problem.sample_seed(),
        sigma: problem.sigma(),
        kind: problem.kind(),
        norm_const: problem.norm_const(),
        lambda_bound: problem.lambda_bound(),
        paths,
        order: order.into(),
        timings: Timings {
            setup_seconds,
            trace_seconds,
            total_seconds: t_start.elapsed().as_secs_f64(),
        },
    };
    let report_path = out.join(REPORT_FILE);
    report.save(&report_path)?;
    log::info!("wrote {}", report_path.display());
    Ok(SolveOutcome {
        report,
        report_path,
        results,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifySummary {
    pub checks: Vec<CheckLine>,
}

impl VerifySummary {
    fn push(&mut self, name: impl Into<String>, status: CheckStatus, detail: impl Into<String>) {
        self.checks.push(CheckLine {
            name: name.into(),
            status,
            detail: detail.into(),
        });
    }

    fn check(&mut self, name: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.push(
            name,
            if ok {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            detail,
        );
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }
}

fn report_dir(report_path: &Path) -> PathBuf {
    report_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

fn is_symmetric_harmonic_line(cfg: &RunConfig) -> bool {
    match cfg.problem_spec() {
        Ok(spec) => match spec.domain {
            Domain::Line { a, b, .. } => {
                spec.potential == Potential::Harmonic && (a + b).abs() <= 1e-12 * b.abs()
            }
            Domain::Rectangle { .. } => false,
        },
        Err(_) => false,
    }
}

/// Re-checks a finished run from its files: residuals, λ bound, SCF ground
/// state, antisymmetry (1D) and order preservation (reported only).
pub fn cmd_verify(report_path: &Path) -> Result<VerifySummary, CliError> {
    let rep = RunReport::load(report_path)?;
    let dir = report_dir(report_path);
    let cfg = &rep.config;
    cfg.validate()?;
    let problem = HomotopyProblem::new(cfg.problem_spec()?, &cfg.homotopy_options())?;
    let grid = problem.grid();
    let tol = cfg.newton_tol;
    let mut summary = VerifySummary::default();

    let mut pairs: Vec<(usize, Eigenpair, bool)> = Vec::new();
    let mut all_samples = Vec::new();
    for ps in &rep.paths {
        let samples = report::read_log(&dir.join(&ps.log_file))?;
        let bound = check_bound_values(
            samples.iter().map(|s| s.lambda).chain(ps.lambda),
            problem.lambda_bound(),
        );
        summary.check(
            format!("path {} bound", ps.index),
            bound.ok,
            format!(
                "max |lambda| {:.6} <= {:.6}",
                bound.max_abs_lambda, bound.bound
            ),
        );
        all_samples.push((ps.clone(), samples));

        let (Some(file), Some(lambda)) = (&ps.phi_file, ps.lambda) else {
            summary.push(
                format!("path {} residual", ps.index),
                CheckStatus::Skipped,
                "no eigenvector (path failed)",
            );
            continue;
        };
        let phi = report::read_phi(&dir.join(file), grid)?;
        let residual = target_residual(
            problem.operator(),
            problem.beta(),
            problem.norm_const(),
            &phi,
            lambda,
        );
        let converged = ps.outcome.is_converged();
        let recorded_ok = ps.residual == Some(residual);
        let small = residual <= 10.0 * tol;
        if converged {
            summary.check(
                format!("path {} residual", ps.index),
                recorded_ok && small,
                format!(
                    "recomputed {residual:.3e}, recorded {:.3e}",
                    ps.residual.unwrap_or(f64::NAN)
                ),
            );
        } else {
            summary.check(
                format!("path {} residual", ps.index),
                recorded_ok,
                format!(
                    "degenerate endgame, recomputed {residual:.3e} matches record: {recorded_ok}"
                ),
            );
        }
        pairs.push((
            ps.index,
            Eigenpair::at_target(&problem, &phi, lambda),
            converged,
        ));
    }

    match pairs.iter().find(|(k, _, ok)| *k == 1 && *ok) {
        Some((_, path1, _)) if problem.beta() > 0.0 => {
            match scf_ground_state(&problem, &ScfOptions::default()) {
                Ok(scf) => {
                    let dl = (scf.lambda - path1.lambda).abs();
                    let dist = sign_free_distance(&scf.phi, &path1.phi);
                    let scale = gpe_norm(&path1.phi);
                    summary.check(
                        "scf ground state",
                        dl <= 1e-6 && dist <= 1e-6 * scale && path1.flags.positive,
                        format!(
                            "|dlambda| {dl:.2e}, |dphi| {dist:.2e}, one-signed {}",
                            path1.flags.positive
                        ),
                    );
                }
                Err(e) => summary.check("scf ground state", false, e.to_string()),
            }
        }
        Some(_) => summary.push("scf ground state", CheckStatus::Skipped, "beta = 0"),
        None => summary.push(
            "scf ground state",
            CheckStatus::Skipped,
            "path 1 not traced or not converged",
        ),
    }

    if grid.dim() != 1 {
        summary.push("antisymmetry", CheckStatus::Skipped, "not applicable in 2D");
    } else if !is_symmetric_harmonic_line(cfg) || problem.beta() <= 0.0 {
        summary.push(
            "antisymmetry",
            CheckStatus::Skipped,
            "not applicable (needs a symmetric trap and beta > 0)",
        );
    } else if let Some((_, path2, _)) = pairs.iter().find(|(k, _, ok)| *k == 2 && *ok) {
        let r = check_antisymmetric(path2, grid, ANTISYMMETRY_TOL);
        summary.check(
            "antisymmetry",
            r.antisymmetric && r.half_one_signed,
            format!(
                "path 2 defect {:.2e} (tol {:.2e}), half one-signed {}",
                r.max_defect, r.tol, r.half_one_signed
            ),
        );
    } else {
        summary.push(
            "antisymmetry",
            CheckStatus::Skipped,
            "path 2 not traced or not converged",
        );
    }

    let results: Vec<PathResult> = all_samples
        .into_iter()
        .map(|(ps, samples)| PathResult {
            index: ps.index,
            outcome: ps.outcome.clone(),
            eigenpair: pairs
                .iter()
                .find(|(k, _, _)| *k == ps.index)
                .map(|(_, e, _)| e.clone()),
            last_state: gpe_homotopy::State {
                phi: vec![],
                lambda: f64::NAN,
                t: f64::NAN,
            },
            ori: 0,
            samples,
            accepted_steps: ps.accepted_steps,
            corrector_rejects: ps.corrector_rejects,
            angle_rejects: ps.angle_rejects,
            orientation_flips: ps.orientation_flips,
            newton_iterations: ps.newton_iterations,
            min_sigma: ps.min_sigma.unwrap_or(f64::INFINITY),
            warnings: vec![],
        })
        .collect();
    let order = check_order_preservation(&results, &default_checkpoints());
    summary.push(
        "order preservation",
        CheckStatus::Skipped,
        format!(
            "observation only: preserved = {}, {} violations",
            order.preserved,
            order.violations.len()
        ),
    );
    Ok(summary)
}

fn gpe_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sign_free_distance(a: &[f64], b: &[f64]) -> f64 {
    let plus: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let minus: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x + y).powi(2))
        .sum::<f64>()
        .sqrt();
    plus.min(minus)
}

/// Writes plot data for path `index` next to the report (or into `out`)
/// and returns the file path and number of rows.
pub fn cmd_export(
    report_path: &Path,
    index: usize,
    out: Option<&Path>,
) -> Result<(PathBuf, usize), CliError> {
    let rep = RunReport::load(report_path)?;
    let dir = report_dir(report_path);
    let ps = rep
        .path(index)
        .ok_or_else(|| CliError::Config(format!("path {index} is not in the report")))?;
    let file = ps
        .phi_file
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("path {index} has no eigenvector")))?;
    let grid = gpe_homotopy::build_grid(&rep.config.problem_spec()?)?;
    let phi = report::read_phi(&dir.join(file), &grid)?;
    let target_dir = out.map(Path::to_path_buf).unwrap_or(dir);
    std::fs::create_dir_all(&target_dir).map_err(|e| CliError::io(&target_dir, e))?;
    let target = target_dir.join(format!("path_{index}_plot.csv"));
    let rows = report::write_plot(&target, &grid, &phi)?;
    Ok((target, rows))
}
