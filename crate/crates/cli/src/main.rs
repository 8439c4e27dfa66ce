use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gpe_cli::{cmd_export, cmd_solve, cmd_verify, parse_path_set, CliError, RunConfig};
use gpe_homotopy::RandomMatrixKind;

#[derive(Parser)]
#[command(
    name = "gpe",
    version,
    about = "Eigenpairs of the discretized Gross-Pitaevskii problem by homotopy continuation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace the configured homotopy paths.
    Solve {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Path indices, e.g. `1-9` or `1,3,5`.
        #[arg(long)]
        paths: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        kind: Option<RandomMatrixKind>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a finished run.
    Verify { report: PathBuf },
    /// Write plot data (with boundary zeros) for one path.
    Export {
        report: PathBuf,
        #[arg(long = "path")]
        index: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Solve {
            config,
            seed,
            paths,
            workers,
            sigma,
            kind,
            out,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(p) = paths {
                cfg.paths = parse_path_set(&p)?;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if sigma.is_some() {
                cfg.sigma = sigma;
            }
            if kind.is_some() {
                cfg.kind = kind;
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            let outcome = cmd_solve(&cfg)?;
            for p in &outcome.report.paths {
                match p.lambda {
                    Some(l) => println!(
                        "path {:>3}  lambda = {l:.6}  residual = {:.2e}  {:?}",
                        p.index,
                        p.residual.unwrap_or(f64::NAN),
                        p.outcome
                    ),
                    None => println!("path {:>3}  {:?}", p.index, p.outcome),
                }
            }
            println!("report written to {}", outcome.report_path.display());
            Ok(outcome.exit_code())
        }
        Command::Verify { report } => {
            let summary = cmd_verify(&report)?;
            for line in &summary.checks {
                println!("{line}");
            }
            Ok(if summary.passed() { 0 } else { 1 })
        }
        Command::Export { report, index, out } => {
            let (path, rows) = cmd_export(&report, index, out.as_deref())?;
            println!("wrote {rows} rows to {}", path.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
