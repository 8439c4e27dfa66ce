//! Configuration, drivers and file formats for the `gpe` command.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::{cmd_export, cmd_solve, cmd_verify, CheckStatus, SolveOutcome, VerifySummary};
pub use config::{parse_path_set, RunConfig};
pub use error::CliError;
pub use report::RunReport;
