//! Command-line front end: fit additive models from columnar text files,
//! run global tests on their smooth and functional terms, and run the
//! simulation study.
//!
//! Exit status is 0 on success, 2 for user errors (bad flags, unreadable or
//! malformed input, unknown terms) and 3 for numerical failures and fits
//! that did not converge.

pub mod artifact;
pub mod commands;
pub mod error;
pub mod model;
pub mod report;
pub mod runner;
pub mod table;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult, EXIT_NUMERICAL, EXIT_USER};

#[derive(Debug, Parser)]
#[command(name = "vamzls", version, about = "Variational additive models with global tests for smooth and functional terms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write a fit artifact.
    Fit(FitArgs),
    /// Fit a model and test its smooth and functional terms.
    Test(TestArgs),
    /// Run simulation scenarios and report rejection rates.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Gaussian,
    Probit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    /// Aligned text table.
    #[default]
    Text,
    /// One JSON object per line.
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum CFormArg {
    #[default]
    FullRow,
    PrincipalSubmatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum CovarianceArg {
    /// sigma^2 I for Gaussian fits, I for probit fits.
    #[default]
    Auto,
    /// Probit working variance at the fitted predictor.
    Working,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Columnar data file (comma or tab separated, header row required).
    #[arg(long)]
    pub data: PathBuf,
    /// TOML model file; replaces --family/--response/--scalar/--smooth/--functional.
    #[arg(long, conflicts_with_all = ["response", "scalar", "smooth", "functional"])]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FamilyArg::Gaussian)]
    pub family: FamilyArg,
    /// Response column.
    #[arg(long)]
    pub response: Option<String>,
    /// Linear covariate column (repeatable).
    #[arg(long)]
    pub scalar: Vec<String>,
    /// Smooth term `name` or `name:knots` (repeatable).
    #[arg(long)]
    pub smooth: Vec<String>,
    /// Functional term `name` or `name:knots`, read from columns `name[1]..name[T]` (repeatable).
    #[arg(long)]
    pub functional: Vec<String>,
    /// Number of basis functions for terms without an explicit count; with
    /// --model, overrides every term.
    #[arg(long)]
    pub knots: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ControlArgs {
    /// Absolute change in the lower bound that ends the iterations.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TestOptionArgs {
    #[arg(long, value_enum, default_value_t = CFormArg::FullRow)]
    pub c_form: CFormArg,
    #[arg(long, value_enum, default_value_t = CovarianceArg::Auto)]
    pub covariance: CovarianceArg,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub control: ControlArgs,
    /// Fit artifact path.
    #[arg(long, default_value = "fit.jsonl")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub control: ControlArgs,
    #[command(flatten)]
    pub options: TestOptionArgs,
    /// Term to test (repeatable); defaults to every smooth and functional term.
    #[arg(long)]
    pub term: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Write results here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Compact scenario such as `gaussian/smooth_phi/N=200/xi=0` (repeatable).
    #[arg(long)]
    pub scenario: Vec<String>,
    /// TOML file with `[[scenario]]` tables.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Replications per scenario, overriding the scenario's own count.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub control: ControlArgs,
    #[command(flatten)]
    pub options: TestOptionArgs,
    /// Include per-replication p-values in JSON output.
    #[arg(long)]
    pub keep_pvalues: bool,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

/// Run a parsed command line, returning the process exit status.
pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Fit(a) => commands::fit(&a, stdout, stderr),
        Command::Test(a) => commands::test(&a, stdout, stderr),
        Command::Simulate(a) => commands::simulate(&a, stdout, stderr),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
