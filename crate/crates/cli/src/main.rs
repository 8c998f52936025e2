//! `lssid`: simulate, estimate, realize, identify, validate and compare
//! linear switched systems.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lssid_cli::commands;
use lssid_cli::config::{Overrides, RunConfig};
use lssid_cli::error::CliResult;

#[derive(Parser)]
#[command(name = "lssid", version, about = "Identification of linear switched systems with i.i.d. switching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Direct,
    Ls,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// `search` or `file:PATH`.
    #[arg(long)]
    selection: Option<String>,
}

impl RunArgs {
    fn load(&self) -> CliResult<RunConfig> {
        let ov = Overrides {
            out: self.out.clone(),
            seed: self.seed,
            estimator: self.estimator.map(|e| match e {
                EstimatorArg::Direct => "direct".to_string(),
                EstimatorArg::Ls => "ls".to_string(),
            }),
            selection: self.selection.clone(),
        };
        RunConfig::load(self.config.as_deref(), &ov)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a model; writes data.csv, noise_free.csv and manifest.toml.
    Simulate(RunArgs),
    /// Estimate the covariance table of a dataset.
    Estimate(RunArgs),
    /// Realize an innovation model from a covariance table.
    Realize(RunArgs),
    /// Estimate and realize in one step, optionally validating the result.
    Identify(RunArgs),
    /// Score a model's one-step predictions on a dataset.
    Validate(RunArgs),
    /// Consistency experiment over data lengths and seeds.
    Consistency(RunArgs),
    /// Look for a state transformation relating two models.
    Compare {
        model_a: PathBuf,
        model_b: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a state transformation `x -> T x` to a model.
    Transform {
        model: PathBuf,
        /// TOML file with `t = [[...], ...]`.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => commands::cmd_simulate(&a.load()?),
        Command::Estimate(a) => commands::cmd_estimate(a.load()?),
        Command::Realize(a) => commands::cmd_realize(a.load()?),
        Command::Identify(a) => commands::cmd_identify(a.load()?),
        Command::Validate(a) => commands::cmd_validate(a.load()?),
        Command::Consistency(a) => commands::cmd_consistency(a.load()?),
        Command::Compare {
            model_a,
            model_b,
            tol,
            out,
        } => commands::cmd_compare(&model_a, &model_b, tol, out.as_deref()),
        Command::Transform { model, matrix, output } => commands::cmd_transform(&model, &matrix, &output),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
