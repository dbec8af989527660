//! Command-line front end for `ldp-pate`: privatize raw experiment files,
//! estimate the PATE from privatized files, run the DPM sampler and run
//! simulation grids.
//!
//! Exit codes: 0 on success, 1 on I/O failure, 2 on invalid input or
//! configuration, 3 when the data are too degenerate for the estimator.

pub mod commands;
pub mod io;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ldp_pate::simulation::Estimator;
use ldp_pate::{PrivacyBudget, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ldp_pate::Error),
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn csv(path: &Path, e: csv::Error) -> Self {
        if e.is_io_error() {
            if let csv::ErrorKind::Io(source) = e.into_kind() {
                return Self::io(path, source);
            }
            unreachable!("is_io_error checked");
        }
        CliError::Input(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_degenerate() => 3,
            CliError::Core(_) | CliError::Input(_) => 2,
            CliError::Io { .. } => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ldp-pate", version, about = "Treatment effect estimation from locally private experiment data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Privatize a raw experiment CSV (`w,y[,x1..xd]`).
    Privatize(PrivatizeArgs),
    /// Frequentist estimate and confidence interval from a privatized file.
    Estimate(EstimateArgs),
    /// Posterior summary of the PATE from the DPM sampler.
    Posterior(PosteriorArgs),
    /// Monte Carlo evaluation grid on the built-in data-generating process.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct BudgetArgs {
    /// Total privacy budget, split equally over the scenario's components.
    #[arg(long)]
    pub eps_total: Option<f64>,
    /// Comma-separated per-component budgets, overriding the equal split.
    #[arg(long, value_delimiter = ',')]
    pub eps_split: Option<Vec<f64>>,
}

impl BudgetArgs {
    pub fn is_empty(&self) -> bool {
        self.eps_total.is_none() && self.eps_split.is_none()
    }

    pub fn resolve(&self, scenario: Scenario) -> Result<PrivacyBudget, CliError> {
        match (&self.eps_split, self.eps_total) {
            (Some(split), total) => {
                let budget = PrivacyBudget::new(scenario, split)?;
                if let Some(t) = total {
                    if !close(budget.total(), t) {
                        return Err(CliError::Input(format!(
                            "--eps-split sums to {} but --eps-total is {t}",
                            budget.total()
                        )));
                    }
                }
                Ok(budget)
            }
            (None, Some(t)) => Ok(PrivacyBudget::equal_split(scenario, t)?),
            (None, None) => Err(CliError::Input("a budget is required: pass --eps-total or --eps-split".into())),
        }
    }
}

/// Budgets typed on the command line are compared with a small relative
/// tolerance so that printed thirds still match.
pub(crate) fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, Args)]
pub struct PrivatizeArgs {
    #[arg(long)]
    pub scenario: Scenario,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// Treatment assignment probability; required for custom_a, recorded
    /// for the joint scenarios.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub input: PathBuf,
    /// Privatized CSV; the manifest is written next to it.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// naive, custom_ipw, custom_dm or ols; defaults to the scenario's
    /// natural estimator.
    #[arg(long)]
    pub estimator: Option<Estimator>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Overrides a missing `p` in the manifest; must agree with it if both
    /// are present.
    #[arg(long)]
    pub p: Option<f64>,
    /// Optional check against the manifest budget.
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// JSON report path; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GibbsArgs {
    #[arg(long, default_value_t = 5000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 2500)]
    pub burn_in: usize,
    /// Truncation level of the stick-breaking mixture.
    #[arg(long, default_value_t = 20)]
    pub k_trunc: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PosteriorArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub p: Option<f64>,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[command(flatten)]
    pub gibbs: GibbsArgs,
    /// Credible interval level is `1 - alpha`.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON summary path; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Optional CSV of the post-burn-in draws.
    #[arg(long)]
    pub draws: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Comma-separated scenarios.
    #[arg(long, value_delimiter = ',', required = true)]
    pub scenario: Vec<Scenario>,
    /// Comma-separated estimators; defaults to each scenario's natural one.
    #[arg(long, value_delimiter = ',')]
    pub estimator: Vec<Estimator>,
    /// Comma-separated total budgets, each split equally.
    #[arg(long, value_delimiter = ',')]
    pub eps_total: Vec<f64>,
    /// A single explicit split, used instead of --eps-total.
    #[arg(long, value_delimiter = ',')]
    pub eps_split: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub nsim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub gibbs: GibbsArgs,
    /// Worker threads; all available cores when omitted. Results do not
    /// depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Metrics CSV path; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Privatize(a) => commands::privatize(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Posterior(a) => commands::posterior(&a),
        Command::Simulate(a) => commands::simulate(&a),
    }
}
