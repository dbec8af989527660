//! The four subcommands.

use std::path::Path;

use ldp_pate::bayesian::{run_chain, GibbsConfig, Observed};
use ldp_pate::frequentist::{estimate_custom_dm, estimate_custom_ipw, estimate_naive, estimate_ols};
use ldp_pate::mechanisms::{privatize_custom_a, privatize_custom_b, privatize_joint};
use ldp_pate::simulation::{run_grid, Estimator, Grid, GridCell, MetricsRow};
use ldp_pate::{derive_stream, EstimateReport, Method, PrivacyBudget, RawDataset, Scenario};
use serde::Serialize;

use crate::io::{self, fmt_f64, Manifest, Release, FORMAT_VERSION};
use crate::{close, BudgetArgs, CliError, EstimateArgs, GibbsArgs, PosteriorArgs, PrivatizeArgs, SimulateArgs};

pub fn privatize(a: &PrivatizeArgs) -> Result<(), CliError> {
    let budget = a.budget.resolve(a.scenario)?;
    let records = io::read_raw(&a.input)?;
    let d = records.first().and_then(|r| r.x.as_ref()).map(Vec::len).filter(|&d| d > 0);
    let p = match a.scenario {
        Scenario::CustomB => {
            if a.p.is_some() {
                log::warn!("--p is ignored for custom_b, whose analysis treats p as unknown");
            }
            None
        }
        _ => a.p,
    };
    let data = RawDataset::new(records, p);
    let rng = derive_stream(a.seed, 0);
    let release = match a.scenario {
        Scenario::Joint | Scenario::JointWithCovariates => Release::Joint(privatize_joint(&data, &budget, &rng)?),
        Scenario::CustomA => Release::CustomA(privatize_custom_a(&data, budget.eps_a().unwrap(), &rng)?),
        Scenario::CustomB => {
            let [e1, e2, e3] = budget.eps_b().unwrap();
            Release::CustomB(privatize_custom_b(&data, e1, e2, e3, &rng)?)
        }
    };
    let d = if a.scenario == Scenario::JointWithCovariates { d } else { None };
    io::write_release(&a.output, a.scenario, d, &release)?;
    Manifest {
        format_version: FORMAT_VERSION,
        scenario: a.scenario,
        eps_total: budget.total(),
        eps_split: budget.components().to_vec(),
        seed: a.seed,
        n: data.n(),
        p,
        d,
    }
    .write(&a.output)
}

/// Reads a privatized file and its manifest, refusing budgets or `p` that
/// contradict the manifest.
fn load(input: &Path, budget: &BudgetArgs, p: Option<f64>) -> Result<(Manifest, Release, Option<f64>), CliError> {
    let m = Manifest::read(input)?;
    let recorded = m.budget()?;
    if !budget.is_empty() {
        let requested = budget.resolve(m.scenario)?;
        let same = requested
            .components()
            .iter()
            .zip(recorded.components())
            .all(|(&x, &y)| close(x, y));
        if !same {
            return Err(CliError::Input(format!(
                "requested budget {:?} differs from the budget {:?} recorded in the manifest",
                requested.components(),
                recorded.components()
            )));
        }
    }
    let p = match (m.p, p) {
        (Some(a), Some(b)) if !close(a, b) => {
            return Err(CliError::Input(format!("--p {b} differs from p = {a} recorded in the manifest")))
        }
        (Some(a), _) => Some(a),
        (None, b) => b,
    };
    let release = io::read_release(input, m.scenario, m.d)?;
    if release.len() != m.n {
        return Err(CliError::Input(format!(
            "{}: {} rows but the manifest records n = {}",
            input.display(),
            release.len(),
            m.n
        )));
    }
    Ok((m, release, p))
}

fn require_p(p: Option<f64>, scenario: Scenario) -> Result<f64, CliError> {
    p.ok_or_else(|| {
        CliError::Input(format!(
            "{scenario} release needs the assignment probability: none in the manifest, pass --p"
        ))
    })
}

/// Frequentist report with the budget echoed back.
#[derive(Debug, Serialize)]
pub struct EstimateOutput {
    pub method: Method,
    pub scenario: Scenario,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub alpha: f64,
    pub clamped_point: bool,
    pub clamped_lower: bool,
    pub clamped_upper: bool,
    pub n: usize,
    pub eps_total: f64,
    pub eps_split: Vec<f64>,
    pub p: Option<f64>,
}

pub fn estimate_report(a: &EstimateArgs) -> Result<EstimateOutput, CliError> {
    let (m, release, p) = load(&a.input, &a.budget, a.p)?;
    let budget = m.budget()?;
    let estimator = a.estimator.unwrap_or_else(|| Estimator::default_for(m.scenario));
    if estimator == Estimator::Bayes {
        return Err(CliError::Input("use the posterior command for the Bayesian estimator".into()));
    }
    if !estimator.supports(m.scenario) {
        return Err(CliError::Input(format!(
            "estimator {estimator} does not apply to a {} release",
            m.scenario
        )));
    }
    let report: EstimateReport = match (&release, estimator) {
        (Release::Joint(recs), Estimator::Naive) => {
            estimate_naive(recs, require_p(p, m.scenario)?, budget.eps_w().unwrap(), a.alpha)?
        }
        (Release::Joint(recs), Estimator::Ols) => {
            estimate_ols(recs, require_p(p, m.scenario)?, budget.eps_w().unwrap(), a.alpha)?
        }
        (Release::CustomA(recs), Estimator::CustomIpw) => estimate_custom_ipw(recs, a.alpha)?,
        (Release::CustomB(recs), Estimator::CustomDm) => estimate_custom_dm(recs, a.alpha)?,
        _ => unreachable!("estimator checked against scenario"),
    };
    Ok(EstimateOutput {
        method: report.method,
        scenario: m.scenario,
        estimate: report.estimate,
        std_error: report.std_error,
        ci_lower: report.ci_lower,
        ci_upper: report.ci_upper,
        alpha: report.alpha,
        clamped_point: report.clamped_point,
        clamped_lower: report.clamped_lower,
        clamped_upper: report.clamped_upper,
        n: report.n,
        eps_total: budget.total(),
        eps_split: budget.components().to_vec(),
        p: if m.scenario == Scenario::CustomB { None } else { p },
    })
}

pub fn estimate(a: &EstimateArgs) -> Result<(), CliError> {
    io::write_json(a.output.as_deref(), &estimate_report(a)?)
}

fn gibbs_config(g: &GibbsArgs, alpha: f64, seed: u64) -> GibbsConfig {
    GibbsConfig {
        k: g.k_trunc,
        iterations: g.iterations,
        burn_in: g.burn_in,
        ci_alpha: alpha,
        seed,
        stream: 0,
        ..GibbsConfig::default()
    }
}

#[derive(Debug, Serialize)]
pub struct PosteriorOutput {
    pub scenario: Scenario,
    pub mean: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub alpha: f64,
    pub n_draws: usize,
    pub mh_acceptance_rate: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub k_trunc: usize,
    pub max_occupied: usize,
    pub seed: u64,
    pub n: usize,
    pub eps_total: f64,
    pub eps_split: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn posterior(a: &PosteriorArgs) -> Result<(), CliError> {
    let (m, release, p) = load(&a.input, &a.budget, a.p)?;
    let budget = m.budget()?;
    let obs = match &release {
        Release::Joint(records) => Observed::Joint {
            records,
            p: require_p(p, m.scenario)?,
            eps_y: budget.eps_y().unwrap(),
            eps_w: budget.eps_w().unwrap(),
        },
        Release::CustomA(records) => Observed::CustomA {
            records,
            p: require_p(p, m.scenario)?,
            eps_a: budget.eps_a().unwrap(),
        },
        Release::CustomB(records) => Observed::CustomB {
            records,
            eps_b: budget.eps_b().unwrap(),
        },
    };
    let config = gibbs_config(&a.gibbs, a.alpha, a.seed);
    let out = run_chain(&obs, &config)?;
    if let Some(path) = &a.draws {
        let header = ["iteration", "pate", "sample_effect"].map(String::from);
        let rows = out.draws.iter().zip(&out.sample_effects).enumerate().map(|(j, (d, s))| {
            vec![(config.burn_in + j + 1).to_string(), fmt_f64(*d), fmt_f64(*s)]
        });
        io::write_csv(Some(path), &header, rows)?;
    }
    let s = out.summary;
    io::write_json(
        a.output.as_deref(),
        &PosteriorOutput {
            scenario: m.scenario,
            mean: s.mean,
            ci_lower: s.ci_lower,
            ci_upper: s.ci_upper,
            alpha: a.alpha,
            n_draws: s.n_draws,
            mh_acceptance_rate: s.mh_acceptance_rate,
            iterations: config.iterations,
            burn_in: config.burn_in,
            k_trunc: config.k,
            max_occupied: out.max_occupied,
            seed: a.seed,
            n: m.n,
            eps_total: budget.total(),
            eps_split: budget.components().to_vec(),
            warnings: out.warnings,
        },
    )
}

/// Grid cells in the order scenario, estimator, budget.
pub fn build_grid(a: &SimulateArgs) -> Result<Grid, CliError> {
    let mut cells = Vec::new();
    for &scenario in &a.scenario {
        let estimators = if a.estimator.is_empty() {
            vec![Estimator::default_for(scenario)]
        } else {
            a.estimator.clone()
        };
        let budgets: Vec<PrivacyBudget> = match &a.eps_split {
            Some(split) => vec![PrivacyBudget::new(scenario, split)?],
            None => a
                .eps_total
                .iter()
                .map(|&t| PrivacyBudget::equal_split(scenario, t))
                .collect::<Result<_, _>>()?,
        };
        for &estimator in &estimators {
            if !estimator.supports(scenario) {
                return Err(CliError::Input(format!("estimator {estimator} does not apply to {scenario}")));
            }
            for budget in &budgets {
                cells.push(GridCell {
                    estimator,
                    budget: budget.clone(),
                    n: a.n,
                    n_sim: a.nsim,
                });
            }
        }
    }
    if cells.is_empty() {
        log::warn!("no budgets given; the grid is empty");
    }
    let mut grid = Grid::new(cells);
    grid.alpha = a.alpha;
    grid.gibbs = gibbs_config(&a.gibbs, a.alpha, 0);
    Ok(grid)
}

pub const METRICS_HEADER: [&str; 11] = [
    "scenario",
    "estimator",
    "eps_total",
    "eps_split",
    "n",
    "n_sim",
    "bias",
    "mse",
    "coverage",
    "mean_width",
    "failure_count",
];

/// A metrics row as CSV fields; the split is `;`-separated.
pub fn metrics_fields(r: &MetricsRow) -> Vec<String> {
    vec![
        r.scenario.to_string(),
        r.estimator.to_string(),
        fmt_f64(r.eps_total),
        r.eps_split.iter().map(|&e| fmt_f64(e)).collect::<Vec<_>>().join(";"),
        r.n.to_string(),
        r.n_sim.to_string(),
        fmt_f64(r.bias),
        fmt_f64(r.mse),
        fmt_f64(r.coverage),
        fmt_f64(r.mean_width),
        r.failure_count.to_string(),
    ]
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(ldp_pate::Error::InvalidAlpha(a.alpha).into());
    }
    let grid = build_grid(a)?;
    let rows = match a.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Input(format!("cannot start {t} worker threads: {e}")))?
            .install(|| run_grid(&grid, a.seed))?,
        None => run_grid(&grid, a.seed)?,
    };
    let header = METRICS_HEADER.map(String::from);
    io::write_csv(a.output.as_deref(), &header, rows.iter().map(metrics_fields))
}
