//! Beta-regression data-generating process, evaluation metrics and the
//! replication runner.
//!
//! Replication `r` of every cell draws from `derive_stream(master_seed, r)`,
//! forked into independent sub-streams for data generation (0),
//! privatization (1) and the sampler (2). Cells that share `n` and budget
//! therefore see the same data and the same noise, which makes estimator
//! comparisons paired.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use crate::bayesian::{run_chain, GibbsConfig, Observed};
use crate::error::{Error, Result};
use crate::frequentist::{estimate_custom_dm, estimate_custom_ipw, estimate_naive, estimate_ols};
use crate::mechanisms::{privatize_custom_a, privatize_custom_b, privatize_joint};
use crate::rng::{derive_stream, RandomSource};
use crate::types::{PrivacyBudget, RawDataset, RawRecord, Scenario};
use crate::variates::beta;

/// E[Y(0)] under the default DGP.
pub const MEAN_Y0: f64 = 0.359613;
/// E[Y(1)] under the default DGP.
pub const MEAN_Y1: f64 = 0.457068;

/// PATE of the default DGP, `E[Y(1)] - E[Y(0)]`.
pub fn true_pate() -> f64 {
    MEAN_Y1 - MEAN_Y0
}

#[derive(Clone, Debug, PartialEq)]
pub struct DgpConfig {
    pub n: usize,
    /// Beta precision.
    pub phi: f64,
    /// Coefficients of (intercept, X1, X2, X3, w) in the logit mean.
    pub coefs: [f64; 5],
    pub p_treat: f64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            phi: 50.0,
            coefs: [1.0, -0.8, 0.5, -2.0, 0.5],
            p_treat: 0.5,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(Error::InvalidConfig(format!("phi must be positive, got {}", self.phi)));
        }
        if !(self.p_treat > 0.0 && self.p_treat < 1.0) {
            return Err(Error::InvalidProbability(self.p_treat));
        }
        if self.coefs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("coefficients must be finite".into()));
        }
        if self.n == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(())
    }

    /// Mean outcome `expit(b0 + b1 x1 + b2 x2 + b3 x3 + b4 w)`.
    pub fn mean_outcome(&self, x: &[f64; 3], w: bool) -> f64 {
        let c = &self.coefs;
        let eta = c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[2] + if w { c[4] } else { 0.0 };
        1.0 / (1.0 + (-eta).exp())
    }

    fn draw_covariates(&self, rng: &mut RandomSource) -> [f64; 3] {
        let x1 = rng.uniform();
        let x2 = beta(rng, 2.0, 5.0);
        let x3 = if rng.bernoulli(0.7) { 1.0 } else { 0.0 };
        [x1, x2, x3]
    }
}

/// A generated dataset together with both potential outcomes of every unit.
/// The latent arms are kept for test oracles only.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedData {
    pub dataset: RawDataset,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

impl SimulatedData {
    /// Average of `Y(1) - Y(0)` over the generated units.
    pub fn sample_pate(&self) -> f64 {
        self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).sum::<f64>() / self.y0.len() as f64
    }
}

/// Draws `cfg.n` units; unit `i` uses `rng.fork(i)`.
pub fn generate_dataset(cfg: &DgpConfig, rng: &RandomSource) -> Result<SimulatedData> {
    cfg.validate()?;
    let units: Vec<(RawRecord, f64, f64)> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng.fork(i as u64);
            let w = rng.bernoulli(cfg.p_treat);
            let x = cfg.draw_covariates(&mut rng);
            let mut arm = |w: bool| {
                let mu = cfg.mean_outcome(&x, w);
                beta(&mut rng, mu * cfg.phi, (1.0 - mu) * cfg.phi)
            };
            let y0 = arm(false);
            let y1 = arm(true);
            let y = if w { y1 } else { y0 };
            (RawRecord::with_covariates(w, y, x.to_vec()), y0, y1)
        })
        .collect();
    let mut records = Vec::with_capacity(cfg.n);
    let mut y0 = Vec::with_capacity(cfg.n);
    let mut y1 = Vec::with_capacity(cfg.n);
    for (r, a, b) in units {
        records.push(r);
        y0.push(a);
        y1.push(b);
    }
    Ok(SimulatedData {
        dataset: RawDataset::new(records, Some(cfg.p_treat)),
        y0,
        y1,
    })
}

/// Monte Carlo estimate of `E[mu(1) - mu(0)]` over `draws` covariate draws,
/// in chunks of 2^16 that each own a fork of `rng`.
pub fn true_pate_monte_carlo(cfg: &DgpConfig, draws: usize, rng: &RandomSource) -> f64 {
    const CHUNK: usize = 1 << 16;
    let chunks = draws.div_ceil(CHUNK);
    // Beta(2, 5) through its gamma representation, sampled directly here
    // because this loop dominates the cost.
    let g2 = Gamma::new(2.0, 1.0).unwrap();
    let g5 = Gamma::new(5.0, 1.0).unwrap();
    let total: f64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng.fork(c as u64);
            let len = CHUNK.min(draws - c * CHUNK);
            let mut acc = 0.0;
            for _ in 0..len {
                let x1 = rng.uniform();
                let (a, b) = (g2.sample(&mut rng), g5.sample(&mut rng));
                let x2 = a / (a + b);
                let x3 = if rng.bernoulli(0.7) { 1.0 } else { 0.0 };
                let x = [x1, x2, x3];
                acc += cfg.mean_outcome(&x, true) - cfg.mean_outcome(&x, false);
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    total / draws as f64
}

/// Bias (with the `tau - estimate` sign), MSE, coverage and mean interval
/// width over replications.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub bias: f64,
    pub mse: f64,
    pub coverage: f64,
    pub mean_width: f64,
}

/// `estimates` holds `(point, lower, upper)` per replication.
pub fn compute_metrics(estimates: &[(f64, f64, f64)], tau: f64) -> Result<Metrics> {
    if estimates.is_empty() {
        return Err(Error::TooFewRecords { needed: 1, got: 0 });
    }
    let m = estimates.len() as f64;
    let (mut bias, mut mse, mut covered, mut width) = (0.0, 0.0, 0.0, 0.0);
    for &(point, lo, hi) in estimates {
        let err = tau - point;
        bias += err;
        mse += err * err;
        if lo <= tau && tau <= hi {
            covered += 1.0;
        }
        width += hi - lo;
    }
    Ok(Metrics {
        bias: bias / m,
        mse: mse / m,
        coverage: covered / m,
        mean_width: width / m,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Naive,
    CustomIpw,
    CustomDm,
    Ols,
    /// Posterior mean and central credible interval of the DPM sampler.
    Bayes,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Naive,
        Estimator::CustomIpw,
        Estimator::CustomDm,
        Estimator::Ols,
        Estimator::Bayes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Naive => "naive",
            Estimator::CustomIpw => "custom_ipw",
            Estimator::CustomDm => "custom_dm",
            Estimator::Ols => "ols",
            Estimator::Bayes => "bayes",
        }
    }

    /// The natural frequentist estimator for a scenario.
    pub fn default_for(scenario: Scenario) -> Estimator {
        match scenario {
            Scenario::Joint => Estimator::Naive,
            Scenario::CustomA => Estimator::CustomIpw,
            Scenario::CustomB => Estimator::CustomDm,
            Scenario::JointWithCovariates => Estimator::Ols,
        }
    }

    pub fn supports(self, scenario: Scenario) -> bool {
        use Scenario::*;
        match self {
            Estimator::Naive => matches!(scenario, Joint | JointWithCovariates),
            Estimator::CustomIpw => scenario == CustomA,
            Estimator::CustomDm => scenario == CustomB,
            Estimator::Ols => scenario == JointWithCovariates,
            Estimator::Bayes => true,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator '{s}'")))
    }
}

/// One row of a simulation table.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub estimator: Estimator,
    pub budget: PrivacyBudget,
    pub n: usize,
    pub n_sim: usize,
}

impl GridCell {
    /// Cell whose budget splits `eps_total` equally over the scenario's
    /// components.
    pub fn equal_split(scenario: Scenario, estimator: Estimator, eps_total: f64, n: usize, n_sim: usize) -> Result<Self> {
        Ok(Self {
            estimator,
            budget: PrivacyBudget::equal_split(scenario, eps_total)?,
            n,
            n_sim,
        })
    }

    pub fn scenario(&self) -> Scenario {
        self.budget.scenario()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.estimator.supports(self.scenario()) {
            return Err(Error::ScenarioMismatch {
                expected: self.estimator.as_str(),
                got: self.scenario().as_str(),
            });
        }
        if self.n == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub cells: Vec<GridCell>,
    /// Data-generating process; `n` is taken from each cell.
    pub dgp: DgpConfig,
    /// Sampler settings for [`Estimator::Bayes`] cells; seed and stream are
    /// replaced per replication.
    pub gibbs: GibbsConfig,
    /// Significance level of the frequentist intervals.
    pub alpha: f64,
    /// Estimand used for bias, MSE and coverage.
    pub tau: f64,
}

impl Grid {
    pub fn new(cells: Vec<GridCell>) -> Self {
        Self {
            cells,
            dgp: DgpConfig::default(),
            gibbs: GibbsConfig::default(),
            alpha: 0.05,
            tau: true_pate(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub scenario: Scenario,
    pub estimator: Estimator,
    pub eps_total: f64,
    pub eps_split: Vec<f64>,
    pub n: usize,
    pub n_sim: usize,
    pub bias: f64,
    pub mse: f64,
    pub coverage: f64,
    pub mean_width: f64,
    pub failure_count: usize,
}

/// Outcome of one replication of one cell.
pub type Replication = Result<(f64, f64, f64)>;

/// Runs replication `r` of `cell`.
pub fn replicate(grid: &Grid, cell: &GridCell, master_seed: u64, r: u64) -> Replication {
    let rep = derive_stream(master_seed, r);
    let dgp = DgpConfig { n: cell.n, ..grid.dgp.clone() };
    let data = generate_dataset(&dgp, &rep.fork(0))?.dataset;
    let noise = rep.fork(1);
    let chain = rep.fork(2);
    estimate_replication(grid, cell, &data, &noise, &chain)
}

fn estimate_replication(
    grid: &Grid,
    cell: &GridCell,
    data: &RawDataset,
    noise: &RandomSource,
    chain: &RandomSource,
) -> Replication {
    let budget = &cell.budget;
    let alpha = grid.alpha;
    let gibbs = GibbsConfig {
        seed: chain.seed(),
        stream: chain.stream(),
        ..grid.gibbs.clone()
    };
    let bayes = |obs: Observed<'_>| -> Replication {
        let s = run_chain(&obs, &gibbs)?.summary;
        Ok((s.mean, s.ci_lower, s.ci_upper))
    };
    let freq = |r: crate::types::EstimateReport| Ok((r.estimate, r.ci_lower, r.ci_upper));
    match budget.scenario() {
        Scenario::Joint | Scenario::JointWithCovariates => {
            let p = data.require_p()?;
            let recs = privatize_joint(data, budget, noise)?;
            let (eps_y, eps_w) = (budget.eps_y().unwrap(), budget.eps_w().unwrap());
            match cell.estimator {
                Estimator::Naive => freq(estimate_naive(&recs, p, eps_w, alpha)?),
                Estimator::Ols => freq(estimate_ols(&recs, p, eps_w, alpha)?),
                Estimator::Bayes => bayes(Observed::Joint { records: &recs, p, eps_y, eps_w }),
                e => unreachable!("{e} validated against scenario"),
            }
        }
        Scenario::CustomA => {
            let eps_a = budget.eps_a().unwrap();
            let recs = privatize_custom_a(data, eps_a, noise)?;
            match cell.estimator {
                Estimator::CustomIpw => freq(estimate_custom_ipw(&recs, alpha)?),
                Estimator::Bayes => bayes(Observed::CustomA {
                    records: &recs,
                    p: data.require_p()?,
                    eps_a,
                }),
                e => unreachable!("{e} validated against scenario"),
            }
        }
        Scenario::CustomB => {
            let eps_b = budget.eps_b().unwrap();
            let recs = privatize_custom_b(data, eps_b[0], eps_b[1], eps_b[2], noise)?;
            match cell.estimator {
                Estimator::CustomDm => freq(estimate_custom_dm(&recs, alpha)?),
                Estimator::Bayes => bayes(Observed::CustomB { records: &recs, eps_b }),
                e => unreachable!("{e} validated against scenario"),
            }
        }
    }
}

/// All replications of one cell, in replication order. Failed
/// replications are returned as errors, never imputed.
pub fn run_cell(grid: &Grid, cell: &GridCell, master_seed: u64) -> Result<Vec<Replication>> {
    cell.validate()?;
    Ok((0..cell.n_sim as u64)
        .into_par_iter()
        .map(|r| replicate(grid, cell, master_seed, r))
        .collect())
}

/// Aggregates replications into a table row. Metrics are computed over the
/// successful replications; they are NaN when every replication failed.
pub fn summarize_cell(cell: &GridCell, reps: &[Replication], tau: f64) -> MetricsRow {
    let ok: Vec<(f64, f64, f64)> = reps.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let failure_count = reps.len() - ok.len();
    let metrics = compute_metrics(&ok, tau).unwrap_or(Metrics {
        bias: f64::NAN,
        mse: f64::NAN,
        coverage: f64::NAN,
        mean_width: f64::NAN,
    });
    MetricsRow {
        scenario: cell.scenario(),
        estimator: cell.estimator,
        eps_total: cell.budget.total(),
        eps_split: cell.budget.components().to_vec(),
        n: cell.n,
        n_sim: cell.n_sim,
        bias: metrics.bias,
        mse: metrics.mse,
        coverage: metrics.coverage,
        mean_width: metrics.mean_width,
        failure_count,
    }
}

/// Runs every cell of the grid. Deterministic given `master_seed`,
/// whatever the number of worker threads.
pub fn run_grid(grid: &Grid, master_seed: u64) -> Result<Vec<MetricsRow>> {
    grid.dgp.validate()?;
    grid.gibbs.validate()?;
    for cell in &grid.cells {
        cell.validate()?;
    }
    grid.cells
        .iter()
        .map(|cell| {
            let reps = run_cell(grid, cell, master_seed)?;
            let failures = reps.iter().filter(|r| r.is_err()).count();
            if failures > 0 {
                log::info!(
                    "{} / {} at eps {}: {failures} of {} replications failed",
                    cell.scenario(),
                    cell.estimator,
                    cell.budget.total(),
                    cell.n_sim
                );
            }
            Ok(summarize_cell(cell, &reps, grid.tau))
        })
        .collect()
}
