//! Observed releases, sampler configuration and chain state.

use crate::error::{Error, Result};
use crate::mechanisms::{custom_a_sensitivity, CustomARecord, CustomBRecord, JointRecord, Laplace};
use crate::rng::RandomSource;
use crate::types::{check_probability, Scenario};

/// Privatized data together with everything needed to evaluate the
/// mechanism likelihood of each release.
#[derive(Clone, Debug)]
pub enum Observed<'a> {
    Joint {
        records: &'a [JointRecord],
        p: f64,
        eps_y: f64,
        eps_w: f64,
    },
    CustomA {
        records: &'a [CustomARecord],
        p: f64,
        eps_a: f64,
    },
    CustomB {
        records: &'a [CustomBRecord],
        eps_b: [f64; 3],
    },
}

impl Observed<'_> {
    pub fn n(&self) -> usize {
        match self {
            Observed::Joint { records, .. } => records.len(),
            Observed::CustomA { records, .. } => records.len(),
            Observed::CustomB { records, .. } => records.len(),
        }
    }

    pub fn scenario(&self) -> Scenario {
        match self {
            Observed::Joint { .. } => Scenario::Joint,
            Observed::CustomA { .. } => Scenario::CustomA,
            Observed::CustomB { .. } => Scenario::CustomB,
        }
    }

    /// Known assignment probability, absent for the three-summand release.
    pub fn known_p(&self) -> Option<f64> {
        match *self {
            Observed::Joint { p, .. } | Observed::CustomA { p, .. } => Some(p),
            Observed::CustomB { .. } => None,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n() == 0 {
            return Err(Error::EmptyDataset);
        }
        let check = |name: &'static str, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidBudget { name, value })
            }
        };
        match *self {
            Observed::Joint { p, eps_y, eps_w, .. } => {
                check_probability(p)?;
                check("eps_y", eps_y)?;
                check("eps_w", eps_w)
            }
            Observed::CustomA { p, eps_a, .. } => {
                check_probability(p)?;
                check("eps_a", eps_a)
            }
            Observed::CustomB { eps_b, .. } => {
                check("eps_b1", eps_b[0])?;
                check("eps_b2", eps_b[1])?;
                check("eps_b3", eps_b[2])
            }
        }
    }
}

/// Mechanism log-likelihood of unit `i`'s release given its assignment and
/// the potential outcome of that arm.
#[derive(Clone, Debug)]
pub struct Likelihood<'a> {
    obs: Observed<'a>,
    lap: [Laplace; 3],
    ln_keep: f64,
    ln_flip: f64,
}

impl<'a> Likelihood<'a> {
    pub fn new(obs: &Observed<'a>) -> Result<Self> {
        obs.validate()?;
        let unit = Laplace::new(1.0)?;
        let (lap, ln_keep, ln_flip) = match *obs {
            Observed::Joint { eps_y, eps_w, .. } => {
                // ln q and ln(1 - q) without forming 1 - q.
                let ln_keep = -(-eps_w).exp().ln_1p();
                ([Laplace::for_budget(1.0, eps_y)?, unit, unit], ln_keep, ln_keep - eps_w)
            }
            Observed::CustomA { p, eps_a, .. } => {
                let delta = custom_a_sensitivity(p)?;
                ([Laplace::for_budget(delta, eps_a)?, unit, unit], 0.0, 0.0)
            }
            Observed::CustomB { eps_b, .. } => (
                [
                    Laplace::for_budget(1.0, eps_b[0])?,
                    Laplace::for_budget(1.0, eps_b[1])?,
                    Laplace::for_budget(1.0, eps_b[2])?,
                ],
                0.0,
                0.0,
            ),
        };
        Ok(Self {
            obs: obs.clone(),
            lap,
            ln_keep,
            ln_flip,
        })
    }

    pub fn observed(&self) -> &Observed<'a> {
        &self.obs
    }

    /// Full log-likelihood of the release, including terms that do not
    /// depend on `y` (needed when comparing arms).
    pub fn ln_release(&self, i: usize, w: bool, y: f64) -> f64 {
        match self.obs {
            Observed::Joint { records, .. } => {
                let r = &records[i];
                let label = if r.w_tilde == w { self.ln_keep } else { self.ln_flip };
                self.lap[0].ln_pdf(r.y_tilde, y) + label
            }
            Observed::CustomA { records, p, .. } => {
                let loc = if w { y / p } else { -y / (1.0 - p) };
                self.lap[0].ln_pdf(records[i].a_tilde, loc)
            }
            Observed::CustomB { records, .. } => {
                let r = &records[i];
                let (m1, m2, m3) = if w { (y, 0.0, 1.0) } else { (0.0, y, 0.0) };
                self.lap[0].ln_pdf(r.b1, m1) + self.lap[1].ln_pdf(r.b2, m2) + self.lap[2].ln_pdf(r.b3, m3)
            }
        }
    }

    /// The part of the release that carries `Y_i(w)`, mapped back to the
    /// outcome scale. Used only to start the chain.
    pub(crate) fn outcome_guess(&self, i: usize, w: bool) -> f64 {
        match self.obs {
            Observed::Joint { records, .. } => records[i].y_tilde,
            Observed::CustomA { records, p, .. } => {
                if w {
                    records[i].a_tilde * p
                } else {
                    -records[i].a_tilde * (1.0 - p)
                }
            }
            Observed::CustomB { records, .. } => {
                if w {
                    records[i].b1
                } else {
                    records[i].b2
                }
            }
        }
    }
}

/// Settings of the blocked Gibbs sampler.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsConfig {
    /// Truncation level of the stick-breaking representation.
    pub k: usize,
    pub iterations: usize,
    pub burn_in: usize,
    /// Base-measure location and variance of each component mean.
    pub mu0: f64,
    pub sigma0_sq: f64,
    /// Inverse-gamma shape and scale of each component variance.
    pub a0: f64,
    pub b0: f64,
    /// Gamma (shape, rate) prior on the DP concentration.
    pub alpha_prior: (f64, f64),
    pub alpha_proposal_sd: f64,
    /// Level of the central credible interval.
    pub ci_alpha: f64,
    pub seed: u64,
    pub stream: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            k: 20,
            iterations: 5000,
            burn_in: 2500,
            mu0: 0.5,
            sigma0_sq: 9.0,
            a0: 2.0,
            b0: 0.04,
            alpha_prior: (1.0, 1.0),
            alpha_proposal_sd: 1.0,
            ci_alpha: 0.05,
            seed: 0,
            stream: 0,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k < 2 {
            return fail(format!("truncation level must be at least 2, got {}", self.k));
        }
        if self.burn_in >= self.iterations {
            return fail(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        let positive = [
            ("sigma0_sq", self.sigma0_sq),
            ("a0", self.a0),
            ("b0", self.b0),
            ("alpha prior shape", self.alpha_prior.0),
            ("alpha prior rate", self.alpha_prior.1),
            ("alpha proposal sd", self.alpha_proposal_sd),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !self.mu0.is_finite() {
            return fail(format!("mu0 must be finite, got {}", self.mu0));
        }
        if !(self.ci_alpha > 0.0 && self.ci_alpha < 1.0) {
            return Err(Error::InvalidAlpha(self.ci_alpha));
        }
        Ok(())
    }

    pub fn rng(&self) -> RandomSource {
        RandomSource::new(self.seed, self.stream)
    }
}

/// Latent variables and DPM parameters. Cluster labels are 0-based.
#[derive(Clone, Debug, PartialEq)]
pub struct DpmState {
    pub w: Vec<bool>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub c: Vec<usize>,
    /// `mu[k][w]` and `sigma2[k][w]`: component location and variance per arm.
    pub mu: Vec<[f64; 2]>,
    pub sigma2: Vec<[f64; 2]>,
    /// Stick proportions `u'_k`; the last one is always 1.
    pub sticks: Vec<f64>,
    /// `ln(1 - u'_k)`, kept separately so long products do not underflow.
    pub ln_stick_rest: Vec<f64>,
    pub weights: Vec<f64>,
    pub dp_alpha: f64,
    pub p_est: f64,
}

impl DpmState {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn y(&self, i: usize, w: bool) -> f64 {
        if w {
            self.y1[i]
        } else {
            self.y0[i]
        }
    }

    pub fn set_y(&mut self, i: usize, w: bool, v: f64) {
        if w {
            self.y1[i] = v
        } else {
            self.y0[i] = v
        }
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut n = vec![0; self.k()];
        for &c in &self.c {
            n[c] += 1;
        }
        n
    }

    pub fn occupied(&self) -> usize {
        self.counts().iter().filter(|&&n| n > 0).count()
    }

    /// Recomputes the weights `u_k = u'_k prod_{j<k} (1 - u'_j)`.
    pub fn recompose_weights(&mut self) {
        let mut ln_rest = 0.0f64;
        for k in 0..self.k() {
            self.weights[k] = self.sticks[k] * ln_rest.exp();
            ln_rest += self.ln_stick_rest[k];
        }
    }

    /// Starting state for a chain over `n` units: equal stick weights,
    /// components at the base-measure location, unit-level values left for
    /// the caller to fill.
    pub(crate) fn blank(n: usize, config: &GibbsConfig) -> Self {
        let k = config.k;
        let sticks: Vec<f64> = (0..k).map(|j| 1.0 / (k - j) as f64).collect();
        let ln_stick_rest = sticks.iter().map(|s| (-s).ln_1p()).collect();
        let sigma2 = config.b0 / (config.a0 + 1.0);
        let mut state = Self {
            w: vec![false; n],
            y0: vec![0.5; n],
            y1: vec![0.5; n],
            c: vec![0; n],
            mu: vec![[config.mu0.clamp(0.0, 1.0); 2]; k],
            sigma2: vec![[sigma2; 2]; k],
            sticks,
            ln_stick_rest,
            weights: vec![0.0; k],
            dp_alpha: 1.0,
            p_est: 0.5,
        };
        state.recompose_weights();
        state
    }
}

/// Mean and central credible interval of the PATE draws.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub n_draws: usize,
    pub mh_acceptance_rate: f64,
}
