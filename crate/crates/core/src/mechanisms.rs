//! Local differential privacy mechanisms and the three release scenarios.
//!
//! Every privatizer draws the noise for record `i` from `rng.fork(i)`, so
//! the release for a record depends only on the record and its index. This
//! makes privatization order-stable and lets it run in parallel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::types::{check_probability, validate_dataset, PrivacyBudget, RawDataset, Scenario};

/// Zero-centred Laplace distribution with a validated scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Laplace {
    scale: f64,
}

impl Laplace {
    pub fn new(scale: f64) -> Result<Self> {
        if scale.is_finite() && scale > 0.0 {
            Ok(Self { scale })
        } else {
            Err(Error::InvalidScale(scale))
        }
    }

    /// Noise for a query of sensitivity `sensitivity` under budget `eps`.
    pub fn for_budget(sensitivity: f64, eps: f64) -> Result<Self> {
        Self::new(sensitivity / eps)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn sample(&self, rng: &mut RandomSource) -> f64 {
        laplace_from_uniform(rng.uniform(), self.scale)
    }

    /// Log-density of `x` under Laplace(`mu`, scale).
    pub fn ln_pdf(&self, x: f64, mu: f64) -> f64 {
        -(2.0 * self.scale).ln() - (x - mu).abs() / self.scale
    }
}

/// Inverse-CDF transform of a uniform `u` in (0, 1).
pub fn laplace_from_uniform(u: f64, scale: f64) -> f64 {
    let centred = u - 0.5;
    -scale * centred.signum() * (1.0 - 2.0 * centred.abs()).ln()
}

pub fn laplace_sample(rng: &mut RandomSource, scale: f64) -> Result<f64> {
    Ok(Laplace::new(scale)?.sample(rng))
}

pub fn laplace_logpdf(x: f64, mu: f64, scale: f64) -> Result<f64> {
    Ok(Laplace::new(scale)?.ln_pdf(x, mu))
}

/// Probability that randomized response reports the true bit,
/// `exp(eps) / (1 + exp(eps))`.
pub fn keep_probability(eps: f64) -> f64 {
    1.0 / (1.0 + (-eps).exp())
}

pub fn randomized_response(rng: &mut RandomSource, w: bool, eps: f64) -> Result<bool> {
    if !(eps > 0.0) {
        return Err(Error::InvalidBudget { name: "eps_w", value: eps });
    }
    let keep = rng.bernoulli(keep_probability(eps));
    Ok(if keep { w } else { !w })
}

/// Sensitivity of the custom IPW summand, `max(1/p, 1/(1-p))`.
pub fn custom_a_sensitivity(p: f64) -> Result<f64> {
    check_probability(p)?;
    Ok((1.0 / p).max(1.0 / (1.0 - p)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointRecord {
    pub y_tilde: f64,
    pub w_tilde: bool,
    pub x_tilde: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomARecord {
    pub a_tilde: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomBRecord {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl CustomBRecord {
    pub fn new(b1: f64, b2: f64, b3: f64) -> Self {
        Self { b1, b2, b3 }
    }

    /// Derived fourth component, `1 - b3`.
    pub fn b4(&self) -> f64 {
        1.0 - self.b3
    }
}

/// Joint release: `y + Lap(1/eps_y)`, randomized response on `w`, and for
/// [`Scenario::JointWithCovariates`] each of the `d` covariates plus
/// `Lap(d/eps_x)`.
pub fn privatize_joint(
    d: &RawDataset,
    budget: &PrivacyBudget,
    rng: &RandomSource,
) -> Result<Vec<JointRecord>> {
    validate_dataset(d)?;
    let (eps_y, eps_w) = match budget.scenario() {
        Scenario::Joint | Scenario::JointWithCovariates => {
            (budget.eps_y().unwrap(), budget.eps_w().unwrap())
        }
        other => {
            return Err(Error::ScenarioMismatch {
                expected: Scenario::Joint.as_str(),
                got: other.as_str(),
            })
        }
    };
    let covariate_noise = match budget.eps_x() {
        Some(eps_x) => {
            let dim = d.covariate_dim()?.ok_or(Error::MissingCovariates)?;
            if dim == 0 {
                return Err(Error::MissingCovariates);
            }
            Some(Laplace::for_budget(dim as f64, eps_x)?)
        }
        None => None,
    };
    let outcome_noise = Laplace::for_budget(1.0, eps_y)?;
    let keep = keep_probability(eps_w);

    Ok(d.records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = rng.fork(i as u64);
            let y_tilde = r.y + outcome_noise.sample(&mut rng);
            let w_tilde = if rng.bernoulli(keep) { r.w } else { !r.w };
            let x_tilde = covariate_noise.map(|noise| {
                r.x.as_ref()
                    .expect("dimension checked above")
                    .iter()
                    .map(|x| x + noise.sample(&mut rng))
                    .collect()
            });
            JointRecord {
                y_tilde,
                w_tilde,
                x_tilde,
            }
        })
        .collect())
}

/// Custom release with known `p`: the IPW summand
/// `A = w*y/p - (1-w)*y/(1-p)` plus `Lap(max(1/p, 1/(1-p)) / eps_a)`.
pub fn privatize_custom_a(
    d: &RawDataset,
    eps_a: f64,
    rng: &RandomSource,
) -> Result<Vec<CustomARecord>> {
    PrivacyBudget::custom_a(eps_a)?;
    validate_dataset(d)?;
    let p = d.require_p()?;
    let noise = Laplace::for_budget(custom_a_sensitivity(p)?, eps_a)?;
    Ok(d.records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = rng.fork(i as u64);
            let a = if r.w { r.y / p } else { -r.y / (1.0 - p) };
            CustomARecord {
                a_tilde: a + noise.sample(&mut rng),
            }
        })
        .collect())
}

/// Custom release with unknown `p`: `(w*y, (1-w)*y, w)`, each plus its own
/// unit-sensitivity Laplace noise.
pub fn privatize_custom_b(
    d: &RawDataset,
    eps_b1: f64,
    eps_b2: f64,
    eps_b3: f64,
    rng: &RandomSource,
) -> Result<Vec<CustomBRecord>> {
    let budget = PrivacyBudget::custom_b(eps_b1, eps_b2, eps_b3)?;
    validate_dataset(d)?;
    let [e1, e2, e3] = budget.eps_b().unwrap();
    let (n1, n2, n3) = (
        Laplace::for_budget(1.0, e1)?,
        Laplace::for_budget(1.0, e2)?,
        Laplace::for_budget(1.0, e3)?,
    );
    Ok(d.records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = rng.fork(i as u64);
            let w = r.w_f64();
            CustomBRecord {
                b1: w * r.y + n1.sample(&mut rng),
                b2: (1.0 - w) * r.y + n2.sample(&mut rng),
                b3: w + n3.sample(&mut rng),
            }
        })
        .collect())
}
