//! Domain types shared across the crate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the experiment's data is released.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Outcome through the Laplace mechanism, treatment through randomized
    /// response.
    Joint,
    /// A single inverse-probability-weighted summand per unit, known `p`.
    CustomA,
    /// Three summands per unit, `p` unknown to the analyst.
    CustomB,
    /// As `Joint`, plus Laplace-noised covariates.
    JointWithCovariates,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Joint,
        Scenario::CustomA,
        Scenario::CustomB,
        Scenario::JointWithCovariates,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Joint => "joint",
            Scenario::CustomA => "custom_a",
            Scenario::CustomB => "custom_b",
            Scenario::JointWithCovariates => "joint_with_covariates",
        }
    }

    /// Names of the budget components in the order they are stored.
    pub fn component_names(self) -> &'static [&'static str] {
        match self {
            Scenario::Joint => &["eps_y", "eps_w"],
            Scenario::CustomA => &["eps_a"],
            Scenario::CustomB => &["eps_b1", "eps_b2", "eps_b3"],
            Scenario::JointWithCovariates => &["eps_x", "eps_y", "eps_w"],
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scenario '{s}'")))
    }
}

/// Per-scenario LDP budgets. Components are validated on construction, so
/// any value of this type has strictly positive, finite components.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrivacyBudget {
    scenario: Scenario,
    components: Vec<f64>,
}

impl PrivacyBudget {
    pub fn new(scenario: Scenario, components: &[f64]) -> Result<Self> {
        let names = scenario.component_names();
        if components.len() != names.len() {
            return Err(Error::BudgetArity {
                scenario: scenario.as_str(),
                expected: names.len(),
                got: components.len(),
            });
        }
        for (&name, &value) in names.iter().zip(components) {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidBudget { name, value });
            }
        }
        Ok(Self {
            scenario,
            components: components.to_vec(),
        })
    }

    /// Splits `eps_total` equally over the scenario's components.
    pub fn equal_split(scenario: Scenario, eps_total: f64) -> Result<Self> {
        let k = scenario.component_names().len();
        Self::new(scenario, &vec![eps_total / k as f64; k])
    }

    pub fn joint(eps_y: f64, eps_w: f64) -> Result<Self> {
        Self::new(Scenario::Joint, &[eps_y, eps_w])
    }

    pub fn custom_a(eps_a: f64) -> Result<Self> {
        Self::new(Scenario::CustomA, &[eps_a])
    }

    pub fn custom_b(eps_b1: f64, eps_b2: f64, eps_b3: f64) -> Result<Self> {
        Self::new(Scenario::CustomB, &[eps_b1, eps_b2, eps_b3])
    }

    pub fn joint_with_covariates(eps_x: f64, eps_y: f64, eps_w: f64) -> Result<Self> {
        Self::new(Scenario::JointWithCovariates, &[eps_x, eps_y, eps_w])
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    /// Sequential composition: the release as a whole is `total()`-LDP.
    pub fn total(&self) -> f64 {
        self.components.iter().sum()
    }

    fn get(&self, name: &str) -> Option<f64> {
        self.scenario
            .component_names()
            .iter()
            .position(|n| *n == name)
            .map(|i| self.components[i])
    }

    pub fn eps_y(&self) -> Option<f64> {
        self.get("eps_y")
    }

    pub fn eps_w(&self) -> Option<f64> {
        self.get("eps_w")
    }

    pub fn eps_x(&self) -> Option<f64> {
        self.get("eps_x")
    }

    pub fn eps_a(&self) -> Option<f64> {
        self.get("eps_a")
    }

    pub fn eps_b(&self) -> Option<[f64; 3]> {
        match self.scenario {
            Scenario::CustomB => Some([self.components[0], self.components[1], self.components[2]]),
            _ => None,
        }
    }
}

/// One experimental unit before privatization.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub w: bool,
    pub y: f64,
    pub x: Option<Vec<f64>>,
}

impl RawRecord {
    pub fn new(w: bool, y: f64) -> Self {
        Self { w, y, x: None }
    }

    pub fn with_covariates(w: bool, y: f64, x: Vec<f64>) -> Self {
        Self { w, y, x: Some(x) }
    }

    pub fn w_f64(&self) -> f64 {
        if self.w {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub records: Vec<RawRecord>,
    /// Known treatment assignment probability, if the design fixes one.
    pub p: Option<f64>,
}

impl RawDataset {
    pub fn new(records: Vec<RawRecord>, p: Option<f64>) -> Self {
        Self { records, p }
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    /// Common covariate dimension, `None` when no record carries covariates.
    pub fn covariate_dim(&self) -> Result<Option<usize>> {
        let Some(first) = self.records.first() else {
            return Ok(None);
        };
        let d = first.x.as_ref().map(Vec::len);
        for (index, r) in self.records.iter().enumerate() {
            let got = r.x.as_ref().map(Vec::len);
            if got != d {
                return Err(Error::RaggedCovariates {
                    index,
                    expected: d.unwrap_or(0),
                    got: got.unwrap_or(0),
                });
            }
        }
        Ok(d)
    }

    pub fn require_p(&self) -> Result<f64> {
        let p = self.p.ok_or(Error::MissingProbability)?;
        check_probability(p)?;
        Ok(p)
    }
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

/// Checks the record invariants and that the dataset is nonempty. Reports
/// the first violation found, in record order.
pub fn validate_dataset(d: &RawDataset) -> Result<()> {
    if d.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(p) = d.p {
        check_probability(p)?;
    }
    for (index, r) in d.records.iter().enumerate() {
        if !(0.0..=1.0).contains(&r.y) {
            return Err(Error::InvalidRecord {
                index,
                field: "y",
                reason: format!("outcome {} out of [0,1]", r.y),
            });
        }
        if let Some(x) = &r.x {
            if let Some((j, v)) = x.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidRecord {
                    index,
                    field: "x",
                    reason: format!("covariate {} = {v} out of [0,1]", j + 1),
                });
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    CustomIpw,
    CustomDm,
    Ols,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::CustomIpw => "custom_ipw",
            Method::CustomDm => "custom_dm",
            Method::Ols => "ols",
        }
    }
}

/// Point estimate, plug-in variance and central interval for the PATE.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub method: Method,
    pub estimate: f64,
    /// Plug-in estimate of the asymptotic variance of `sqrt(n) * estimate`.
    pub sigma_hat: f64,
    pub std_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub alpha: f64,
    pub clamped_point: bool,
    pub clamped_lower: bool,
    pub clamped_upper: bool,
    pub n: usize,
}
