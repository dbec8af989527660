//! Frequentist PATE estimators for the three release scenarios, their
//! plug-in variance estimators, and the clamping post-processor.
//!
//! All intervals are `estimate ± z_{alpha/2} * sqrt(sigma_hat / n)`, then
//! projected onto the estimand's support `[-1, 1]`.

use crate::error::{Error, Result};
use crate::mechanisms::{keep_probability, CustomARecord, CustomBRecord, JointRecord};
use crate::special::normal_quantile;
use crate::types::{check_probability, EstimateReport, Method};

/// Support of the PATE when outcomes lie in [0, 1].
pub const SUPPORT: (f64, f64) = (-1.0, 1.0);

/// Attenuation correction for randomized-response treatment labels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DebiasConstants {
    /// Keep probability of randomized response.
    pub q: f64,
    /// P(W~ = 0)
    pub rho0: f64,
    /// P(W~ = 1)
    pub rho1: f64,
    /// `rho0 rho1 / (p (1-p) (2q - 1))`
    pub c_factor: f64,
}

pub fn debias_constant(p: f64, eps_w: f64) -> Result<DebiasConstants> {
    check_probability(p)?;
    if !(eps_w > 0.0) {
        return Err(Error::InvalidBudget {
            name: "eps_w",
            value: eps_w,
        });
    }
    let q = keep_probability(eps_w);
    let rho1 = p * q + (1.0 - p) * (1.0 - q);
    let rho0 = 1.0 - rho1;
    let c_factor = rho0 * rho1 / (p * (1.0 - p) * (2.0 * q - 1.0));
    Ok(DebiasConstants {
        q,
        rho0,
        rho1,
        c_factor,
    })
}

/// Upper `alpha/2` quantile of the standard normal.
pub fn z_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    Ok(-normal_quantile(alpha / 2.0))
}

/// Projects the point estimate and both interval ends onto `[-1, 1]`,
/// flagging every value that moved.
pub fn clamp_report(r: &EstimateReport) -> EstimateReport {
    let (lo, hi) = SUPPORT;
    let project = |v: f64| v.clamp(lo, hi);
    let estimate = project(r.estimate);
    let ci_lower = project(r.ci_lower);
    let ci_upper = project(r.ci_upper);
    EstimateReport {
        estimate,
        ci_lower,
        ci_upper,
        clamped_point: r.clamped_point || estimate != r.estimate,
        clamped_lower: r.clamped_lower || ci_lower != r.ci_lower,
        clamped_upper: r.clamped_upper || ci_upper != r.ci_upper,
        ..r.clone()
    }
}

fn finish(method: Method, estimate: f64, sigma_hat: f64, n: usize, alpha: f64) -> Result<EstimateReport> {
    let z = z_quantile(alpha)?;
    let sigma_hat = sigma_hat.max(0.0);
    let std_error = (sigma_hat / n as f64).sqrt();
    let raw = EstimateReport {
        method,
        estimate,
        sigma_hat,
        std_error,
        ci_lower: estimate - z * std_error,
        ci_upper: estimate + z * std_error,
        alpha,
        clamped_point: false,
        clamped_lower: false,
        clamped_upper: false,
        n,
    };
    Ok(clamp_report(&raw))
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (sum / n as f64, n)
}

/// Per-arm moments of the privatized outcome, grouped by privatized label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupMoments {
    pub n0: usize,
    pub n1: usize,
    pub e0: f64,
    pub e1: f64,
    pub v0: f64,
    pub v1: f64,
}

impl GroupMoments {
    /// Errors when either group has fewer than two records.
    pub fn from_records(records: &[JointRecord]) -> Result<Self> {
        let group = |w: bool| -> Result<(usize, f64, f64)> {
            let ys = || records.iter().filter(move |r| r.w_tilde == w).map(|r| r.y_tilde);
            let (e, n) = mean(ys());
            if n < 2 {
                return Err(Error::DegenerateGroup {
                    group: w as u8,
                    count: n,
                    needed: 2,
                });
            }
            let v = ys().map(|y| (y - e).powi(2)).sum::<f64>() / (n - 1) as f64;
            Ok((n, e, v))
        };
        let (n0, e0, v0) = group(false)?;
        let (n1, e1, v1) = group(true)?;
        Ok(Self { n0, n1, e0, e1, v0, v1 })
    }
}

/// Debiased IPW point estimate `C * mean(W~ Y~ / rho1 - (1 - W~) Y~ / rho0)`.
/// Needs no minimum group size.
pub fn naive_point(records: &[JointRecord], consts: &DebiasConstants) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::TooFewRecords { needed: 1, got: 0 });
    }
    let (m, _) = mean(records.iter().map(|r| {
        if r.w_tilde {
            r.y_tilde / consts.rho1
        } else {
            -r.y_tilde / consts.rho0
        }
    }));
    Ok(consts.c_factor * m)
}

/// Naive IPW estimator on the joint release, rescaled by the debias
/// constant so that it is unbiased for the PATE.
pub fn estimate_naive(records: &[JointRecord], p: f64, eps_w: f64, alpha: f64) -> Result<EstimateReport> {
    let consts = debias_constant(p, eps_w)?;
    let g = GroupMoments::from_records(records)?;
    let tau = naive_point(records, &consts)?;
    let DebiasConstants { rho0, rho1, c_factor: c, .. } = consts;
    let sigma = c
        * c
        * (g.v1 / rho1 + g.v0 / rho0 + rho0 / rho1 * g.e1 * g.e1 + rho1 / rho0 * g.e0 * g.e0
            + 2.0 * g.e0 * g.e1);
    finish(Method::Naive, tau, sigma, records.len(), alpha)
}

/// Mean of the privatized IPW summands, with their sample variance as the
/// plug-in asymptotic variance.
pub fn estimate_custom_ipw(records: &[CustomARecord], alpha: f64) -> Result<EstimateReport> {
    let n = records.len();
    if n < 2 {
        return Err(Error::TooFewRecords { needed: 2, got: n });
    }
    let (tau, _) = mean(records.iter().map(|r| r.a_tilde));
    let sigma = records.iter().map(|r| (r.a_tilde - tau).powi(2)).sum::<f64>() / (n - 1) as f64;
    finish(Method::CustomIpw, tau, sigma, n, alpha)
}

/// Sample moments of `(B1, B2, B3, B4)` and the gradient of
/// `h(a, b, c, d) = a/c - b/d` at the sample means.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DmMoments {
    pub e: [f64; 4],
    pub s: [[f64; 4]; 4],
    pub gradient: [f64; 4],
}

impl DmMoments {
    pub fn from_records(records: &[CustomBRecord]) -> Result<Self> {
        let n = records.len();
        if n < 2 {
            return Err(Error::TooFewRecords { needed: 2, got: n });
        }
        let row = |r: &CustomBRecord| [r.b1, r.b2, r.b3, r.b4()];
        let mut e = [0.0; 4];
        for r in records {
            for (acc, v) in e.iter_mut().zip(row(r)) {
                *acc += v;
            }
        }
        for v in &mut e {
            *v /= n as f64;
        }
        let mut s = [[0.0; 4]; 4];
        for r in records {
            let v = row(r);
            for j in 0..4 {
                for k in j..4 {
                    s[j][k] += (v[j] - e[j]) * (v[k] - e[k]);
                }
            }
        }
        for j in 0..4 {
            for k in j..4 {
                s[j][k] /= (n - 1) as f64;
                s[k][j] = s[j][k];
            }
        }
        Ok(Self {
            e,
            s,
            gradient: dm_gradient(&e),
        })
    }

    /// Delta-method variance `e' S e`.
    pub fn sigma(&self) -> f64 {
        let g = &self.gradient;
        (0..4)
            .map(|j| (0..4).map(|k| g[j] * self.s[j][k] * g[k]).sum::<f64>())
            .sum()
    }
}

/// Gradient of `a/c - b/d` with `d = 1 - c`, at means `e`.
pub fn dm_gradient(e: &[f64; 4]) -> [f64; 4] {
    let e3 = e[2];
    let r = 1.0 - e3;
    [1.0 / e3, -1.0 / r, -e[0] / (e3 * e3), e[1] / (r * r)]
}

/// Ratio (difference-in-means) estimator on the three-summand release, with
/// a delta-method interval.
pub fn estimate_custom_dm(records: &[CustomBRecord], alpha: f64) -> Result<EstimateReport> {
    let m = DmMoments::from_records(records)?;
    let (s1, s2, s3, s4) = records.iter().fold((0.0, 0.0, 0.0, 0.0), |acc, r| {
        (acc.0 + r.b1, acc.1 + r.b2, acc.2 + r.b3, acc.3 + r.b4())
    });
    if s3 == 0.0 {
        return Err(Error::DegenerateDenominator("sum of b3"));
    }
    if s4 == 0.0 {
        return Err(Error::DegenerateDenominator("sum of b4"));
    }
    let tau = s1 / s3 - s2 / s4;
    finish(Method::CustomDm, tau, m.sigma(), records.len(), alpha)
}

/// Least-squares fit of `y` on an intercept plus covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    /// Mean squared residual, divisor `n`.
    pub mse: f64,
    pub n: usize,
}

/// Relative pivot tolerance for the Cholesky factorization.
const PIVOT_TOL: f64 = 1e-12;

/// Fits `y ~ 1 + x` by the normal equations on group-centred covariates,
/// solved with a Cholesky factorization. `group` only labels the error.
pub fn fit_group(xs: &[&[f64]], ys: &[f64], group: u8) -> Result<GroupFit> {
    let n = ys.len();
    let d = xs.first().map_or(0, |x| x.len());
    if n < d + 1 {
        return Err(Error::DegenerateGroup {
            group,
            count: n,
            needed: d + 1,
        });
    }
    let nf = n as f64;
    let y_bar = ys.iter().sum::<f64>() / nf;
    let mut x_bar = vec![0.0; d];
    for x in xs {
        for (m, v) in x_bar.iter_mut().zip(x.iter()) {
            *m += v / nf;
        }
    }
    // Centred cross-products.
    let mut sxx = vec![vec![0.0; d]; d];
    let mut sxy = vec![0.0; d];
    for (x, &y) in xs.iter().zip(ys) {
        let yc = y - y_bar;
        for j in 0..d {
            let xj = x[j] - x_bar[j];
            sxy[j] += xj * yc;
            for k in 0..=j {
                sxx[j][k] += xj * (x[k] - x_bar[k]);
            }
        }
    }
    let slopes = cholesky_solve(sxx, sxy).ok_or(Error::SingularDesign(group))?;
    let intercept = y_bar - x_bar.iter().zip(&slopes).map(|(m, b)| m * b).sum::<f64>();
    let mse = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let fitted = intercept + x.iter().zip(&slopes).map(|(v, b)| v * b).sum::<f64>();
            (y - fitted).powi(2)
        })
        .sum::<f64>()
        / nf;
    Ok(GroupFit {
        intercept,
        slopes,
        mse,
        n,
    })
}

/// Solves `A b = r` for symmetric positive-definite `A`, of which only the
/// lower triangle is read. Returns `None` when a pivot falls below
/// `PIVOT_TOL` times the largest diagonal entry.
fn cholesky_solve(mut a: Vec<Vec<f64>>, mut r: Vec<f64>) -> Option<Vec<f64>> {
    let d = r.len();
    let scale = (0..d).map(|j| a[j][j]).fold(0.0, f64::max);
    if d > 0 && !(scale > 0.0) {
        return None;
    }
    for j in 0..d {
        let pivot = a[j][j] - (0..j).map(|k| a[j][k] * a[j][k]).sum::<f64>();
        if !(pivot > PIVOT_TOL * scale) {
            return None;
        }
        let l_jj = pivot.sqrt();
        a[j][j] = l_jj;
        for i in j + 1..d {
            let dot = (0..j).map(|k| a[i][k] * a[j][k]).sum::<f64>();
            a[i][j] = (a[i][j] - dot) / l_jj;
        }
    }
    // L z = r, then L' b = z.
    for i in 0..d {
        let dot = (0..i).map(|k| a[i][k] * r[k]).sum::<f64>();
        r[i] = (r[i] - dot) / a[i][i];
    }
    for i in (0..d).rev() {
        let dot = (i + 1..d).map(|k| a[k][i] * r[k]).sum::<f64>();
        r[i] = (r[i] - dot) / a[i][i];
    }
    Some(r)
}

/// Per-arm fits, overall covariate mean and the resulting debiased point
/// estimate of the regression-adjusted estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit {
    pub control: GroupFit,
    pub treated: GroupFit,
    pub x_bar: Vec<f64>,
    pub estimate: f64,
}

/// Fits both arms and forms `C (a1 - a0 + x_bar (b1 - b0))`. `min_group`
/// is the smallest group size accepted.
pub fn ols_fit(records: &[JointRecord], consts: &DebiasConstants, min_group: Option<usize>) -> Result<OlsFit> {
    let d = match records.first().and_then(|r| r.x_tilde.as_ref()) {
        Some(x) if !x.is_empty() => x.len(),
        _ => return Err(Error::MissingCovariates),
    };
    let mut x_bar = vec![0.0; d];
    for (index, r) in records.iter().enumerate() {
        let x = r.x_tilde.as_ref().ok_or(Error::MissingCovariates)?;
        if x.len() != d {
            return Err(Error::RaggedCovariates {
                index,
                expected: d,
                got: x.len(),
            });
        }
        for (m, v) in x_bar.iter_mut().zip(x) {
            *m += v;
        }
    }
    for m in &mut x_bar {
        *m /= records.len() as f64;
    }
    let needed = min_group.unwrap_or(d + 1);
    let fit = |w: bool| -> Result<GroupFit> {
        let members: Vec<&JointRecord> = records.iter().filter(|r| r.w_tilde == w).collect();
        if members.len() < needed {
            return Err(Error::DegenerateGroup {
                group: w as u8,
                count: members.len(),
                needed,
            });
        }
        let xs: Vec<&[f64]> = members.iter().map(|r| r.x_tilde.as_deref().unwrap()).collect();
        let ys: Vec<f64> = members.iter().map(|r| r.y_tilde).collect();
        fit_group(&xs, &ys, w as u8)
    };
    let control = fit(false)?;
    let treated = fit(true)?;
    let adjustment: f64 = x_bar
        .iter()
        .zip(treated.slopes.iter().zip(&control.slopes))
        .map(|(m, (b1, b0))| m * (b1 - b0))
        .sum();
    let estimate = consts.c_factor * (treated.intercept - control.intercept + adjustment);
    Ok(OlsFit {
        control,
        treated,
        x_bar,
        estimate,
    })
}

/// Regression-adjusted estimator on the joint release with privatized
/// covariates. Each privatized arm needs at least `d + 2` records.
pub fn estimate_ols(records: &[JointRecord], p: f64, eps_w: f64, alpha: f64) -> Result<EstimateReport> {
    let consts = debias_constant(p, eps_w)?;
    let d = records
        .first()
        .and_then(|r| r.x_tilde.as_ref())
        .map_or(0, Vec::len);
    let fit = ols_fit(records, &consts, Some(d + 2))?;
    let c = consts.c_factor;
    let sigma = c * c * (fit.treated.mse / consts.rho1 + fit.control.mse / consts.rho0);
    finish(Method::Ols, fit.estimate, sigma, records.len(), alpha)
}
