//! One block of the Gibbs sweep per function.

use super::model::{DpmState, GibbsConfig, Likelihood, Observed};
use super::truncnorm::{self, TruncNormal};
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::special::{ln_gamma, normal_cdf};
use crate::variates::{beta, inv_gamma, ln_beta_pair};

/// Redraws every assignment `W_i` from its full conditional: the release
/// likelihood at the imputed outcome of each arm times the assignment prior.
pub fn step_assign_w(state: &mut DpmState, lik: &Likelihood<'_>, rng: &mut RandomSource) {
    let (ln_p1, ln_p0) = (state.p_est.ln(), (-state.p_est).ln_1p());
    for i in 0..state.n() {
        let r1 = lik.ln_release(i, true, state.y1[i]) + ln_p1;
        let r0 = lik.ln_release(i, false, state.y0[i]) + ln_p0;
        state.w[i] = rng.uniform() < prob_treated(r0, r1);
    }
}

/// `r1 / (r0 + r1)` from log masses. Falls back to 1/2 if both vanish.
pub(crate) fn prob_treated(ln_r0: f64, ln_r1: f64) -> f64 {
    let m = ln_r0.max(ln_r1);
    if m == f64::NEG_INFINITY {
        return 0.5;
    }
    let (e0, e1) = ((ln_r0 - m).exp(), (ln_r1 - m).exp());
    e1 / (e0 + e1)
}

/// Truncated-normal component densities `[k][w]` of the current state.
pub(crate) fn component_laws(state: &DpmState) -> Vec<[TruncNormal; 2]> {
    state
        .mu
        .iter()
        .zip(&state.sigma2)
        .map(|(m, s)| {
            [
                TruncNormal::new(m[0], s[0].sqrt(), 0.0, 1.0),
                TruncNormal::new(m[1], s[1].sqrt(), 0.0, 1.0),
            ]
        })
        .collect()
}

/// Draws the missing potential outcome from its component and updates the
/// observed one with a privacy-aware Metropolis step whose proposal is the
/// component itself. Returns the number of accepted proposals.
pub fn step_impute_outcomes(state: &mut DpmState, lik: &Likelihood<'_>, rng: &mut RandomSource) -> usize {
    let laws = component_laws(state);
    let mut accepted = 0;
    for i in 0..state.n() {
        let law = &laws[state.c[i]];
        let w = state.w[i];

        let missing = law[!w as usize].sample(rng);
        state.set_y(i, !w, missing);

        let prev = state.y(i, w);
        let proposal = law[w as usize].sample(rng);
        let ln_ratio = lik.ln_release(i, w, proposal) - lik.ln_release(i, w, prev);
        if accept(rng, ln_ratio) {
            state.set_y(i, w, proposal);
            accepted += 1;
        }
    }
    accepted
}

fn accept(rng: &mut RandomSource, ln_ratio: f64) -> bool {
    ln_ratio >= 0.0 || rng.uniform().ln() < ln_ratio
}

/// Redraws every label `C_i` with mass proportional to
/// `u_k TN(Y_i(0); k, 0) TN(Y_i(1); k, 1)`, normalized in log space.
pub fn step_assign_clusters(state: &mut DpmState, rng: &mut RandomSource) {
    let laws = component_laws(state);
    let ln_u: Vec<f64> = state.weights.iter().map(|u| u.ln()).collect();
    let mut ln_mass = vec![0.0; state.k()];
    let mut scratch = vec![0.0; state.k()];
    for i in 0..state.n() {
        let (y0, y1) = (state.y0[i], state.y1[i]);
        for (k, law) in laws.iter().enumerate() {
            ln_mass[k] = ln_u[k] + law[0].ln_pdf_inside(y0) + law[1].ln_pdf_inside(y1);
        }
        state.c[i] = categorical_ln(rng, &ln_mass, &mut scratch);
    }
}

/// Index drawn with probability proportional to `exp(ln_mass)`; `scratch`
/// must have the same length.
pub(crate) fn categorical_ln(rng: &mut RandomSource, ln_mass: &[f64], scratch: &mut [f64]) -> usize {
    let max = ln_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return rng.index(ln_mass.len());
    }
    let mut total = 0.0;
    for (m, l) in scratch.iter_mut().zip(ln_mass) {
        let d = l - max;
        // Relative masses below 1e-17 cannot change the draw.
        *m = if d < -40.0 { 0.0 } else { d.exp() };
        total += *m;
    }
    let mut target = rng.uniform() * total;
    let mut last = 0;
    for (k, &m) in scratch.iter().enumerate() {
        if m > 0.0 {
            last = k;
            if target < m {
                return k;
            }
            target -= m;
        }
    }
    last
}

/// Conjugate stick update followed by one Metropolis step for the DP
/// concentration. Returns whether the concentration proposal was accepted.
pub fn step_update_sticks_and_alpha(state: &mut DpmState, config: &GibbsConfig, rng: &mut RandomSource) -> bool {
    let counts = state.counts();
    let k_max = state.k();
    let beyond = tail_counts(&counts);
    for k in 0..k_max - 1 {
        let (ln_u, ln_rest) = ln_beta_pair(rng, 1.0 + counts[k] as f64, state.dp_alpha + beyond[k] as f64);
        state.sticks[k] = ln_u.exp();
        state.ln_stick_rest[k] = ln_rest;
    }
    state.sticks[k_max - 1] = 1.0;
    state.ln_stick_rest[k_max - 1] = f64::NEG_INFINITY;
    state.recompose_weights();

    let current = state.dp_alpha;
    let proposal = truncnorm::sample(rng, current, config.alpha_proposal_sd, 0.0, f64::INFINITY);
    let ln_ratio = alpha_log_target(state, &counts, config, proposal) - alpha_log_target(state, &counts, config, current)
        + alpha_proposal_correction(current, proposal, config.alpha_proposal_sd);
    if accept(rng, ln_ratio) {
        state.dp_alpha = proposal;
        true
    } else {
        false
    }
}

/// `n_{>k}` for every `k`.
fn tail_counts(counts: &[usize]) -> Vec<usize> {
    let mut beyond = vec![0; counts.len()];
    let mut acc = 0;
    for k in (0..counts.len()).rev() {
        beyond[k] = acc;
        acc += counts[k];
    }
    beyond
}

/// Log of the Gamma prior on the concentration times the Beta densities of
/// the free sticks. The last stick is fixed at 1 and carries no density.
pub(crate) fn alpha_log_target(state: &DpmState, counts: &[usize], config: &GibbsConfig, alpha: f64) -> f64 {
    let (shape, rate) = config.alpha_prior;
    let beyond = tail_counts(counts);
    let mut total = (shape - 1.0) * alpha.ln() - rate * alpha;
    for k in 0..state.k() - 1 {
        let a = 1.0 + counts[k] as f64;
        let b = alpha + beyond[k] as f64;
        // An empty component has a = 1, and its stick may have underflowed.
        if counts[k] > 0 {
            total += (a - 1.0) * state.sticks[k].ln();
        }
        total += (b - 1.0) * state.ln_stick_rest[k] + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    }
    total
}

/// `ln q(current | proposal) - ln q(proposal | current)` for the normal
/// proposal truncated to `(0, inf)`; only the normalizers differ.
pub(crate) fn alpha_proposal_correction(current: f64, proposal: f64, sd: f64) -> f64 {
    normal_cdf(current / sd).ln() - normal_cdf(proposal / sd).ln()
}

/// Redraws every component's variance and location per arm from their
/// conditionals; empty components are drawn from the base measure.
pub fn step_update_components(state: &mut DpmState, config: &GibbsConfig, rng: &mut RandomSource) {
    let k_max = state.k();
    let mut n = vec![0usize; k_max];
    let mut sum = vec![[0.0f64; 2]; k_max];
    for i in 0..state.n() {
        let k = state.c[i];
        n[k] += 1;
        sum[k][0] += state.y0[i];
        sum[k][1] += state.y1[i];
    }
    let mut ss = vec![[0.0f64; 2]; k_max];
    for i in 0..state.n() {
        let k = state.c[i];
        ss[k][0] += (state.y0[i] - state.mu[k][0]).powi(2);
        ss[k][1] += (state.y1[i] - state.mu[k][1]).powi(2);
    }
    for k in 0..k_max {
        let nk = n[k] as f64;
        for w in 0..2 {
            let var = inv_gamma(rng, config.a0 + 0.5 * nk, config.b0 + 0.5 * ss[k][w]);
            let (loc, loc_var) = location_conditional(config, n[k], sum[k][w], var);
            state.sigma2[k][w] = var;
            state.mu[k][w] = truncnorm::sample(rng, loc, loc_var.sqrt(), 0.0, 1.0);
        }
    }
}

/// Location and variance of the (untruncated) normal conditional of a
/// component mean given `n` members summing to `sum` and variance `var`.
pub fn location_conditional(config: &GibbsConfig, n: usize, sum: f64, var: f64) -> (f64, f64) {
    let s0 = config.sigma0_sq;
    let denom = var + s0 * n as f64;
    ((config.mu0 * var + s0 * sum) / denom, s0 * var / denom)
}

/// Conjugate update of the assignment probability under a uniform prior.
/// Only meaningful when `p` is not released.
pub fn step_update_p(state: &mut DpmState, obs: &Observed<'_>, rng: &mut RandomSource) -> Result<()> {
    if obs.known_p().is_some() {
        return Err(Error::InvalidConfig(format!(
            "assignment probability is known in the {} scenario",
            obs.scenario()
        )));
    }
    let treated = state.w.iter().filter(|&&w| w).count();
    let control = state.n() - treated;
    state.p_est = beta(rng, 1.0 + treated as f64, 1.0 + control as f64);
    Ok(())
}

/// PATE implied by the mixture: weighted difference of truncated-normal
/// component means.
pub fn pate_draw(state: &DpmState) -> f64 {
    (0..state.k())
        .filter(|&k| state.weights[k] > 0.0)
        .map(|k| {
            let m = |w: usize| truncnorm::mean(state.mu[k][w], state.sigma2[k][w].sqrt(), 0.0, 1.0);
            state.weights[k] * (m(1) - m(0))
        })
        .sum()
}

/// Average imputed unit-level effect, a finite-sample diagnostic.
pub fn sample_effect(state: &DpmState) -> f64 {
    let n = state.n() as f64;
    state.y1.iter().zip(&state.y0).map(|(a, b)| a - b).sum::<f64>() / n
}
