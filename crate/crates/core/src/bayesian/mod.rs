//! Dirichlet-process-mixture data-augmentation sampler for the PATE.
//!
//! The potential outcomes of every unit are modelled as a truncated stick
//! breaking mixture of per-arm truncated normals on `[0, 1]`. A blocked
//! Gibbs sweep imputes assignments and potential outcomes from the
//! privatized releases, then updates labels, sticks, the concentration and
//! the component parameters. The PATE draw is a functional of the mixture.

mod model;
mod steps;
pub mod truncnorm;

pub use model::{DpmState, GibbsConfig, Likelihood, Observed, PosteriorSummary};
pub use steps::{
    location_conditional, pate_draw, sample_effect, step_assign_clusters, step_assign_w, step_impute_outcomes,
    step_update_components, step_update_p, step_update_sticks_and_alpha,
};

use crate::error::Result;
use crate::rng::RandomSource;

/// Draws, diagnostics and summary of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    /// PATE draw after every post-burn-in sweep.
    pub draws: Vec<f64>,
    /// Average imputed unit effect after every post-burn-in sweep.
    pub sample_effects: Vec<f64>,
    pub summary: PosteriorSummary,
    /// Largest number of occupied components seen in any post-burn-in sweep.
    /// The uniform starting labels occupy every component, so burn-in is
    /// excluded from the truncation check.
    pub max_occupied: usize,
    pub warnings: Vec<String>,
}

/// Runs a single chain of `config.iterations` sweeps.
pub fn run_chain(obs: &Observed<'_>, config: &GibbsConfig) -> Result<ChainOutput> {
    config.validate()?;
    let lik = Likelihood::new(obs)?;
    let mut rng = config.rng();
    let mut state = initial_state(&lik, config, &mut rng);
    let infer_p = obs.known_p().is_none();

    let kept = config.iterations - config.burn_in;
    let mut draws = Vec::with_capacity(kept);
    let mut sample_effects = Vec::with_capacity(kept);
    let (mut accepted, mut proposals) = (0usize, 0usize);
    let mut max_occupied = 0;
    for sweep in 0..config.iterations {
        if infer_p {
            step_update_p(&mut state, obs, &mut rng)?;
        }
        step_assign_w(&mut state, &lik, &mut rng);
        let acc = step_impute_outcomes(&mut state, &lik, &mut rng);
        step_assign_clusters(&mut state, &mut rng);
        step_update_sticks_and_alpha(&mut state, config, &mut rng);
        step_update_components(&mut state, config, &mut rng);

        if sweep >= config.burn_in {
            max_occupied = max_occupied.max(state.occupied());
            accepted += acc;
            proposals += state.n();
            draws.push(pate_draw(&state));
            sample_effects.push(sample_effect(&state));
        }
    }

    let mut warnings = Vec::new();
    if max_occupied >= config.k {
        let msg = format!(
            "all {} mixture components were occupied in at least one post-burn-in sweep; rerun with a larger truncation level",
            config.k
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let summary = summarize(&draws, config.ci_alpha, accepted as f64 / proposals.max(1) as f64);
    Ok(ChainOutput {
        draws,
        sample_effects,
        summary,
        max_occupied,
        warnings,
    })
}

fn initial_state(lik: &Likelihood<'_>, config: &GibbsConfig, rng: &mut RandomSource) -> DpmState {
    let obs = lik.observed();
    let n = obs.n();
    let mut state = DpmState::blank(n, config);
    if let Some(p) = obs.known_p() {
        state.p_est = p;
    }
    for i in 0..n {
        let w = match obs {
            Observed::Joint { records, .. } => records[i].w_tilde,
            _ => rng.bernoulli(0.5),
        };
        state.w[i] = w;
        state.set_y(i, w, lik.outcome_guess(i, w).clamp(0.001, 0.999));
        state.set_y(i, !w, 0.5);
        state.c[i] = rng.index(config.k);
    }
    step_update_components(&mut state, config, rng);
    state
}

/// Mean and central `(alpha/2, 1 - alpha/2)` empirical quantiles.
pub fn summarize(draws: &[f64], alpha: f64, mh_acceptance_rate: f64) -> PosteriorSummary {
    let n = draws.len();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    PosteriorSummary {
        mean,
        ci_lower: quantile_sorted(&sorted, alpha / 2.0),
        ci_upper: quantile_sorted(&sorted, 1.0 - alpha / 2.0),
        n_draws: n,
        mh_acceptance_rate,
    }
}

/// Linear interpolation between order statistics (the common "type 7"
/// definition).
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{CustomARecord, JointRecord};
    use crate::rng::derive_stream;

    fn joint_records(n: usize, seed: u64) -> Vec<JointRecord> {
        let mut rng = derive_stream(seed, 0);
        (0..n)
            .map(|_| {
                let w = rng.bernoulli(0.5);
                let y = if w { 0.6 } else { 0.4 } + 0.2 * (rng.uniform() - 0.5);
                JointRecord {
                    y_tilde: y,
                    w_tilde: w,
                    x_tilde: None,
                }
            })
            .collect()
    }

    fn small_config() -> GibbsConfig {
        GibbsConfig {
            k: 8,
            iterations: 300,
            burn_in: 100,
            seed: 5,
            ..GibbsConfig::default()
        }
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&s, 0.125), 1.5);
        assert_eq!(quantile_sorted(&s, 1.0), 5.0);
        let summary = summarize(&[3.0, 1.0, 2.0], 0.5, 0.4);
        assert_eq!((summary.mean, summary.ci_lower, summary.ci_upper), (2.0, 1.5, 2.5));
        assert_eq!(summary.n_draws, 3);
    }

    #[test]
    fn config_validation() {
        assert!(GibbsConfig::default().validate().is_ok());
        let bad = [
            GibbsConfig { k: 1, ..GibbsConfig::default() },
            GibbsConfig { burn_in: 5000, ..GibbsConfig::default() },
            GibbsConfig { b0: 0.0, ..GibbsConfig::default() },
            GibbsConfig { ci_alpha: 1.0, ..GibbsConfig::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let recs = joint_records(60, 1);
        let obs = Observed::Joint { records: &recs, p: 0.5, eps_y: 1.0, eps_w: 1.0 };
        let a = run_chain(&obs, &small_config()).unwrap();
        let b = run_chain(&obs, &small_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.draws.len(), 200);
        let c = run_chain(&obs, &GibbsConfig { seed: 6, ..small_config() }).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn invariants_hold_every_sweep() {
        let recs = joint_records(80, 2);
        let obs = Observed::Joint { records: &recs, p: 0.5, eps_y: 0.5, eps_w: 0.5 };
        let config = small_config();
        let lik = Likelihood::new(&obs).unwrap();
        let mut rng = config.rng();
        let mut state = initial_state(&lik, &config, &mut rng);
        for _ in 0..200 {
            step_assign_w(&mut state, &lik, &mut rng);
            step_impute_outcomes(&mut state, &lik, &mut rng);
            step_assign_clusters(&mut state, &mut rng);
            step_update_sticks_and_alpha(&mut state, &config, &mut rng);
            step_update_components(&mut state, &config, &mut rng);
            assert!(state.y0.iter().chain(&state.y1).all(|y| (0.0..=1.0).contains(y)));
            assert!((state.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(*state.sticks.last().unwrap(), 1.0);
            assert!(state.dp_alpha > 0.0);
            assert!(state.mu.iter().flatten().all(|m| (0.0..=1.0).contains(m)));
            assert!(state.sigma2.iter().flatten().all(|&s| s > 0.0));
        }
    }

    #[test]
    fn acceptance_rate_respects_privacy_bound() {
        let recs = joint_records(200, 3);
        let eps_y = 1.0;
        let obs = Observed::Joint { records: &recs, p: 0.5, eps_y, eps_w: 1.0 };
        let out = run_chain(&obs, &GibbsConfig { iterations: 150, burn_in: 50, ..small_config() }).unwrap();
        // 200 units x 100 sweeps = 2e4 proposals.
        assert!(out.summary.mh_acceptance_rate >= (-eps_y).exp() - 0.01);
    }

    #[test]
    fn truncation_warning_when_all_components_used() {
        let recs = joint_records(50, 4);
        let obs = Observed::Joint { records: &recs, p: 0.5, eps_y: 1.0, eps_w: 1.0 };
        let out = run_chain(&obs, &GibbsConfig { k: 2, iterations: 20, burn_in: 10, ..small_config() }).unwrap();
        assert_eq!(out.max_occupied, 2);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn custom_scenarios_run() {
        let a: Vec<CustomARecord> = (0..40).map(|i| CustomARecord { a_tilde: (i % 5) as f64 * 0.3 - 0.5 }).collect();
        let obs = Observed::CustomA { records: &a, p: 0.5, eps_a: 1.0 };
        let out = run_chain(&obs, &small_config()).unwrap();
        assert!(out.summary.ci_lower <= out.summary.ci_upper);
        assert!(out.draws.iter().all(|d| (-1.0..=1.0).contains(d)));
    }

    #[test]
    fn empty_release_rejected() {
        let recs: Vec<JointRecord> = Vec::new();
        let obs = Observed::Joint { records: &recs, p: 0.5, eps_y: 1.0, eps_w: 1.0 };
        assert!(run_chain(&obs, &small_config()).is_err());
    }
}
