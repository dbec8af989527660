//! Gamma-family variates on top of [`RandomSource`].

use rand_distr::{Distribution, Gamma};

use crate::rng::RandomSource;
use crate::special::log_sum_exp;

/// Gamma(shape, rate) draw. Panics on nonpositive or non-finite parameters.
pub fn gamma(rng: &mut RandomSource, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters must be positive and finite")
        .sample(rng)
}

/// Log of a Gamma(shape, 1) draw. Small shapes go through the
/// `G(a) = G(a + 1) U^(1/a)` identity in log space so the result stays
/// finite where the variate itself would underflow.
pub fn ln_gamma_variate(rng: &mut RandomSource, shape: f64) -> f64 {
    if shape < 1.0 {
        let g = gamma(rng, shape + 1.0, 1.0);
        g.ln() + rng.uniform().ln() / shape
    } else {
        gamma(rng, shape, 1.0).ln()
    }
}

/// `(ln X, ln(1 - X))` for `X ~ Beta(a, b)`.
pub fn ln_beta_pair(rng: &mut RandomSource, a: f64, b: f64) -> (f64, f64) {
    let la = ln_gamma_variate(rng, a);
    let lb = ln_gamma_variate(rng, b);
    let total = log_sum_exp(&[la, lb]);
    (la - total, lb - total)
}

pub fn beta(rng: &mut RandomSource, a: f64, b: f64) -> f64 {
    ln_beta_pair(rng, a, b).0.exp()
}

/// Inverse-gamma draw with density proportional to `x^(-shape-1) exp(-scale/x)`.
pub fn inv_gamma(rng: &mut RandomSource, shape: f64, scale: f64) -> f64 {
    1.0 / gamma(rng, shape, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn beta_moments() {
        let mut rng = derive_stream(3, 0);
        let (a, b) = (5.0, 7.0);
        let xs: Vec<f64> = (0..200_000).map(|_| beta(&mut rng, a, b)).collect();
        let (m, v) = moments(&xs);
        let mean = a / (a + b);
        let var = a * b / ((a + b).powi(2) * (a + b + 1.0));
        assert!((m - mean).abs() < 4.0 * (var / xs.len() as f64).sqrt());
        assert!((v / var - 1.0).abs() < 0.02);
    }

    #[test]
    fn ln_pair_is_consistent_for_tiny_shapes() {
        let mut rng = derive_stream(3, 1);
        for _ in 0..10_000 {
            let (l, l1) = ln_beta_pair(&mut rng, 1.0, 0.005);
            assert!(l.is_finite() && l1.is_finite());
            assert!(l <= 0.0 && l1 <= 0.0);
            assert!((l.exp() + l1.exp() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn small_shape_gamma_mean() {
        // E[G] = shape for Gamma(shape, 1).
        let mut rng = derive_stream(3, 2);
        let shape = 0.3;
        let n = 200_000;
        let m = (0..n).map(|_| ln_gamma_variate(&mut rng, shape).exp()).sum::<f64>() / n as f64;
        assert!((m - shape).abs() < 4.0 * (shape / n as f64).sqrt());
    }

    #[test]
    fn inverse_gamma_precision_mean() {
        // 1/X ~ Gamma(shape, rate = scale), mean shape/scale.
        let mut rng = derive_stream(3, 3);
        let n = 200_000;
        let m = (0..n).map(|_| 1.0 / inv_gamma(&mut rng, 2.0, 0.04)).sum::<f64>() / n as f64;
        let sd = (2.0f64).sqrt() / 0.04;
        assert!((m - 50.0).abs() < 4.0 * sd / (n as f64).sqrt());
    }
}
