//! Truncated normal distribution on `[lo, hi]`.

use crate::rng::RandomSource;
use crate::special::{normal_cdf, normal_interval_mass, normal_pdf, normal_quantile_approx, normal_sf, LN_SQRT_2PI};

/// Standardized bound beyond which the inverse CDF loses too much
/// precision and the sampler switches to rejection.
const TAIL: f64 = 8.0;

/// N(mu, sigma^2) restricted to `[lo, hi]` (`hi` may be infinite), with
/// the normalizing quantities computed once for repeated use.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncNormal {
    mu: f64,
    sigma: f64,
    inv_sigma: f64,
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
    /// CDF (or survival function when `upper`) at the standardized bounds.
    fa: f64,
    fb: f64,
    upper: bool,
    /// `ln(sigma * sqrt(2 pi) * mass)`.
    ln_norm: f64,
}

impl TruncNormal {
    pub fn new(mu: f64, sigma: f64, lo: f64, hi: f64) -> Self {
        let a = (lo - mu) / sigma;
        let b = (hi - mu) / sigma;
        let upper = a >= 0.0;
        let (fa, fb) = if upper {
            (normal_sf(a), normal_sf(b))
        } else {
            (normal_cdf(a), normal_cdf(b))
        };
        let mass = normal_interval_mass(a, b);
        Self {
            mu,
            sigma,
            inv_sigma: sigma.recip(),
            lo,
            hi,
            a,
            b,
            fa,
            fb,
            upper,
            ln_norm: sigma.ln() + LN_SQRT_2PI + mass.ln(),
        }
    }

    pub fn sample(&self, rng: &mut RandomSource) -> f64 {
        let (a, b) = (self.a, self.b);
        let z = if a > TAIL {
            tail_sample(rng, a, b)
        } else if b < -TAIL {
            -tail_sample(rng, -b, -a)
        } else {
            let u = rng.uniform();
            let t = self.fa + u * (self.fb - self.fa);
            let z = if self.upper { -normal_quantile_approx(t) } else { normal_quantile_approx(t) };
            z.clamp(a, b)
        };
        (self.mu + self.sigma * z).clamp(self.lo, self.hi)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(self.lo..=self.hi).contains(&x) {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.mu) * self.inv_sigma;
        -0.5 * z * z - self.ln_norm
    }

    /// Log density at `x` without the support check, for values known to
    /// lie in `[lo, hi]`.
    #[inline]
    pub fn ln_pdf_inside(&self, x: f64) -> f64 {
        let z = (x - self.mu) * self.inv_sigma;
        -0.5 * z * z - self.ln_norm
    }
}

/// Draws from N(mu, sigma^2) restricted to `[lo, hi]` (`hi` may be infinite).
pub fn sample(rng: &mut RandomSource, mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    TruncNormal::new(mu, sigma, lo, hi).sample(rng)
}

// Standard normal restricted to [a, b] with a > 0, by rejection: a uniform
// proposal when the interval is short relative to the tail decay,
// otherwise a translated exponential proposal.
fn tail_sample(rng: &mut RandomSource, a: f64, b: f64) -> f64 {
    if (b - a) * a <= 1.0 {
        loop {
            let z = a + (b - a) * rng.uniform();
            if rng.uniform().ln() <= 0.5 * (a * a - z * z) {
                return z;
            }
        }
    }
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let z = a - rng.uniform().ln() / lambda;
        if z > b {
            continue;
        }
        if rng.uniform().ln() <= -0.5 * (z - lambda).powi(2) {
            return z;
        }
    }
}

/// Log of the normalizing mass and standardized bounds.
fn standardize(mu: f64, sigma: f64, lo: f64, hi: f64) -> (f64, f64, f64) {
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    (a, b, normal_interval_mass(a, b))
}

pub fn ln_pdf(x: f64, mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    TruncNormal::new(mu, sigma, lo, hi).ln_pdf(x)
}

pub fn mean(mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let (a, b, mass) = standardize(mu, sigma, lo, hi);
    let pa = if a.is_finite() { normal_pdf(a) } else { 0.0 };
    let pb = if b.is_finite() { normal_pdf(b) } else { 0.0 };
    (mu + sigma * (pa - pb) / mass).clamp(lo, hi)
}

pub fn variance(mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let (a, b, mass) = standardize(mu, sigma, lo, hi);
    let (pa, apa) = if a.is_finite() { (normal_pdf(a), a * normal_pdf(a)) } else { (0.0, 0.0) };
    let (pb, bpb) = if b.is_finite() { (normal_pdf(b), b * normal_pdf(b)) } else { (0.0, 0.0) };
    let r = (pa - pb) / mass;
    sigma * sigma * (1.0 + (apa - bpb) / mass - r * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    // Midpoint-rule moments of the truncated density as an independent oracle.
    fn quadrature(mu: f64, sigma: f64, lo: f64, hi: f64) -> (f64, f64) {
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let x = lo + (i as f64 + 0.5) * h;
            let d = (-0.5 * ((x - mu) / sigma).powi(2)).exp();
            z += d;
            m1 += x * d;
            m2 += x * x * d;
        }
        let m = m1 / z;
        (m, m2 / z - m * m)
    }

    #[test]
    fn mean_reference_values() {
        assert!((mean(0.5, 1.0, 0.0, 1.0) - 0.5).abs() < 1e-15);
        let expected = (normal_pdf(0.0) - normal_pdf(1.0)) / (normal_cdf(1.0) - normal_cdf(0.0));
        assert!((mean(0.0, 1.0, 0.0, 1.0) - expected).abs() < 1e-14);
        assert!((mean(0.0, 1.0, 0.0, 1.0) - 0.459_86).abs() < 1e-5);
        for &(mu, s) in &[(0.0, 1.0), (0.2, 0.1), (0.9, 0.3), (0.5, 3.0), (0.05, 0.01)] {
            let (qm, qv) = quadrature(mu, s, 0.0, 1.0);
            assert!((mean(mu, s, 0.0, 1.0) - qm).abs() < 1e-8, "mu={mu} s={s}");
            assert!((variance(mu, s, 0.0, 1.0) - qv).abs() < 1e-8, "mu={mu} s={s}");
        }
    }

    #[test]
    fn point_mass_limit() {
        assert!((mean(0.3, 1e-9, 0.0, 1.0) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn density_integrates_to_one() {
        let (mu, s) = (0.8, 0.4);
        let n = 100_000;
        let h = 1.0 / n as f64;
        let total: f64 = (0..n).map(|i| ln_pdf((i as f64 + 0.5) * h, mu, s, 0.0, 1.0).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-8);
        assert_eq!(ln_pdf(1.5, mu, s, 0.0, 1.0), f64::NEG_INFINITY);
    }

    fn check_samples(mu: f64, s: f64, lo: f64, hi: f64, stream: u64) {
        let mut rng = derive_stream(11, stream);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample(&mut rng, mu, s, lo, hi)).collect();
        assert!(xs.iter().all(|x| (lo..=hi).contains(x)));
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = variance(mu, s, lo, hi);
        assert!(
            (m - mean(mu, s, lo, hi)).abs() < 4.0 * (v / n as f64).sqrt(),
            "mu={mu} s={s} lo={lo} hi={hi} m={m}"
        );
        let sv = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((sv / v - 1.0).abs() < 0.03, "variance {sv} vs {v}");
    }

    #[test]
    fn sampler_moments() {
        check_samples(0.5, 1.0, 0.0, 1.0, 0);
        check_samples(0.1, 0.05, 0.0, 1.0, 1);
        check_samples(0.9, 3.0, 0.0, 1.0, 2);
        // Upper and lower tails handled by rejection.
        check_samples(0.0, 0.1, 1.0, 2.0, 3);
        check_samples(1.0, 0.1, -1.0, 0.0, 4);
        check_samples(-2.0, 0.2, 0.0, 0.01, 5);
        // One-sided, as used by the concentration proposal.
        check_samples(0.3, 1.0, 0.0, f64::INFINITY, 6);
        check_samples(-9.5, 1.0, 0.0, f64::INFINITY, 7);
    }
}
