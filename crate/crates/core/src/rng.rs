//! Seedable, splittable random source.
//!
//! A [`RandomSource`] is identified by `(seed, stream)`. Both halves feed a
//! ChaCha8 keystream: the seed selects the key and the stream index selects
//! the ChaCha stream (nonce), so distinct indices under one seed address
//! non-overlapping keystreams. Work item `i` of any parallel loop owns
//! `fork(i)` and never shares a generator with another item, which is what
//! makes results independent of thread scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

/// Returns the generator for stream `index` under `seed`.
pub fn derive_stream(seed: u64, index: u64) -> RandomSource {
    RandomSource::new(seed, index)
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Child generator number `index`. Depends only on `(seed, stream,
    /// index)`, never on how many draws were taken from `self`.
    pub fn fork(&self, index: u64) -> RandomSource {
        RandomSource::new(mix(self.seed, self.stream), index)
    }

    /// Uniform draw on the open interval (0, 1), 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&mut self, prob: f64) -> bool {
        self.uniform() < prob
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

// SplitMix64 finalizer applied to a combination of both words.
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).rotate_left(29);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first_draws(mut rng: RandomSource, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.uniform()).collect()
    }

    #[test]
    fn same_seed_and_stream_repeat() {
        let a = first_draws(derive_stream(42, 0), 100);
        let b = first_draws(derive_stream(42, 0), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_streams_differ() {
        let a = first_draws(derive_stream(42, 0), 100);
        let b = first_draws(derive_stream(42, 1), 100);
        assert_ne!(a[0], b[0]);
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
    }

    #[test]
    fn uniform_range() {
        let draws = first_draws(derive_stream(42, 7), 100_000);
        assert!(draws.iter().all(|&u| (0.0..1.0).contains(&u) && u > 0.0));
    }

    #[test]
    fn fork_ignores_parent_position() {
        let parent = derive_stream(9, 3);
        let mut advanced = parent.clone();
        for _ in 0..17 {
            advanced.uniform();
        }
        assert_eq!(
            first_draws(parent.fork(5), 10),
            first_draws(advanced.fork(5), 10)
        );
        assert_ne!(
            first_draws(parent.fork(5), 10),
            first_draws(parent.fork(6), 10)
        );
    }

    #[test]
    fn streams_look_independent() {
        // Correlation of paired draws from neighbouring streams should be
        // within a few standard errors (1/sqrt(n)) of zero.
        let n = 200_000;
        let a = first_draws(derive_stream(1, 10), n);
        let b = first_draws(derive_stream(1, 11), n);
        let (ma, mb) = (0.5, 0.5);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n as f64;
        let corr = cov * 12.0;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr = {corr}");
    }
}
