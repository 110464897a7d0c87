//! Deterministic, counter-based random streams.
//!
//! Every random decision in the crate is keyed by `(global_seed, stream
//! tag, indices...)` rather than drawn from one shared generator. A
//! SplitMix64 finalizer folds the key into a 64-bit seed for a ChaCha8
//! stream, so results are reproducible and independent of evaluation
//! order (row-level selection can be computed in any order or in
//! parallel without changing the outcome).
//!
//! Variate generation is pinned to explicit algorithms instead of a
//! platform default:
//! - uniforms use the top 53 bits of a ChaCha8 word pair,
//! - normals are `Phi^{-1}(u)` via the inverse error function,
//! - logistics are `ln(u/(1-u))`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::function::erf::erfc_inv;

/// Stream tags keep the per-purpose substreams disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Ground-truth parameter generation.
    Truth,
    /// Row `i` of a simulated pool.
    PoolRow,
    /// Bernoulli selection of row `i` within batch `b`.
    Select,
    /// Pool splitting into batches.
    Split,
    /// Cross-validation fold assignment.
    Folds,
    /// Per-replicate seeds in the benchmark harness.
    Replicate,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Truth => 0x5452_5554,
            Stream::PoolRow => 0x504f_4f4c,
            Stream::Select => 0x5345_4c45,
            Stream::Split => 0x5350_4c49,
            Stream::Folds => 0x464f_4c44,
            Stream::Replicate => 0x5245_504c,
        }
    }
}

/// SplitMix64 finalizer; statistically mixes each 64-bit input chunk.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit subseed from the global seed, a stream tag and up to
/// two indices.
pub fn subseed(seed: u64, stream: Stream, a: u64, b: u64) -> u64 {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    state ^= stream.tag();
    acc ^= splitmix64(&mut state);
    state ^= a;
    acc ^= splitmix64(&mut state);
    state ^= b;
    acc ^ splitmix64(&mut state)
}

/// A keyed ChaCha8 stream with the crate's fixed variate recipes.
pub struct KeyedRng {
    inner: ChaCha8Rng,
}

impl KeyedRng {
    pub fn new(seed: u64, stream: Stream, a: u64, b: u64) -> Self {
        KeyedRng {
            inner: ChaCha8Rng::seed_from_u64(subseed(seed, stream, a, b)),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        let bits = self.inner.next_u64() >> 11;
        // shift by half an ulp so 0 and 1 are excluded
        (bits as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Uniform integer in `[0, n)` by rejection, bias-free.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.inner.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Standard normal via the inverse CDF.
    pub fn normal(&mut self) -> f64 {
        normal_quantile(self.uniform())
    }

    /// Standard logistic via the inverse CDF.
    pub fn logistic(&mut self) -> f64 {
        let u = self.uniform();
        (u / (1.0 - u)).ln()
    }

    /// Fisher-Yates shuffle of a slice.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `[0, n)`, in sampled order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

/// Standard normal quantile, `Phi^{-1}(p) = -sqrt(2) * erfc^{-1}(2p)`.
pub fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subseed_distinguishes_all_key_parts() {
        let base = subseed(7, Stream::PoolRow, 1, 2);
        assert_ne!(base, subseed(8, Stream::PoolRow, 1, 2));
        assert_ne!(base, subseed(7, Stream::Select, 1, 2));
        assert_ne!(base, subseed(7, Stream::PoolRow, 2, 2));
        assert_ne!(base, subseed(7, Stream::PoolRow, 1, 3));
    }

    #[test]
    fn streams_are_reproducible() {
        let mut a = KeyedRng::new(42, Stream::PoolRow, 5, 0);
        let mut b = KeyedRng::new(42, Stream::PoolRow, 5, 0);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn uniform_is_in_open_interval() {
        let mut rng = KeyedRng::new(1, Stream::Truth, 0, 0);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn normal_quantile_matches_known_points() {
        assert!((normal_quantile(0.5)).abs() < 1e-12);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
        assert!((normal_quantile(0.025) + 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn normal_moments_are_sane() {
        let mut rng = KeyedRng::new(3, Stream::Truth, 0, 0);
        let n = 200_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let x = rng.normal();
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt() * 1.5);
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn sample_indices_distinct() {
        let mut rng = KeyedRng::new(9, Stream::Truth, 0, 0);
        let idx = rng.sample_indices(100, 30);
        let mut seen = std::collections::HashSet::new();
        for i in &idx {
            assert!(seen.insert(*i));
            assert!(*i < 100);
        }
        assert_eq!(idx.len(), 30);
    }
}
