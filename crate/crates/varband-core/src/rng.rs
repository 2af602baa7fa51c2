//! Deterministic, splittable random source.
//!
//! Every stochastic routine in this crate takes an explicit `SplitRng`.
//! Child generators are derived with [`SplitRng::split`] in a fixed program
//! order, so work can later be farmed out to any number of workers without
//! changing the stream each consumer sees. ChaCha8 is used as the backing
//! generator: it is fast, portable, and its output is stable across
//! platforms and releases.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct SplitRng {
    inner: ChaCha8Rng,
}

impl SplitRng {
    pub fn seed_from(seed: u64) -> Self {
        SplitRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Derives an independent child generator. The child is seeded from the
    /// parent's stream, so the sequence of `split` calls fully determines it.
    pub fn split(&mut self) -> SplitRng {
        let mut seed = [0u8; 32];
        self.inner.fill_bytes(&mut seed);
        SplitRng {
            inner: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[lo, hi]` (inclusive). The modulo bias is below
    /// `range / 2^64`, far past anything observable here.
    pub fn uniform_usize(&mut self, lo: usize, hi: usize) -> usize {
        assert!(lo <= hi, "uniform_usize bounds");
        let range = (hi - lo) as u64 + 1;
        lo + (self.next_u64() % range) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.uniform();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform();
        crate::math::sqrt(-2.0 * crate::math::ln(u1))
            * crate::math::cos(2.0 * core::f64::consts::PI * u2)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.uniform_usize(0, i);
            xs.swap(i, j);
        }
    }
}
