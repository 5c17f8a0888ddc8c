//! Seeded randomness.
//!
//! Every generator in the crate is a ChaCha8 stream keyed by a 64-bit seed.
//! ChaCha output is specified bit-for-bit, so a seed yields the same stream
//! on every platform.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Portable seeded generator.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent child stream for `(seed, stream)`. Used to give each
    /// block or shard its own generator so work can run in any order.
    pub fn derived(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[0, upper)`.
    pub fn below(&mut self, upper: usize) -> usize {
        self.inner.random_range(0..upper)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Gamma(shape, 1) sample. `shape` must be positive.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        Gamma::new(shape, 1.0)
            .expect("gamma shape must be positive and finite")
            .sample(&mut self.inner)
    }

    /// Symmetric Dirichlet draw of dimension `dim`.
    pub fn dirichlet(&mut self, dim: usize, alpha: f64) -> Vec<f64> {
        let mut draws: Vec<f64> = (0..dim).map(|_| self.gamma(alpha)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            for d in &mut draws {
                *d /= total;
            }
        } else {
            draws.fill(1.0 / dim as f64);
        }
        draws
    }

    /// Uniformly random `k`-subset of `0..n` via a partial Fisher-Yates
    /// shuffle of `scratch`, which must hold a permutation of `0..n`.
    pub fn k_subset<'a>(&mut self, scratch: &'a mut [usize], k: usize) -> &'a [usize] {
        let n = scratch.len();
        for i in 0..k {
            let j = i + self.below(n - i);
            scratch.swap(i, j);
        }
        &scratch[..k]
    }
}
