//! Seeded, reproducible random number generation.
//!
//! One fixed generator (ChaCha8) behind a small API, so every stochastic
//! choice in the engine — weight init, shuffling, subset selection, noise —
//! is reproducible from a `u64` seed across platforms and runs.

use super::{Mat, Scalar};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Deterministic random source seeded from a `u64`.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    rng: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// The seed this generator was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent substream `k` of the same seed.
    ///
    /// Streams with different `k` never overlap; deriving the same `k` twice
    /// gives the same stream. Used for e.g. per-epoch shuffles.
    pub fn derive(&self, k: u64) -> SeededRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k);
        SeededRng {
            seed: self.seed,
            rng,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform integer in `[0, n)`, rejection-sampled so it is unbiased.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below: n must be positive");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal draw (Ziggurat).
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Normal draw with standard deviation `sigma`.
    pub fn gaussian<T: Scalar>(&mut self, sigma: f64) -> T {
        T::from64(self.standard_normal() * sigma)
    }

    /// Matrix of independent `N(0, sigma^2)` entries, filled row-major.
    pub fn gaussian_mat<T: Scalar>(&mut self, rows: usize, cols: usize, sigma: f64) -> Mat<T> {
        let mut m = Mat::zeros(rows, cols);
        for v in m.as_mut_slice() {
            *v = self.gaussian(sigma);
        }
        m
    }

    /// Vector of independent `U[0, 1)` entries.
    pub fn uniform_vec<T: Scalar>(&mut self, n: usize) -> Vec<T> {
        (0..n).map(|_| T::from64(self.uniform())).collect()
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<E>(&mut self, items: &mut [E]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}
