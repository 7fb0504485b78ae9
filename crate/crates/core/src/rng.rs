//! Seeded random source shared by the dataset generators and the sampler.
//!
//! The stream is xoshiro256++ seeded through SplitMix64, so a `u64` seed
//! reproduces the same draws on every platform. Gaussian variates come from
//! the Box–Muller transform rather than a table-based method so that the
//! normal stream is a fixed function of the uniform stream.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

#[derive(Clone, Debug)]
pub struct EfsRng {
    inner: Xoshiro256PlusPlus,
    spare_normal: Option<f64>,
}

impl EfsRng {
    pub fn new(seed: u64) -> Self {
        EfsRng {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1]; safe to take the logarithm of.
    fn uniform_open0(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. Uses rejection to avoid modulo bias.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index() needs a non-empty range");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.inner.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal via Box–Muller; the second variate of each pair is cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

/// Derives the seed of stream `index` from a master seed.
///
/// Each derived seed is the output of a SplitMix64 generator keyed on both
/// values, so neighbouring indices give unrelated streams.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut mix = SplitMix64::seed_from_u64(master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    mix.next_u64();
    mix.next_u64()
}
