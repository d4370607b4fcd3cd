//! Seeded randomness.
//!
//! Every stochastic quantity in the crate (stationary stream generation,
//! Bernoulli update gates, Poisson reuse counts) is drawn from an
//! [`RngStream`]. The draw procedures are fixed here so traces and generated
//! datasets are reproducible bit for bit:
//!
//! * the bit source is ChaCha8, keyed by four consecutive SplitMix64 outputs
//!   of the 64-bit seed;
//! * `uniform` takes the top 53 bits of one `u64` and returns
//!   `(bits + 0.5) * 2^-53`, so it lies strictly inside `(0, 1)`;
//! * `normal` uses the Marsaglia polar method, caching the second variate;
//! * `bernoulli(p)` is `uniform() < p`;
//! * `poisson(lambda)` is inversion by sequential search over the CDF.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `trial` of a run family with base seed `base`.
///
/// This is the `(trial + 1)`-th output of a SplitMix64 generator whose state
/// starts at `base`. The finalizer is a bijection and the increment is odd,
/// so distinct trials never collide for a fixed base.
pub fn derive_trial_seed(base: u64, trial: u64) -> u64 {
    splitmix64_mix(base.wrapping_add(GOLDEN_GAMMA.wrapping_mul(trial.wrapping_add(1))))
}

#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            chunk.copy_from_slice(&derive_trial_seed(seed, i as u64).to_le_bytes());
        }
        Self {
            inner: ChaCha8Rng::from_seed(key),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw strictly inside `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        let bits = self.inner.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let scale = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * scale);
                return u * scale;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Poisson draw by sequential CDF search. Intended for small means (the
    /// engine only uses means in `(0, 1]`); cost grows linearly with `lambda`.
    pub fn poisson(&mut self, lambda: f64) -> u64 {
        if lambda <= 0.0 {
            return 0;
        }
        let u = self.uniform();
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= lambda / k as f64;
            let next = cdf + p;
            // CDF stopped moving in floating point; the tail is exhausted.
            if next == cdf {
                break;
            }
            cdf = next;
        }
        k
    }
}
