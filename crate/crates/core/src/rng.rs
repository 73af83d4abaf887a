//! Seeded random streams, one per stochastic source.
//!
//! Each stream is derived from the master seed and a textual label, so
//! adding a source never perturbs the draws of another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the label bytes. Stable across platforms and toolchains.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the 64-bit seed of stream `label` under `master`.
pub fn stream_seed(master: u64, label: &str) -> u64 {
    splitmix64(splitmix64(master) ^ label_hash(label))
}

/// An independent, reproducible random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    label: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master: u64, label: impl Into<String>) -> Self {
        let label = label.into();
        let rng = ChaCha8Rng::seed_from_u64(stream_seed(master, &label));
        Self { label, rng }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Uniform on `(0, 1]`, safe as the argument of `ln`.
    pub fn open_unit(&mut self) -> f64 {
        1.0 - self.rng.gen::<f64>()
    }

    /// Uniform on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform integer on `[0, hi]`.
    pub fn uniform_inclusive(&mut self, hi: u32) -> u32 {
        self.rng.gen_range(0..=hi)
    }

    /// Exponential variate with the given mean, `-mean * ln(U)`.
    pub fn exponential(&mut self, mean: f64) -> f64 {
        -mean * self.open_unit().ln()
    }

    /// Number of steps spent in a state left with per-step probability `p`
    /// (geometric on `{1, 2, ...}`); `None` when `p == 0`.
    pub fn sojourn(&mut self, p: f64) -> Option<u64> {
        if p <= 0.0 {
            return None;
        }
        if p >= 1.0 {
            return Some(1);
        }
        let u = self.open_unit();
        let k = (u.ln() / (1.0 - p).ln()).floor();
        if !k.is_finite() || k >= (u64::MAX / 2) as f64 {
            return Some(u64::MAX / 2);
        }
        Some(k as u64 + 1)
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
