//! Pinned random streams.
//!
//! Every random draw in the crate goes through [`SeededRng`]: ChaCha20 as
//! the counter-based bit source, 53-bit uniforms, and normals by inversion
//! of the standard normal CDF. Changing any of these changes archived
//! sketches and simulated datasets, so the combination is versioned by
//! [`GENERATOR_VERSION`].

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// Recorded in every output that depends on random draws.
pub const GENERATOR_VERSION: &str = "chacha20-u53-invcdf-as241/v1";

/// Derives the `index`-th child seed of `root` (SplitMix64 finalizer over
/// the pair). Used to give every sketch, replicate and data stream its own
/// stream from a single root seed.
pub fn child_seed(root: u64, index: u64) -> u64 {
    let mut z = root ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.open01()
    }

    pub fn std_normal(&mut self) -> f64 {
        crate::special::std_normal_quantile(self.open01())
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.std_normal()
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
