//! Deterministic, portable randomness.
//!
//! Every client must derive bit-identical permutations and masking matrices
//! from the jointly agreed seed, independently of platform or build. The
//! contract is therefore fixed down to the bit: SplitMix64 for the raw
//! stream, `(x >> 11) * 2^-53` for uniforms, the cosine branch of Box-Muller
//! for Gaussians and a descending Fisher-Yates shuffle with a modulo-drawn
//! swap index for permutations.
//!
//! This stream is *not* suitable for protocol secrets. Keys, encryption
//! randomness and noise matrices use a cryptographic generator instead.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 state.
///
/// The stream is a plain value: cloning it forks an identical sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    state: u64,
}

impl RngStream {
    pub const fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Stream for the `index`-th independent consumer of `seed`, e.g. one per tree.
    pub fn derive(seed: u64, index: u64) -> Self {
        let mut base = Self::new(seed ^ index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
        Self::new(base.next_u64())
    }

    pub const fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.uniform01();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Index in `[0, bound)` by reduction modulo `bound`.
    ///
    /// # Panics
    ///
    /// Panics if `bound` is zero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        self.next_u64() % bound
    }

    /// Standard normal sample from two uniforms (cosine branch only).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform01();
        let u2 = self.uniform01();
        // 1 - u1 lies in (0, 1], keeping the logarithm finite.
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    pub fn gaussian(&mut self, mu: f64, sigma: f64) -> Result<f64> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("gaussian sigma must be finite and >= 0, got {sigma}")));
        }
        let z = self.standard_normal();
        if sigma == 0.0 {
            return Ok(mu);
        }
        Ok(mu + sigma * z)
    }

    /// In-place Fisher-Yates shuffle, walking indices downwards.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// The seeded permutation of `0..n` every client computes from the shared seed.
pub fn permutation(n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::invalid("permutation size must be at least 1"));
    }
    let mut items: Vec<usize> = (0..n).collect();
    RngStream::new(seed).shuffle(&mut items);
    Ok(items)
}
