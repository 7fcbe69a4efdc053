//! Seeded, platform-independent randomness for network generation and
//! simulation. All draws reduce to `next_u64` on a ChaCha stream, so a
//! fixed seed reproduces byte-identical results everywhere.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub(crate) struct Rng(ChaCha12Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha12Rng::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in [0, 1) with 53 random mantissa bits.
    pub fn f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `0..n` for `n >= 1`. The modulo bias is far below any
    /// statistical need here; determinism is the contract.
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// Uniform in `lo..=hi`.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below(hi - lo + 1)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.f64() < p
    }

    /// Uniform point on the probability simplex: sorted uniforms and their
    /// gaps, which needs no transcendental functions.
    pub fn simplex(&mut self, len: usize) -> Vec<f64> {
        if len == 1 {
            return vec![1.0];
        }
        let mut cuts: Vec<f64> = (0..len - 1).map(|_| self.f64()).collect();
        cuts.sort_by(f64::total_cmp);
        let mut row = Vec::with_capacity(len);
        let mut prev = 0.0;
        for &c in &cuts {
            row.push(c - prev);
            prev = c;
        }
        row.push(1.0 - prev);
        row
    }
}
