//! Hierarchical, counter-based seeding.
//!
//! Every random stream in an experiment is addressed by a [`SeedPath`]:
//! `(master, method, budget, realization, purpose, α)`. The fields are packed
//! into the 256-bit ChaCha key without hashing, so two distinct paths never
//! share a stream. Streams do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::multiindex::MultiIndex;

/// Stream purposes, so draws made for different jobs never overlap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Purpose {
    Smc = 1,
    Allocation = 2,
    Reference = 3,
    Data = 4,
    Pilot = 5,
    Rates = 6,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SeedPath {
    master: u64,
    method: u32,
    budget: u32,
    realization: u32,
    purpose: u32,
    alpha: u64,
}

impl SeedPath {
    pub fn new(master: u64) -> Self {
        SeedPath {
            master,
            method: 0,
            budget: 0,
            realization: 0,
            purpose: Purpose::Smc as u32,
            alpha: 0,
        }
    }

    pub fn method(mut self, method: u32) -> Self {
        self.method = method;
        self
    }

    pub fn budget(mut self, budget: u32) -> Self {
        self.budget = budget;
        self
    }

    pub fn realization(mut self, realization: u32) -> Self {
        self.realization = realization;
        self
    }

    pub fn purpose(mut self, purpose: Purpose) -> Self {
        self.purpose = purpose as u32;
        self
    }

    /// Address the stream of the SMC run at `alpha`. Supports up to four
    /// directions with components below `2^15`.
    pub fn alpha(mut self, alpha: &MultiIndex) -> Self {
        assert!(alpha.dim() <= 4, "seed paths support at most 4 directions");
        let mut code = 1u64 << 63;
        for (i, &a) in alpha.components().iter().enumerate() {
            assert!(a < (1 << 15), "multi-index component too large for seeding");
            code |= (a as u64) << (16 * i);
        }
        code |= (alpha.dim() as u64) << 60;
        self.alpha = code;
        self
    }

    pub fn key(&self) -> [u8; 32] {
        let words = [
            self.master,
            ((self.method as u64) << 32) | self.budget as u64,
            ((self.realization as u64) << 32) | self.purpose as u64,
            self.alpha,
        ];
        let mut key = [0u8; 32];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        key
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }
}
