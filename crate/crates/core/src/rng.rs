//! Seeded random numbers for field initialization.
//!
//! The generator is ChaCha8 seeded through `SeedableRng::seed_from_u64`.
//! Uniform reals use the top 53 bits of each 64-bit output, so the stream of
//! values is fully determined by the seed on every platform.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct FieldRng(ChaCha8Rng);

impl FieldRng {
    pub fn new(seed: u64) -> Self {
        FieldRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-1, 1)`.
    pub fn symmetric(&mut self) -> f64 {
        2.0 * self.unit() - 1.0
    }
}
