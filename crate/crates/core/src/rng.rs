//! Deterministic draw streams.
//!
//! Every concern (source evolution, channel errors, contention, policy
//! randomisation, experiment setup) gets its own ChaCha8 stream per node,
//! derived from one global seed. A node's k-th source step always consumes the
//! k-th draw of its source stream, whatever the scheduler did in between, so
//! policies compared on one seed share their source sample paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct concerns never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Concern {
    Source = 1,
    Channel = 2,
    Contention = 3,
    Policy = 4,
    Setup = 5,
}

/// Factory for per-(concern, node) streams under one global seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, concern: Concern, node: usize) -> DrawStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((concern as u64) << 56) | node as u64);
        DrawStream { rng }
    }
}

/// A sequential source of uniform draws in `[0, 1)`.
#[derive(Debug, Clone)]
pub struct DrawStream {
    rng: ChaCha8Rng,
}

impl DrawStream {
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Uniform real in `[lo, hi]`.
    pub fn between(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}

/// Mixes a base seed with a small integer tag into a new seed, for deriving
/// per-replication or per-sweep-point seeds.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(tag);
    rng.gen::<u64>()
}
