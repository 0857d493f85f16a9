//! Seeded randomness with deterministic child-stream derivation.
//!
//! Every random quantity in the crate flows from one `u64` seed through
//! ChaCha8 (`rand_chacha::ChaCha8Rng`), which is portable and produces
//! bit-identical streams across platforms and thread counts. Parallel work
//! (replications, ensemble members) never shares a stream: each unit derives
//! its own child seed with the SplitMix64 mixer, so results do not depend on
//! scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A seed plus the derivation rule for child streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(self) -> u64 {
        self.seed
    }

    /// A fresh ChaCha8 generator for this stream.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Deterministic child stream `index`; children of different indexes
    /// (and of different parents) are independent for all practical
    /// purposes.
    pub fn child(self, index: u64) -> SeedStream {
        let state = self
            .seed
            .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        SeedStream::new(splitmix64(state))
    }
}

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
