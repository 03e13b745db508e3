//! Counter-based random streams.
//!
//! Every walker draws from its own generator seeded by hashing
//! `(seed, iteration, point_index, walker_index)`, so results do not depend on
//! scheduling order or on how work is split between threads.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a key path.
pub fn hash_key(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |h, &w| splitmix64(h ^ splitmix64(w)))
}

/// Generator for an arbitrary key path.
pub fn keyed_rng(words: &[u64]) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(hash_key(words))
}

/// Purpose tags kept distinct so that, e.g., collocation sampling and walker
/// noise never share a stream.
pub mod tags {
    pub const WALKER: u64 = 0x5741_4c4b;
    pub const INTERIOR: u64 = 0x494e_5452;
    pub const BOUNDARY: u64 = 0x4244_5259;
    pub const INIT: u64 = 0x494e_4954;
    pub const ANALYSIS: u64 = 0x414e_4c59;
    pub const SWEEP: u64 = 0x5357_4550;
}

/// Stream key for the walkers of one collocation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub iteration: u64,
    pub point_index: u64,
}

impl RngStream {
    pub fn new(seed: u64, iteration: u64, point_index: u64) -> Self {
        Self {
            seed,
            iteration,
            point_index,
        }
    }

    /// Generator for walker `walker_index` of this point.
    pub fn walker(&self, walker_index: u64) -> Xoshiro256PlusPlus {
        keyed_rng(&[
            tags::WALKER,
            self.seed,
            self.iteration,
            self.point_index,
            walker_index,
        ])
    }
}
