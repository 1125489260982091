// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded random number generation.
//!
//! Every stochastic step in the lab draws from xoshiro256** seeded through
//! SplitMix64 (`seed_from_u64`), so datasets and initialisations reproduce
//! bit-for-bit on any platform given the same seed.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

pub type LabRng = Xoshiro256StarStar;

pub fn seeded(seed: u64) -> LabRng {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Derives an independent stream for a named sub-task, so adding a new
/// consumer does not shift the draws of existing ones.
pub fn derived(seed: u64, stream: &str) -> LabRng {
    // FNV-1a over the stream name, folded into the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    seeded(seed ^ h.rotate_left(17))
}
