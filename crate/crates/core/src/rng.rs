//! Seeded pseudo-random streams.
//!
//! Every randomized operation takes an explicit [`Rng`]. The generator is
//! xoshiro256++ seeded through SplitMix64, so a 64-bit seed fully determines
//! the stream on every platform.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Derives an independent child seed from a master seed and a stream index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    // SplitMix64 finalizer over the combined words.
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
