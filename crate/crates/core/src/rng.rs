//! Seed derivation and generator construction.
//!
//! Every random decision in the crate flows from a `u64` seed through
//! [`rng_from_seed`]. Child seeds are derived with a splitmix64 finalizer so
//! parallel cells get independent streams regardless of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere. ChaCha output is platform independent.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// splitmix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a stream index into a root seed.
///
/// `derive_seed(root, i)` is the seed of the `i`-th child stream. Distinct
/// indices give unrelated seeds; the mapping is stable across releases.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// 64-bit FNV-1a, used for canonical partition hashes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}
