//! Seeded randomness. One 64-bit master seed reproduces a whole run.
//!
//! Child seeds are derived by hashing a path of counters with splitmix64,
//! so trial `t` of cell `c` always gets `derive_seed(master, &[c, t])`
//! regardless of execution order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type TestRng = ChaCha8Rng;

pub const DEFAULT_SEED: u64 = 0x5EED_2016;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &c| {
        splitmix64(acc ^ splitmix64(c.wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}

pub fn rng_from_seed(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Splits off an independent stream.
pub fn fork<R: RngCore + ?Sized>(rng: &mut R) -> TestRng {
    ChaCha8Rng::seed_from_u64(rng.next_u64())
}
