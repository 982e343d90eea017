//! Per-shot RNG streams.
//!
//! Shot `s` of grid point `g` under user seed `seed` draws from a ChaCha8
//! stream seeded with
//!
//! ```text
//! splitmix64(splitmix64(splitmix64(seed) ^ g) ^ s)
//! ```
//!
//! `splitmix64` is a bijection on `u64`, so for a fixed `(seed, g)` distinct
//! shots always get distinct stream seeds. Results therefore do not depend
//! on the order in which shots are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, grid_index: u64, shot_index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ grid_index) ^ shot_index)
}

pub fn shot_rng(seed: u64, grid_index: u64, shot_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, grid_index, shot_index))
}
