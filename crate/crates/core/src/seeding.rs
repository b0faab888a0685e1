//! Counter-based seed derivation.
//!
//! Child streams are a pure function of `(master, replication, stream)`, so a
//! failing replication never shifts the random numbers of another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random generator used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Stream identifiers for [`child_seed`].
pub mod stream {
    pub const DATA: u64 = 0;
    pub const FOLDS: u64 = 1;
    pub const TRUTH: u64 = 2;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes `(master, replication, stream)` into an independent seed.
pub fn child_seed(master: u64, replication: u64, stream: u64) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ replication.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ stream.wrapping_mul(0xA076_1D64_78BD_642F))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
