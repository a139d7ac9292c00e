//! Seeded random streams.
//!
//! Every stochastic decision in the engine draws from a `ChaCha8Rng` whose seed
//! is derived from the run seed plus a small key (iteration, path slot, call
//! kind, ...). Nothing keeps a live cursor across iterations, so a snapshot only
//! needs the iteration counter to resume the exact same streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one seed.
pub fn derive_seed(seed: u64, key: &[u64]) -> u64 {
    key.iter().fold(mix64(seed), |acc, k| mix64(acc ^ mix64(*k)))
}

pub fn stream(seed: u64, key: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, key))
}

/// Stable 64-bit digest of a string (first eight bytes of SHA-256).
pub fn text_digest(text: &str) -> u64 {
    let d = Sha256::digest(text.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    u64::from_le_bytes(b)
}

/// Call-kind tags mixed into derived seeds.
pub mod kind {
    pub const SAMPLE_PATH: u64 = 1;
    pub const EXPAND: u64 = 2;
    pub const CHALLENGER: u64 = 3;
    pub const SOLVER: u64 = 4;
    pub const BALANCE: u64 = 5;
    pub const DOC_PICK: u64 = 6;
    pub const LANDSCAPE: u64 = 7;
    pub const SEARCH: u64 = 8;
}
