//! Reproducible random streams.
//!
//! Every stochastic operation takes an explicit `u64` seed and builds a
//! [`ChaCha12Rng`] from it. Independent sub-streams are obtained by hashing a
//! parent seed together with a label (`derive_seed`), so that, for instance,
//! the projector noise and the eigenvalue noise of one client never share
//! random numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// The generator used throughout the crate.
pub type StreamRng = ChaCha12Rng;

pub fn rng_from_seed(seed: u64) -> StreamRng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Derives a child seed from `parent` and a textual label.
///
/// The first eight bytes of `SHA-256(parent_le || label)` are read as a
/// little-endian integer.
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(parent.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// `derive_seed` over a sequence of labels, applied left to right.
pub fn derive_path(parent: u64, labels: &[&str]) -> u64 {
    labels.iter().fold(parent, |seed, label| derive_seed(seed, label))
}
