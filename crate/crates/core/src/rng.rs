//! Seed splitting: one root seed, named per-component streams.
//!
//! Streams are derived by hashing (root, name, index), so adding a new
//! component never perturbs existing streams and trials can fan out with
//! independent derived seeds.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(root: u64, name: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update([0xff]);
    h.update(name.as_bytes());
    h.update([0xfe]);
    h.update(index.to_le_bytes());
    h.finalize().into()
}

pub fn stream(root: u64, name: &str, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::from_seed(derive_seed(root, name, index))
}
