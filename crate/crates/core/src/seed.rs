//! Stable per-task seeds.
//!
//! Every randomized task (dataset generation, a training run) gets its own
//! seed derived from the study's master seed and a textual task key, so the
//! outcome never depends on scheduling order or thread count.

use sha2::{Digest, Sha256};

pub fn derive_seed(master: u64, key: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for part in key {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
