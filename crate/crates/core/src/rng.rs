//! Seeding. All randomness flows through ChaCha8 so streams are identical
//! on every platform for a given seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Stream ids keep the reservoir weights and the λ search independent even
/// when they share a seed.
pub const STREAM_WEIGHTS: u64 = 0;
pub const STREAM_LAMBDA: u64 = 1;
pub const STREAM_SAMPLING: u64 = 2;

pub fn rng_for(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-(series, configuration) seed: first eight bytes of
/// SHA-256(master_seed ‖ series_id ‖ config_index), little endian.
pub fn task_seed(master_seed: u64, series_id: &str, config_index: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update((series_id.len() as u64).to_le_bytes());
    hasher.update(series_id.as_bytes());
    hasher.update((config_index as u64).to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
