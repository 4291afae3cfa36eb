use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Counter-based generator keyed by `(seed, stream)`.
///
/// Distinct stream names give independent sequences, so adding a consumer never
/// perturbs another stage's randomness.
pub fn stream_rng(seed: u64, stream: &str) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(stream_key(seed, stream))
}

pub fn stream_key(seed: u64, stream: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((stream.len() as u64).to_le_bytes());
    h.update(stream.as_bytes());
    h.finalize().into()
}

/// Derives a child seed for a named sub-stage.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    let k = stream_key(seed, stream);
    u64::from_le_bytes(k[..8].try_into().unwrap())
}
