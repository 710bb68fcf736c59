//! Deterministic stream derivation.
//!
//! Training never keeps long-lived RNG state: every random decision is drawn
//! from an rng keyed by `(run seed, purpose tag, indices...)`. That makes
//! runs resumable and byte-reproducible at any thread count, since no stream
//! position depends on how much other code consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds the parts into one well-mixed word; order-sensitive.
pub fn mix(parts: &[u64]) -> u64 {
    let mut acc = 0x243F_6A88_85A3_08D3u64;
    for &p in parts {
        acc = splitmix(acc ^ splitmix(p));
    }
    acc
}

/// ChaCha12 stream keyed by the mixed parts.
pub fn rng(parts: &[u64]) -> ChaCha12Rng {
    let mut z = mix(parts);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        z = splitmix(z);
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}
