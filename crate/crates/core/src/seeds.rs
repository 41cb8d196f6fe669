use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a. Stable across platforms and releases; used for stream
/// seed derivation and for content fingerprints embedded in artifacts.
/// Not cryptographic, which is fine: fingerprints guard against accidental
/// mixups, not adversaries.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Fingerprint rendered the way artifacts store it.
pub fn fingerprint_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a(bytes))
}

/// Derive an independent stream seed from a master seed and a purpose tag.
///
/// Every consumer of randomness owns a tagged stream (`"init"`,
/// `"shuffle:3"`, `"mixup:3"`, ...) so that adding or removing one consumer
/// cannot shift the draws seen by another. In particular, training with
/// zero mixup pairs per epoch consumes nothing from the mixup streams.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    let mut bytes = Vec::with_capacity(8 + tag.len());
    bytes.extend_from_slice(&master.to_le_bytes());
    bytes.extend_from_slice(tag.as_bytes());
    fnv1a(&bytes)
}

/// The one RNG used everywhere: seeded ChaCha8, identical on every platform.
pub fn rng_for(master: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag))
}
