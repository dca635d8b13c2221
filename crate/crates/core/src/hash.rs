//! Stable 64-bit hashing (FNV-1a) used for page fingerprints and prompt
//! digests. The standard library hasher is not guaranteed stable across
//! releases, and digests here are persisted, so the constants are pinned.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over raw bytes.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// FNV-1a digest rendered as 16 lowercase hex characters.
pub fn digest_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a_64(bytes))
}
