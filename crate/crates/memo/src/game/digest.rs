//! Stable 64-bit digests for state and prefix identity.
//!
//! FNV-1a is used instead of the std hasher so digests are stable across
//! builds and diffable across runs. Digests are check values only; no game
//! logic depends on them.

use super::GameState;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Digest of the canonical serialization of a full game state.
pub fn state_digest(state: &dyn GameState) -> u64 {
    fnv1a64(state.canonical().as_bytes())
}

/// Hash a sequence of length-prefixed byte fields into one digest.
pub fn fnv1a64_fields<'a>(fields: impl IntoIterator<Item = &'a [u8]>) -> u64 {
    let mut h = FNV_OFFSET;
    for field in fields {
        for b in (field.len() as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
        for &b in field {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}
