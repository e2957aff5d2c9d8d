//! Stable seed derivation.
//!
//! Per-cell seeds are derived from the master seed and the cell's
//! coordinates with FNV-1a followed by a SplitMix64 finaliser, so they do not
//! depend on execution order, platform or the standard library's hasher.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one cell: `parts` are hashed in order with a separator so that
/// `("ab", "c")` and `("a", "bc")` differ.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in master.to_le_bytes() {
        h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
    }
    for part in parts {
        for &b in part.as_bytes() {
            h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
        }
        h = (h ^ 0xff).wrapping_mul(FNV_PRIME);
    }
    mix64(h)
}
