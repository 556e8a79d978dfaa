//! Deterministic seed derivation.
//!
//! All randomness in the crate flows from a single master seed. Sub-seeds
//! are derived from the master seed plus a purpose tag and an index, so
//! results are independent of execution order and thread count.

/// splitmix64 finalizer; good avalanche, stable across platforms.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over raw bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive a sub-seed from `master` for the given purpose tag and index.
pub fn derive(master: u64, tag: &str, index: u64) -> u64 {
    let t = fnv1a(tag.as_bytes());
    splitmix64(master ^ t.rotate_left(17) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_stable() {
        assert_eq!(derive(7, "tree", 0), derive(7, "tree", 0));
        assert_ne!(derive(7, "tree", 0), derive(7, "tree", 1));
        assert_ne!(derive(7, "tree", 0), derive(7, "cell", 0));
        assert_ne!(derive(7, "tree", 0), derive(8, "tree", 0));
    }
}
