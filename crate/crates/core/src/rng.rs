//! Seeding helpers. Every random stream in the crate is a ChaCha8 generator
//! seeded from a `u64`, so runs are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a root seed and a stage label.
///
/// The label is hashed with 64-bit FNV-1a, xored into the root and passed
/// through one SplitMix64 round.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(root ^ h)
}

/// Child seed for an integer index, e.g. one sampling chain.
pub fn derive_index_seed(root: u64, index: u64) -> u64 {
    splitmix64(splitmix64(root) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_give_distinct_stable_seeds() {
        let a = derive_seed(7, "embed");
        assert_eq!(a, derive_seed(7, "embed"));
        assert_ne!(a, derive_seed(7, "train-decoder"));
        assert_ne!(a, derive_seed(8, "embed"));
        assert_ne!(derive_index_seed(1, 0), derive_index_seed(1, 1));
    }
}
