//! Counter-based seed derivation.
//!
//! `derive_seed(master, category, index)` hashes the category name with
//! 64-bit FNV-1a and folds `(master, hash, index)` through three rounds of
//! splitmix64. Streams depend only on their own key, so cells may run in any
//! order or in parallel.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, category: &str, index: u64) -> u64 {
    let h = splitmix64(master);
    let h = splitmix64(h ^ fnv1a(category.as_bytes()));
    splitmix64(h ^ index)
}
