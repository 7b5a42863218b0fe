//! Seed derivation. Every randomized step draws from a ChaCha8 stream seeded
//! from a base seed combined with stable string keys, so results do not depend
//! on iteration order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mixes `base` with each key. Keys are length-delimited so `["ab", "c"]`
/// and `["a", "bc"]` derive different seeds.
pub fn derive_seed(base: u64, keys: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    for key in keys {
        for b in (key.len() as u64).to_le_bytes().iter().chain(key.as_bytes()) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    splitmix64(splitmix64(base) ^ h)
}

pub fn rng_for(base: u64, keys: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, keys))
}

/// Identifier recorded alongside shuffles so a plan names the permutation algorithm it used.
pub const SHUFFLE_ALGORITHM: &str = "chacha8-fisher-yates/splitmix-fnv1a-v1";
