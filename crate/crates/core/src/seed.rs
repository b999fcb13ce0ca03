//! Seed derivation.
//!
//! `derive_seed(master, label, coords)` hashes the little-endian bytes of
//! `master`, the UTF-8 bytes of `label` and each coordinate with FNV-1a (64
//! bit), then applies the SplitMix64 finalizer. Streams for distinct labels or
//! coordinates are therefore independent of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, label: &str, coords: &[u64]) -> u64 {
    let mut h = fnv(FNV_OFFSET, &master.to_le_bytes());
    h = fnv(h, label.as_bytes());
    for c in coords {
        h = fnv(h, &c.to_le_bytes());
    }
    splitmix(h)
}

pub fn rng_for(master: u64, label: &str, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, coords))
}
