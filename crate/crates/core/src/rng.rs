//! Deterministic, scheduling-independent random streams.
//!
//! Every randomized computation draws from a ChaCha stream keyed by the
//! master seed, a purpose tag and a counter (replication or permutation
//! index). Two calls with the same triple always see the same numbers,
//! whatever the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keep streams for different consumers disjoint.
pub mod tag {
    pub const GRID: u64 = 0x6772_6964;
    pub const PERMUTATION: u64 = 0x7065_726d;
    pub const INNOVATIONS: u64 = 0x696e_6e6f;
    pub const REPLICATION: u64 = 0x7265_706c;
    pub const MONTE_CARLO: u64 = 0x6d63_6d63;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a tag and an index into a new 64-bit seed.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(tag)).wrapping_add(index))
}

/// Returns the ChaCha stream for `(seed, tag, index)`.
pub fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let a = splitmix64(seed ^ splitmix64(tag));
    let b = splitmix64(a ^ 0x5851_f42d_4c95_7f2d);
    key[..8].copy_from_slice(&a.to_le_bytes());
    key[8..16].copy_from_slice(&b.to_le_bytes());
    key[16..24].copy_from_slice(&splitmix64(b).to_le_bytes());
    key[24..].copy_from_slice(&tag.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
