//! Deterministic substream derivation from a single master seed.
//!
//! Every randomized stage (sampling, per-sample recovery, batch subsampling)
//! draws from its own ChaCha stream keyed by `(master, tag, index)`, so
//! results are reproducible regardless of thread scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Derive a reproducible RNG for the substream `(tag, index)` of `master`.
pub fn substream(master: u64, tag: &str, index: u64) -> ChaCha12Rng {
    let mixed = splitmix64(master ^ splitmix64(fnv1a(tag.as_bytes()) ^ splitmix64(index)));
    ChaCha12Rng::seed_from_u64(mixed)
}
