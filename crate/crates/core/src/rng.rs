//! Seed derivation for reproducible, independently seeded work items.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche for composing seed components.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a list of component tags.
/// The same (master, tags) always yields the same child seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut acc = mix(master);
    for &t in tags {
        acc = mix(acc ^ mix(t));
    }
    acc
}

/// Hash a string label into a seed component tag.
pub fn tag(label: &str) -> u64 {
    let mut acc = 0xcbf2_9ce4_8422_2325u64;
    for &b in label.as_bytes() {
        acc ^= u64::from(b);
        acc = acc.wrapping_mul(0x0000_0100_0000_01b3);
    }
    acc
}

/// Deterministic RNG for a derived seed.
pub fn rng_for(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
