//! Seeded RNG construction. Every stochastic step derives its generator
//! from (base seed, purpose label, index) so runs are reproducible and
//! subsystems cannot steal randomness from each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, used only to fold purpose labels into seeds. Stable across
/// platforms and releases, unlike `DefaultHasher`.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Generator for a named purpose, e.g. `stream(seed, "fold-shuffle", 3)`.
pub fn stream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mixed = seed ^ fnv1a(label.as_bytes()) ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Derived seed for handing to APIs that take a seed rather than a
/// generator.
pub fn subseed(seed: u64, label: &str, index: u64) -> u64 {
    use rand::Rng;
    stream(seed, label, index).gen()
}
