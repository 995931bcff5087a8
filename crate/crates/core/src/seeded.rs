//! Stable, order-independent seeding: every random draw in the mock backend
//! and generators is derived from a hash of (seed, key parts), so results do
//! not depend on call order or thread interleaving.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the bytes, finished with splitmix.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(h)
}

/// Combines a seed with string key parts into one 64-bit key.
pub fn key(seed: u64, parts: &[&str]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, p| splitmix64(acc ^ hash_str(p)))
}

pub fn rng_for(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(key(seed, parts))
}

/// Uniform value in `[0, 1)` from a key.
pub fn unit(k: u64) -> f64 {
    (splitmix64(k) >> 11) as f64 / (1u64 << 53) as f64
}

/// Standard normal draw from a key (Box-Muller over two derived uniforms).
pub fn gauss(k: u64) -> f64 {
    let u1 = 1.0 - unit(k);
    let u2 = unit(k ^ 0xD1B5_4A32_D192_ED03);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
