//! Deterministic seed derivation and shared sampling helpers. Every RNG in
//! the crate is a ChaCha8 stream seeded through these functions, which is
//! what makes whole experiments reproducible from a single base seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a role label (FNV-1a) into the base seed, then chains splitmix64
/// rounds over two counters. Distinct labels or counters give independent
/// streams; identical inputs always give the same seed.
pub(crate) fn derive(base: u64, label: &str, a: u64, b: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for byte in label.bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    let s = splitmix64(base ^ h);
    let s = splitmix64(s ^ a);
    splitmix64(s ^ b)
}

/// One standard-normal draw via Box-Muller (two uniform draws per call).
pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f32 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    ((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()) as f32
}
