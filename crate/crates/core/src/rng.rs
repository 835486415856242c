//! Counter-based seeded streams.
//!
//! Every draw is determined by `(seed, stream, position)`: the seed keys a
//! ChaCha8 block function and the stream id selects an independent 2^64-block
//! sequence, so trials can be generated in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream id namespaces, so different consumers of one seed never overlap.
pub mod streams {
    pub const DATA: u64 = 0;
    pub const TEACHER: u64 = 1 << 56;
    pub const BATCHES: u64 = 2 << 56;
    pub const SPLIT: u64 = 3 << 56;
    pub const TRIAL_SEEDS: u64 = 4 << 56;
}

/// Builds the generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; a bijective mixer on 64-bit words.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-trial seed derived from a master seed.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    mix64(mix64(master ^ streams::TRIAL_SEEDS).wrapping_add(trial))
}

/// Hashes the bit patterns of `values` under `seed`.
pub fn hash_f64s(seed: u64, values: &[f64]) -> u64 {
    let mut h = mix64(seed);
    for v in values {
        // -0.0 and 0.0 are the same covariate.
        let bits = if *v == 0.0 { 0 } else { v.to_bits() };
        h = mix64(h ^ bits);
    }
    h
}

/// Standard normal deviate that is a pure function of `key`.
pub fn normal_from_hash(key: u64) -> f64 {
    // Box-Muller on two 53-bit uniforms drawn from independent mixes.
    let a = mix64(key ^ 0x5851_F42D_4C95_7F2D);
    let b = mix64(key ^ 0x1405_7B7E_F767_814F);
    let u1 = ((a >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
