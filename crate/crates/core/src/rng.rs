//! Deterministic derivation of independent random streams from a run seed,
//! so trials and pipeline stages can be evaluated in any order (or in
//! parallel) without changing results.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math::C64;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Reproducible stream for a seed and a path of indices (for example
/// `[trial, stage, link]`). Distinct paths yield unrelated streams
/// regardless of the order streams are created or consumed in.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = mix(seed ^ 0xA076_1D64_78BD_642F);
    for &p in path {
        state = mix(state ^ mix(p));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = mix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// One sample of a circularly symmetric complex normal with unit total
/// variance (real and imaginary parts each carry variance 1/2).
pub fn complex_normal(rng: &mut impl Rng) -> C64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-u1.ln()).sqrt();
    let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
    C64::new(r * c, r * s)
}
