//! Deterministic random numbers and counter-based seed derivation.
//!
//! Every stochastic operation takes an explicit 64-bit seed. Sub-streams
//! (per realization, per draw, per purpose) derive their own seeds through
//! [`derive_seed`], so loops can run in any order, or in parallel, without
//! changing the values produced.

use num_complex::Complex64;
use rand::{Rng as _, SeedableRng};
use rand_distr::StandardNormal;

/// The single RNG used everywhere; counter-based, identical on all platforms.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Labels separating unrelated random streams drawn from one master seed.
pub mod stream {
    pub const GEOMETRY: u64 = 0x01;
    pub const SHADOWING: u64 = 0x02;
    pub const PILOTS: u64 = 0x03;
    pub const CHANNEL: u64 = 0x04;
    pub const NOISE: u64 = 0x05;
    pub const REALIZATION: u64 = 0x06;
    pub const TRAINING: u64 = 0x07;
    pub const PROBE: u64 = 0x08;
}

/// SplitMix64 finalizer; the standard avalanche mix.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed for sub-stream (`stream`, `index`) of `master`.
///
/// Two rounds of SplitMix64 over the mixed words; collisions across the
/// streams and indices used here are practically impossible.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ stream.rotate_left(24)).wrapping_add(index))
}

/// A ChaCha RNG seeded from a 64-bit value.
pub fn seed_rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// One standard real Gaussian N(0, 1).
pub fn standard_normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// One standard complex Gaussian CN(0, 1): N(0, 1/2) + i N(0, 1/2).
pub fn complex_normal(rng: &mut Rng) -> Complex64 {
    const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;
    Complex64::new(
        SQRT_HALF * standard_normal(rng),
        SQRT_HALF * standard_normal(rng),
    )
}
