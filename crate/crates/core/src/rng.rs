//! Seed derivation for reproducible Monte-Carlo streams.
//!
//! Every random quantity is drawn from a `ChaCha8Rng` whose seed is mixed from
//! a master seed and a path of stream tags (sweep point, trial, purpose), so
//! trials can run in any order and still produce identical draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::matrix::{c64, C64};

pub type Rng = ChaCha8Rng;

/// Stream purposes used when deriving per-trial seeds.
pub mod stream {
    pub const SCENE: u64 = 1;
    pub const MATRIX: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const CLUTTER: u64 = 4;
    pub const PROBE: u64 = 5;
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a master seed with a path of tags.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &t| {
        splitmix64(acc ^ splitmix64(t))
    })
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(master: u64, path: &[u64]) -> Rng {
    rng_from_seed(derive_seed(master, path))
}

/// Circular complex Gaussian with `E|z|^2 = variance`.
pub fn complex_normal(rng: &mut Rng, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c64(s * re, s * im)
}
