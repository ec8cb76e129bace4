//! Deterministic random streams.
//!
//! Every Monte Carlo loop in the crate draws from a ChaCha8 generator whose
//! key is derived from the user seed plus a set of tags (experiment id,
//! sample size, ...) and whose stream id is the trial or path index. Results
//! therefore do not depend on how rayon schedules the work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a base seed with a list of tags into a new 64-bit seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(base), |acc, &t| mix(acc ^ mix(t)))
}

/// Generator for stream `stream` of the key derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw on the open interval (0, 1).
pub fn open_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Stable 64-bit tag for a float parameter.
pub fn float_tag(x: f64) -> u64 {
    x.to_bits()
}
