//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit 64-bit seed and builds its own
//! ChaCha8 stream from it, so results never depend on scheduling. Composite
//! seeds (master seed, scenario, method, ...) are folded together with a
//! SplitMix64 finalizer, which is stable across platforms and toolchains.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one seed. Order matters.
pub fn mix(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5EED_0F_D1CE_u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// FNV-1a over a label, used to turn identifiers into seed words.
pub fn label(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}
