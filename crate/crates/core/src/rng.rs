//! Seed-derived random streams.
//!
//! Every consumer of randomness asks for a stream keyed by `(seed, role, a, b)`,
//! where `a` and `b` are counters such as the iteration and particle index.
//! The key is mixed with splitmix64 and used to seed a ChaCha8 generator, so a
//! given position in the computation always sees the same numbers regardless
//! of evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which part of the computation a stream feeds. Distinct roles never share numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Role {
    Directions = 1,
    TargetNoise = 2,
    ParticleNoise = 3,
    Diffusion = 4,
    Init = 5,
    Subsample = 6,
    EvalDirections = 7,
    EvalNoise = 8,
    Mixture = 9,
    Perturb = 10,
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one 64-bit key.
pub fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Derives a sub-seed for `role` at counter position `(a, b)`.
pub fn derive(seed: u64, role: Role, a: u64, b: u64) -> u64 {
    mix(&[seed, role as u64, a, b])
}

pub fn stream(seed: u64, role: Role, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, role, a, b))
}

/// Seeds a generator directly from a caller-supplied seed.
pub fn from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Content fingerprint of a slice of floats (bit patterns, order-sensitive).
pub fn fingerprint(values: &[f64]) -> u64 {
    values
        .iter()
        .fold(0xcbf2_9ce4_8422_2325, |acc, v| splitmix64(acc ^ v.to_bits()))
}
