//! Deterministic per-realization random substreams.
//!
//! Scheme v1: a SplitMix64 chain over
//! `(version, seed, stream, realization, k_db bits, snr_db bits)` seeds a
//! ChaCha8 generator. Keying on the grid values rather than their indices
//! keeps existing points stable when a grid is extended.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SEED_SCHEME_VERSION: u64 = 1;

/// Independent purposes that must never share realizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Sweep = 0x5357_4545_5000_0000,
    WeightTable = 0x5754_4142_4c45_0000,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d1_049b_b133_111b);
    z ^ (z >> 31)
}

fn normalize_bits(v: f64) -> u64 {
    // -0.0 and 0.0 are the same grid point
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

pub fn realization_seed(seed: u64, stream: Stream, realization: u64, k_db: f64, snr_db: f64) -> u64 {
    [
        seed,
        stream as u64,
        realization,
        normalize_bits(k_db),
        normalize_bits(snr_db),
    ]
    .into_iter()
    .fold(splitmix64(SEED_SCHEME_VERSION), |h, x| splitmix64(h ^ x))
}

pub fn realization_rng(seed: u64, stream: Stream, realization: u64, k_db: f64, snr_db: f64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(realization_seed(seed, stream, realization, k_db, snr_db))
}
