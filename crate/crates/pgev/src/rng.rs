//! Deterministic random streams.
//!
//! Every randomized stage draws from a ChaCha12 generator keyed by
//! (root seed, stage label, stream index). ChaCha operates in counter mode,
//! so streams are reproducible bit-for-bit across platforms and runs, and
//! per-index derivation keeps parallel work order-independent: replicate k
//! sees the same bytes no matter which thread runs it.
//!
//! The 256-bit key is expanded from a 64-bit FNV-1a hash of the
//! (seed, label, index) triple via the SplitMix64 mixer. Uniform doubles are
//! mapped from the top 53 bits of `next_u64` onto the open interval (0, 1),
//! so inverse-CDF transforms never see 0 or 1 exactly.

use crate::special::norm_quantile;
use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream generator type used throughout the crate.
pub type StreamRng = ChaCha12Rng;

fn fnv1a(h: u64, bytes: &[u8]) -> u64 {
    let mut h = h;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix_next(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for the sub-stream `(label, index)` of the given root seed.
pub fn stream(seed: u64, label: &str, index: u64) -> StreamRng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    h = fnv1a(h, &seed.to_le_bytes());
    h = fnv1a(h, label.as_bytes());
    h = fnv1a(h, &index.to_le_bytes());
    let mut key = [0u8; 32];
    let mut s = h;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix_next(&mut s).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// A fresh 64-bit root seed derived from the sub-stream `(label, index)`,
/// for handing a child task its own independent seed.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    stream(seed, label, index).next_u64()
}

/// Uniform draw on the open interval (0, 1).
pub fn uniform_open01(rng: &mut StreamRng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal draw via the quantile transform of `uniform_open01`.
pub fn standard_normal(rng: &mut StreamRng) -> f64 {
    // uniform_open01 never returns 0 or 1, so the quantile cannot fail
    norm_quantile(uniform_open01(rng)).expect("open-interval uniform")
}

/// Uniform integer in [0, n) by rejection-free 128-bit multiply.
pub fn uniform_index(rng: &mut StreamRng, n: usize) -> usize {
    assert!(n > 0);
    (((rng.next_u64() as u128) * (n as u128)) >> 64) as usize
}
