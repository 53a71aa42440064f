//! Random streams.
//!
//! Every stochastic draw in the crate flows through [`PeerRng`], a ChaCha8
//! counter-mode generator whose output is pinned across platforms. Run seeds
//! are derived with a SplitMix64 mix so CSVs are stable between machines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

pub type PeerRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> PeerRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable seed for run `(sweep_index, seed_index)` under `master`.
pub fn derive_seed(master: u64, sweep_index: u64, seed_index: u64) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ sweep_index.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ seed_index.wrapping_mul(0xA076_1D64_78BD_642F))
}

/// One uniform draw in `[0, 1)`.
pub fn uniform(rng: &mut PeerRng) -> f64 {
    rng.random::<f64>()
}

/// Inverse-CDF categorical draw from a probability row using the uniform `u`.
///
/// Never returns an index whose probability is zero, even when rounding leaves
/// the cumulative sum slightly below one.
pub fn categorical_from_uniform<T: Scalar>(probs: &[T], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Categorical draw consuming exactly one uniform.
pub fn categorical<T: Scalar>(probs: &[T], rng: &mut PeerRng) -> usize {
    categorical_from_uniform(probs, uniform(rng))
}

/// Fisher-Yates shuffle (delegates to `rand`).
pub fn shuffle<V>(items: &mut [V], rng: &mut PeerRng) {
    use rand::seq::SliceRandom;
    items.shuffle(rng);
}
