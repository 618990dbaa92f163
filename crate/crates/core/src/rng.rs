//! Seeded randomness.
//!
//! Every stochastic routine takes an explicit `u64` seed and builds a
//! [`LabRng`] (ChaCha8, a counter-based generator) from it. Sub-streams are
//! derived with [`hash64`]: the stream for child `i` of master seed `m` is
//! seeded with `hash64(m, i)`, which is the SplitMix64 finalizer applied to
//! `m + (i + 1) * 0x9E3779B97F4A7C15`. Draws are always taken as uniform `f64`
//! in `[0, 1)` and mapped through an inverse CDF, so the consumed sequence is
//! easy to mirror in other implementations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

pub type LabRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of child stream `index` from `master`.
pub fn hash64(master: u64, index: u64) -> u64 {
    splitmix64_mix(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn rng_from_seed(seed: u64) -> LabRng {
    LabRng::seed_from_u64(seed)
}

/// One uniform draw in `[0, 1)`.
pub fn uniform(rng: &mut LabRng) -> f64 {
    rng.random::<f64>()
}

/// Inverse-CDF draw from a discrete distribution given by `probs`.
///
/// Falls back to the last index with positive mass when rounding leaves the
/// cumulative sum just below `u`.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Symmetric Dirichlet draw of dimension `k` via normalized Gamma variates.
pub fn dirichlet(rng: &mut LabRng, k: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("concentration must be positive");
    let mut draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        // Tiny concentrations can underflow every variate; fall back to a vertex.
        let hit = (uniform(rng) * k as f64) as usize;
        draws.iter_mut().enumerate().for_each(|(i, x)| *x = if i == hit.min(k - 1) { 1.0 } else { 0.0 });
        return draws;
    }
    draws.iter_mut().for_each(|x| *x /= total);
    draws
}
