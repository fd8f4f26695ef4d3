//! Seeded random sources. Every stochastic routine takes a `u64` seed and
//! builds its own ChaCha stream so runs are reproducible bit for bit.

use faer::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Circularly symmetric complex Gaussian with `E|z|^2 = std^2`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, std: f64) -> c64 {
    let s = std / std::f64::consts::SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64::new(re * s, im * s)
}

pub fn complex_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, std: f64) -> Vec<c64> {
    (0..n).map(|_| complex_normal(rng, std)).collect()
}

/// Uniformly chosen `k`-subset of `0..n`, returned sorted.
pub fn sample_subset<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut out = idx[..k].to_vec();
    out.sort_unstable();
    out
}
