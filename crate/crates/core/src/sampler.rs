//! Seeded noise generation.
//!
//! The deterministic generator is ChaCha20 (`rand_chacha`), addressed by a
//! `(seed, stream)` pair: the seed is expanded to a 256-bit key and the
//! stream id selects an independent ChaCha stream, so parallel consumers
//! never share state. Output is bitwise reproducible on every platform.
//! [`entropy_rng`] gives a generator keyed from the operating system for
//! production use; fixed test vectors do not apply to it.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::params::{GammaPlrvParams, LaplaceParams};

pub type NoiseRng = ChaCha20Rng;

/// Deterministic generator for `(seed, stream)`.
pub fn seeded_rng(seed: u64, stream: u64) -> NoiseRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator keyed from operating-system entropy. Not reproducible.
pub fn entropy_rng() -> NoiseRng {
    ChaCha20Rng::from_rng(&mut rand::rng())
}

/// One draw of multivariate noise: the realized Laplace scale and the
/// coordinates. For Gaussian draws `scale_b` holds the standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    pub scale_b: f64,
    pub coords: Vec<f64>,
}

impl NoiseDraw {
    /// `draw_index,scale_b,coord_0,...,coord_{n-1}`.
    pub fn csv_header(n: usize) -> String {
        let mut h = String::from("draw_index,scale_b");
        for i in 0..n {
            h.push_str(&format!(",coord_{i}"));
        }
        h
    }

    pub fn csv_row(&self, index: u64) -> String {
        let mut row = format!("{index},{}", self.scale_b);
        for c in &self.coords {
            row.push(',');
            row.push_str(&c.to_string());
        }
        row
    }

    pub fn mean_abs(&self) -> f64 {
        self.coords.iter().map(|c| c.abs()).sum::<f64>() / self.coords.len() as f64
    }
}

/// One draw from Gamma(shape `k`, scale `theta`): Marsaglia–Tsang squeeze
/// and rejection for `k >= 1`, with the `U^(1/k)` boost below one.
///
/// Panics if `k` or `theta` is not positive and finite.
pub fn sample_gamma<R: Rng + ?Sized>(k: f64, theta: f64, rng: &mut R) -> f64 {
    let dist = Gamma::new(k, theta).expect("Gamma shape and scale must be positive and finite");
    loop {
        let u = dist.sample(rng);
        // Very small shapes can underflow to zero, which is not a valid
        // inverse scale.
        if u > 0.0 {
            return u;
        }
    }
}

/// Laplace(0, b) by inversion: `-b sign(v) ln(1 - 2|v|)`, `v ~ U(-1/2, 1/2)`.
#[inline]
pub fn sample_laplace<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    let v: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    -b * v.signum() * (-2.0 * v.abs()).ln_1p()
}

/// Γ-PLRV noise: one inverse scale `u ~ Gamma(k, theta)`, then `n`
/// i.i.d. Laplace coordinates sharing the scale `b = 1/u`.
pub fn sample_plrv_noise<R: Rng + ?Sized>(params: &GammaPlrvParams, n: usize, rng: &mut R) -> NoiseDraw {
    let b = 1.0 / sample_gamma(params.k(), params.theta(), rng);
    let coords = (0..n).map(|_| sample_laplace(b, rng)).collect();
    NoiseDraw { scale_b: b, coords }
}

/// `n` i.i.d. Laplace coordinates with fixed scale.
pub fn sample_laplace_noise<R: Rng + ?Sized>(params: &LaplaceParams, n: usize, rng: &mut R) -> NoiseDraw {
    let b = params.b();
    NoiseDraw {
        scale_b: b,
        coords: (0..n).map(|_| sample_laplace(b, rng)).collect(),
    }
}

/// `n` i.i.d. normal coordinates with standard deviation `sigma_eff`
/// (ziggurat). A zero deviation yields zeros.
///
/// Panics if `sigma_eff` is negative or not finite.
pub fn sample_gaussian_noise<R: Rng + ?Sized>(sigma_eff: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let dist = Normal::new(0.0, sigma_eff).expect("standard deviation must be finite and non-negative");
    (0..n).map(|_| dist.sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| seeded_rng(7, 0).random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut s0 = seeded_rng(7, 0);
        let mut s1 = seeded_rng(7, 1);
        assert_ne!(s0.random::<u64>(), s1.random::<u64>());
    }

    #[test]
    fn plrv_draw_shares_scale() {
        let p = GammaPlrvParams::new(10.0, 0.1).unwrap();
        let d = sample_plrv_noise(&p, 5, &mut seeded_rng(1, 0));
        assert_eq!(d.coords.len(), 5);
        assert!(d.scale_b > 0.0);
        assert_eq!(NoiseDraw::csv_header(2), "draw_index,scale_b,coord_0,coord_1");
        assert!(d.csv_row(3).starts_with("3,"));
    }

    #[test]
    fn small_shape_is_positive() {
        let mut rng = seeded_rng(3, 0);
        for _ in 0..10_000 {
            assert!(sample_gamma(0.05, 1.0, &mut rng) > 0.0);
        }
    }

    #[test]
    fn zero_sigma_gives_zeros() {
        assert_eq!(sample_gaussian_noise(0.0, 3, &mut seeded_rng(0, 0)), vec![0.0; 3]);
    }
}
