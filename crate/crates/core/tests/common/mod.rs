//! Shared helpers for the integration tests.
#![allow(dead_code)]

use eei_core::gaussmat::simdiag;
use eei_core::CovMatrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `GGᵀ/n + 0.1·I` with standard normal `G`.
pub fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> CovMatrix {
    let g: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut *rng));
    let m = &g * g.transpose() / n as f64 + DMatrix::<f64>::identity(n, n) * 0.1;
    CovMatrix::new(m).unwrap()
}

pub fn random_mu(rng: &mut ChaCha8Rng) -> f64 {
    // (1, 5]
    5.0 - 4.0 * rng.random::<f64>()
}

/// Unconstrained Gaussian maximizer of `h(Σ+W) − μ h(Σ+V)` over `Σ ⪰ 0`.
///
/// In coordinates where `W = I` and `V = diag(v)` both noises are
/// independent across axes and the scalar calculus answer
/// `max(0, (v − μ)/(μ − 1))` applies per axis.
pub fn unconstrained_optimum(w: &CovMatrix, v: &CovMatrix, mu: f64) -> DMatrix<f64> {
    let sd = simdiag(w, v).unwrap();
    let qinv = sd.q.clone().try_inverse().unwrap();
    let d = sd.d.map(|vi| ((vi - mu) / (mu - 1.0)).max(0.0));
    qinv.transpose() * DMatrix::from_diagonal(&d) * qinv
}
