#![allow(dead_code)]

use glome_core::model::GllimParams;
use glome_core::{CovStructure, GaussianParams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Random SPD matrix `Q diag(λ) Qᵀ` with eigenvalues in `[lo, hi]`.
pub fn spd(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = normal_matrix(rng, d, d, 1.0).qr().q();
    let lam = DVector::from_fn(d, |_, _| rng.random_range(lo..hi));
    let m = &q * DMatrix::from_diagonal(&lam) * q.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> GaussianParams {
    GaussianParams::new(normal_vector(rng, d, 1.0), spd(rng, d, 0.3, 2.0)).unwrap()
}

/// Well-conditioned random GLLiM parameters (`in_dim` gates, `out_dim` experts).
pub fn random_params(rng: &mut ChaCha8Rng, k: usize, in_dim: usize, out_dim: usize) -> GllimParams {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    GllimParams {
        weights: raw.iter().map(|w| w / total).collect(),
        gate_means: (0..k).map(|_| normal_vector(rng, in_dim, 1.0)).collect(),
        gate_covs: (0..k).map(|_| spd(rng, in_dim, 0.3, 2.0)).collect(),
        slopes: (0..k).map(|_| normal_matrix(rng, out_dim, in_dim, 1.0)).collect(),
        intercepts: (0..k).map(|_| normal_vector(rng, out_dim, 1.0)).collect(),
        noise_covs: (0..k).map(|_| spd(rng, out_dim, 0.3, 2.0)).collect(),
        cov_structure: CovStructure::Full,
    }
}
