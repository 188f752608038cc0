//! Monte Carlo estimators of tensorized divergences between conditional densities.
//!
//! Each estimator averages over the supplied covariates `x_i` and, for every
//! `x_i`, over `n_y` responses drawn from the reference density `s0(· | x_i)`.
//! The draws for `x_i` come from an RNG stream derived from `(seed, i)`.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GlomeError, Result};
use crate::linalg::{self, spd_inverse};
use crate::model::{ForwardParams, GaussianParams, PreparedMixture, Workspace};
use crate::rng;

const LOG_RATIO_CLAMP: f64 = 700.0;

/// A conditional density `s(y | x)` that can be evaluated and optionally sampled.
pub trait CondDensity: Sync {
    fn response_dim(&self) -> usize;

    fn covariate_dim(&self) -> usize;

    /// `ln s(y | x)`.
    fn ln_density(&self, y: &[f64], x: &[f64]) -> f64;

    /// Whether [`CondDensity::sample`] is available.
    fn has_sampler(&self) -> bool {
        false
    }

    /// Draws `y ~ s(· | x)` into `out`.
    fn sample(&self, _x: &[f64], _rng: &mut ChaCha8Rng, _out: &mut [f64]) {
        unimplemented!("density has no sampler")
    }
}

/// A fitted or true forward GLLiM as a conditional density.
pub struct ForwardDensity {
    prepared: PreparedMixture,
}

impl ForwardDensity {
    pub fn new(params: &ForwardParams) -> Result<Self> {
        Ok(ForwardDensity { prepared: params.prepare()? })
    }

    fn with_workspace<T>(&self, f: impl FnOnce(&mut Workspace) -> T) -> T {
        thread_local! {
            static WS: std::cell::RefCell<Workspace> = std::cell::RefCell::new(Workspace::new());
        }
        WS.with(|cell| f(&mut cell.borrow_mut()))
    }
}

impl CondDensity for ForwardDensity {
    fn response_dim(&self) -> usize {
        self.prepared.out_dim()
    }

    fn covariate_dim(&self) -> usize {
        self.prepared.in_dim()
    }

    fn ln_density(&self, y: &[f64], x: &[f64]) -> f64 {
        self.with_workspace(|ws| self.prepared.ln_conditional_unchecked(y, x, ws))
    }

    fn has_sampler(&self) -> bool {
        true
    }

    fn sample(&self, x: &[f64], rng: &mut ChaCha8Rng, out: &mut [f64]) {
        self.with_workspace(|ws| self.prepared.sample_output(x, rng, ws, out))
    }
}

/// Gaussian `y | x ~ N(B x + m, S)`; the covariate-free case has `B = 0`.
#[derive(Debug, Clone)]
pub struct LinearGaussianCond {
    slope: DMatrix<f64>,
    offset: Vec<f64>,
    kernel: crate::model::GaussianKernel,
}

impl LinearGaussianCond {
    pub fn new(slope: DMatrix<f64>, noise: &GaussianParams) -> Result<Self> {
        if slope.nrows() != noise.dim() {
            return Err(GlomeError::DimensionMismatch { context: "linear gaussian slope", expected: noise.dim(), found: slope.nrows() });
        }
        Ok(LinearGaussianCond {
            slope,
            offset: noise.mean.as_slice().to_vec(),
            kernel: crate::model::GaussianKernel::new(&vec![0.0; noise.dim()], &noise.cov, "covariance")?,
        })
    }

    fn mean(&self, x: &[f64]) -> Vec<f64> {
        (0..self.offset.len())
            .map(|r| self.offset[r] + (0..self.slope.ncols()).map(|c| self.slope[(r, c)] * x[c]).sum::<f64>())
            .collect()
    }
}

impl CondDensity for LinearGaussianCond {
    fn response_dim(&self) -> usize {
        self.offset.len()
    }

    fn covariate_dim(&self) -> usize {
        self.slope.ncols()
    }

    fn ln_density(&self, y: &[f64], x: &[f64]) -> f64 {
        let mut diff: Vec<f64> = y.iter().zip(self.mean(x)).map(|(a, b)| a - b).collect();
        self.kernel.ln_pdf_centered(&mut diff)
    }

    fn has_sampler(&self) -> bool {
        true
    }

    fn sample(&self, x: &[f64], rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let m = self.mean(x);
        self.kernel.sample_around(&m, rng, out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub n_trials: usize,
}

/// `KL(p ‖ q)` between two Gaussians.
pub fn kl_gaussian_closed_form(p: &GaussianParams, q: &GaussianParams) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(GlomeError::DimensionMismatch { context: "kl_gaussian", expected: p.dim(), found: q.dim() });
    }
    let q_inv = spd_inverse(&q.cov, "q covariance")?;
    let d = p.dim() as f64;
    let diff = &q.mean - &p.mean;
    let trace = (&q_inv * &p.cov).trace();
    let maha = (diff.transpose() * &q_inv * &diff)[(0, 0)];
    let ln_det = |m: &DMatrix<f64>, w: &str| -> Result<f64> {
        let l = linalg::cholesky_lower(m, w)?;
        Ok(2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
    };
    let kl = 0.5 * (trace + maha - d + ln_det(&q.cov, "q covariance")? - ln_det(&p.cov, "p covariance")?);
    // Rounding can push the value of identical arguments slightly below zero.
    Ok(kl.max(0.0))
}

/// Runs `term(ln s0(y|x), ln s_hat(y|x))` over `n_y` reference draws per covariate row.
fn mc_terms<F>(s0: &dyn CondDensity, s_hat: &dyn CondDensity, xs: &DMatrix<f64>, n_y: usize, seed: u64, term: F) -> Result<DivergenceEstimate>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    if !s0.has_sampler() {
        return Err(GlomeError::SamplerMissing);
    }
    if n_y < 1 {
        return Err(GlomeError::OutOfRange("n_y must be at least 1".into()));
    }
    if xs.ncols() != s0.covariate_dim() || xs.ncols() != s_hat.covariate_dim() {
        return Err(GlomeError::DimensionMismatch { context: "covariate columns", expected: s0.covariate_dim(), found: xs.ncols() });
    }
    if s0.response_dim() != s_hat.response_dim() {
        return Err(GlomeError::DimensionMismatch { context: "response dimension", expected: s0.response_dim(), found: s_hat.response_dim() });
    }
    let n = xs.nrows();
    if n == 0 {
        return Err(GlomeError::OutOfRange("no covariates".into()));
    }
    let l = s0.response_dim();
    // Per-x (mean, sum of squared deviations); each x has its own RNG stream.
    let per_x: Vec<Result<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = xs.row(i).iter().copied().collect();
            let mut rng = rng::stream(seed, &[i as u64]);
            let mut y = vec![0.0; l];
            let (mut mean, mut m2) = (0.0, 0.0);
            for j in 0..n_y {
                s0.sample(&x, &mut rng, &mut y);
                let t = term(s0.ln_density(&y, &x), s_hat.ln_density(&y, &x));
                if !t.is_finite() {
                    return Err(GlomeError::NonFinite(format!("log-ratio at covariate {i}")));
                }
                let delta = t - mean;
                mean += delta / (j + 1) as f64;
                m2 += delta * (t - mean);
            }
            Ok((mean, m2))
        })
        .collect();
    // Pairwise merge in index order keeps the result independent of thread count.
    let (mut count, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
    let block = n_y as f64;
    for r in per_x {
        let (mean_i, m2_i) = r?;
        let total = count + block;
        let delta = mean_i - mean;
        mean += delta * block / total;
        m2 += m2_i + delta * delta * count * block / total;
        count = total;
    }
    let var = if count > 1.0 { m2 / (count - 1.0) } else { 0.0 };
    Ok(DivergenceEstimate { value: mean, std_error: (var / count).sqrt(), n_x: n, n_y, n_trials: 1 })
}

/// `(1/n) Σ_i (1/n_y) Σ_j ln(s0(y_ij|x_i) / s_hat(y_ij|x_i))`, `y_ij ~ s0(·|x_i)`.
pub fn tensorized_kl_mc(s0: &dyn CondDensity, s_hat: &dyn CondDensity, xs: &DMatrix<f64>, n_y: usize, seed: u64) -> Result<DivergenceEstimate> {
    mc_terms(s0, s_hat, xs, n_y, seed, |l0, l1| l0 - l1)
}

/// `(1/ρ) KL(s0, (1−ρ) s0 + ρ s_hat)` averaged over the covariates.
pub fn tensorized_jkl_mc(s0: &dyn CondDensity, s_hat: &dyn CondDensity, rho: f64, xs: &DMatrix<f64>, n_y: usize, seed: u64) -> Result<DivergenceEstimate> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(GlomeError::OutOfRange(format!("rho = {rho} outside (0, 1)")));
    }
    let (ln_keep, ln_rho) = ((1.0 - rho).ln(), rho.ln());
    mc_terms(s0, s_hat, xs, n_y, seed, move |l0, l1| {
        let r = (l1 - l0).clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP);
        -linalg::log_sum_exp(&[ln_keep, ln_rho + r]) / rho
    })
}

/// Squared Hellinger distance `1 − E_{y~s0}[√(s_hat/s0)]` averaged over the covariates.
pub fn tensorized_hellinger_mc(s0: &dyn CondDensity, s_hat: &dyn CondDensity, xs: &DMatrix<f64>, n_y: usize, seed: u64) -> Result<DivergenceEstimate> {
    mc_terms(s0, s_hat, xs, n_y, seed, |l0, l1| {
        let r = (0.5 * (l1 - l0)).clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP);
        1.0 - r.exp()
    })
}

/// `C_ρ = (1/ρ) min((1−ρ)/ρ, 1) (ln(1 + ρ/(1−ρ)) − ρ)`.
pub fn c_rho(rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(GlomeError::OutOfRange(format!("rho = {rho} outside (0, 1)")));
    }
    let ratio = rho / (1.0 - rho);
    Ok((1.0 / rho) * ((1.0 - rho) / rho).min(1.0) * (ratio.ln_1p() - rho))
}

/// Upper bound `(1/ρ) ln(1/(1−ρ))` on the Jensen-KL divergence.
pub fn jkl_upper_bound(rho: f64) -> f64 {
    -(1.0 - rho).ln() / rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn g1(mean: f64, var: f64) -> GaussianParams {
        GaussianParams::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var)).unwrap()
    }

    #[test]
    fn closed_form_kl_examples() {
        assert_eq!(kl_gaussian_closed_form(&g1(0.3, 2.0), &g1(0.3, 2.0)).unwrap(), 0.0);
        assert!((kl_gaussian_closed_form(&g1(0.0, 1.0), &g1(1.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        let v = kl_gaussian_closed_form(&g1(0.0, 1.0), &g1(0.0, 4.0)).unwrap();
        assert!((v - 0.5 * (0.25 - 1.0 + 4f64.ln())).abs() < 1e-15);
        assert!((v - 0.318_147).abs() < 1e-6);
    }

    #[test]
    fn c_rho_values() {
        assert!((c_rho(0.5).unwrap() - 2.0 * (2f64.ln() - 0.5)).abs() < 1e-15);
        assert!((c_rho(0.5).unwrap() - 0.386_294).abs() < 1e-6);
        assert!((c_rho(0.25).unwrap() - 4.0 * ((4.0f64 / 3.0).ln() - 0.25)).abs() < 1e-15);
        assert!((c_rho(0.25).unwrap() - 0.150_728).abs() < 1e-6);
        assert!(c_rho(1e-6).unwrap().abs() < 1e-5);
        assert!(c_rho(0.0).is_err());
        assert!(c_rho(1.0).is_err());
    }

    #[test]
    fn identical_densities_give_exact_zero() {
        let s = LinearGaussianCond::new(DMatrix::from_element(1, 1, 0.7), &g1(0.1, 0.3)).unwrap();
        let xs = DMatrix::from_fn(50, 1, |i, _| i as f64 / 50.0);
        assert_eq!(tensorized_kl_mc(&s, &s, &xs, 20, 1).unwrap().value, 0.0);
        assert_eq!(tensorized_jkl_mc(&s, &s, 0.5, &xs, 20, 1).unwrap().value, 0.0);
        assert_eq!(tensorized_hellinger_mc(&s, &s, &xs, 20, 1).unwrap().value, 0.0);
    }

    struct NoSampler;
    impl CondDensity for NoSampler {
        fn response_dim(&self) -> usize {
            1
        }
        fn covariate_dim(&self) -> usize {
            1
        }
        fn ln_density(&self, _y: &[f64], _x: &[f64]) -> f64 {
            0.0
        }
    }

    #[test]
    fn missing_sampler_is_reported() {
        let xs = DMatrix::zeros(3, 1);
        assert!(matches!(tensorized_kl_mc(&NoSampler, &NoSampler, &xs, 2, 0), Err(GlomeError::SamplerMissing)));
    }
}
