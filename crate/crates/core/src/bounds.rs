//! Theoretical quantities: penalty lower bound, complexity bound, the κ₀
//! constant of the weak oracle inequality, and simplex covering numbers.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::divergence::c_rho;
use crate::error::{GlomeError, Result};

/// Constants entering κ₀ and the penalty shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConfig {
    /// ρ ∈ (0, 1) of the Jensen-KL loss.
    pub rho: f64,
    /// Leading constant C₁ > 1 of the oracle inequality.
    pub c1: f64,
    /// ε_d > 0.
    pub eps_d: f64,
    /// The constant 𝔠 combining the gate and expert entropy constants.
    pub frak_c: f64,
    /// Constant inside κ′₁ (at most 27).
    pub inner_kappa: f64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig { rho: 0.5, c1: 2.0, eps_d: 1.0, frak_c: 1.0, inner_kappa: 27.0 }
    }
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(GlomeError::OutOfRange(format!("rho = {} outside (0, 1)", self.rho)));
        }
        if !(self.c1 > 1.0) {
            return Err(GlomeError::OutOfRange(format!("C1 = {} must exceed 1", self.c1)));
        }
        if !(self.eps_d > 0.0) {
            return Err(GlomeError::OutOfRange(format!("eps_d = {} must be positive", self.eps_d)));
        }
        if !(self.frak_c >= 0.0) {
            return Err(GlomeError::OutOfRange(format!("frak_c = {} must be nonnegative", self.frak_c)));
        }
        if !(self.inner_kappa > 0.0 && self.inner_kappa <= 27.0) {
            return Err(GlomeError::OutOfRange(format!("inner_kappa = {} outside (0, 27]", self.inner_kappa)));
        }
        Ok(())
    }
}

/// `dim(W_K) = K − 1 + K L + K L(L+1)/2`.
pub fn dim_gating_space(k: usize, l: usize) -> usize {
    k - 1 + k * l + k * l * (l + 1) / 2
}

/// `K (2πe)^{K/2} / δ^{K−1}`: covering number bound of the (K−1)-simplex in sup-norm.
pub fn simplex_covering_bound(k: usize, delta: f64) -> Result<f64> {
    if k < 1 {
        return Err(GlomeError::OutOfRange("K must be at least 1".into()));
    }
    if !(delta > 0.0) {
        return Err(GlomeError::OutOfRange(format!("delta = {delta} must be positive")));
    }
    let kf = k as f64;
    Ok(kf * (2.0 * PI * E).powf(kf / 2.0) / delta.powi(k as i32 - 1))
}

/// `dim (2(√C + √π)² + (ln(n / ((√C + √π)² dim)))₊)`, an upper bound on `n σ²_m`.
pub fn complexity_bound(dim: usize, c_m: f64, n: usize) -> f64 {
    let root = (c_m.sqrt() + PI.sqrt()).powi(2);
    let d = dim as f64;
    let log_term = (n as f64 / (root * d)).ln().max(0.0);
    d * (2.0 * root + log_term)
}

/// `κ (complexity_bound(dim, 𝔠, n) + z)`.
pub fn penalty_lower_bound(dim: usize, n: usize, frak_c: f64, z: f64, kappa: f64) -> f64 {
    kappa * (complexity_bound(dim, frak_c, n) + z)
}

/// The intermediate constants `(κ′₀, κ′₁, κ′₂)`.
pub fn kappa_primes(cfg: &TheoryConfig) -> (f64, f64, f64) {
    let rho = cfg.rho;
    let k0 = 2.0 * (2.0 + cfg.eps_d) / (1.0 + cfg.eps_d);
    let scale = 1.0 / (rho * (1.0 - rho)).sqrt();
    let k1 = scale * (3.0 * cfg.inner_kappa * 2f64.sqrt() + 12.0 + 16.0 * ((1.0 - rho) / rho).sqrt());
    let k2 = scale * (42.0 + 3.0 / (4.0 * k0.sqrt()));
    (k0, k1, k2)
}

/// Threshold κ₀ above which the penalty multiplier yields the oracle inequality.
pub fn kappa0(cfg: &TheoryConfig) -> Result<f64> {
    cfg.validate()?;
    let rho = cfg.rho;
    let c_rho = c_rho(rho)?;
    let eps_pen = 1.0 - 1.0 / cfg.c1;
    let (k0, k1, k2) = kappa_primes(cfg);
    let s = (k1 + k2).powi(2);
    let root = (1.0 + 72.0 * c_rho * eps_pen / (rho * k0 * s)).sqrt();
    Ok(k0 * s * (root + 1.0) / (2.0 * c_rho * eps_pen) + 18.0 / rho)
}
