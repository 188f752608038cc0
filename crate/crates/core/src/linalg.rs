//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{GlomeError, Result};

/// Eigenvalue floor applied to every covariance matrix.
pub const EIGEN_FLOOR: f64 = 1e-8;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn eigen_tolerance(max_abs: f64) -> f64 {
    64.0 * f64::EPSILON * max_abs.max(1.0)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 1 {
        return (m[(0, 0)], m[(0, 0)]);
    }
    let eig = SymmetricEigen::new(m.clone());
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Checks symmetry and the eigenvalue floor.
pub fn check_spd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(GlomeError::InvalidParams(format!("{what} is not square")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GlomeError::NonFinite(what.to_string()));
    }
    let scale = m.amax();
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale.max(1.0) {
                return Err(GlomeError::InvalidParams(format!("{what} is not symmetric")));
            }
        }
    }
    let (lo, hi) = eigen_range(m);
    if lo < EIGEN_FLOOR - eigen_tolerance(hi.abs()) {
        return Err(GlomeError::NotPositiveDefinite(what.to_string()));
    }
    Ok(())
}

/// Clamps the spectrum of a symmetric matrix into `[lo, hi]`.
///
/// Matrices already inside the range are returned unchanged.
pub fn clamp_spectrum(m: &DMatrix<f64>, lo: f64, hi: Option<f64>) -> DMatrix<f64> {
    let m = symmetrize(m);
    let upper = hi.unwrap_or(f64::INFINITY);
    if m.nrows() == 1 {
        return DMatrix::from_element(1, 1, m[(0, 0)].clamp(lo, upper));
    }
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|&v| v >= lo && v <= upper) {
        return m;
    }
    let clamped = eig.eigenvalues.map(|v| v.clamp(lo, upper));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    symmetrize(&rebuilt)
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| GlomeError::NotPositiveDefinite(what.to_string()))?;
    Ok(symmetrize(&chol.inverse()))
}

/// Lower Cholesky factor.
pub fn cholesky_lower(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| GlomeError::NotPositiveDefinite(what.to_string()))
}

/// Solves `L z = v` in place for lower-triangular `L`, returning `|z|^2`.
#[inline]
pub fn forward_solve_sq_norm(lower: &DMatrix<f64>, v: &mut [f64]) -> f64 {
    let d = v.len();
    let mut sq = 0.0;
    for r in 0..d {
        let mut acc = v[r];
        for c in 0..r {
            acc -= lower[(r, c)] * v[c];
        }
        let z = acc / lower[(r, r)];
        v[r] = z;
        sq += z * z;
    }
    sq
}

/// Numerically stable `ln Σ exp(v)`.
#[inline]
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn max_relative_diff_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}

pub fn max_relative_diff_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let scale = a.amax().max(b.amax()).max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}
