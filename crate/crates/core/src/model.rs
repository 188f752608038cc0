//! Parameter types, Gaussian kernels, gating and the GLoME / GLLiM conditional
//! densities, plus the inverse-to-forward parameter correspondence.
//!
//! A [`GllimParams`] value describes a gated affine mixture `p(out | in)`:
//! gates are Gaussian in the *input* space and experts are Gaussian with an
//! affine mean in the *output* space. [`InverseParams`] reads it as `p(x | y)`
//! (input `y` of dimension L, output `x` of dimension D); [`ForwardParams`]
//! reads it as `p(y | x)`.

use std::f64::consts::PI;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GlomeError, Result};
use crate::linalg::{self, check_spd, cholesky_lower, forward_solve_sq_norm, spd_inverse, symmetrize};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Constraint applied to the expert noise covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovStructure {
    #[default]
    Full,
    Diagonal,
    Isotropic,
}

impl CovStructure {
    /// Projects a (floored) covariance onto the structure.
    pub fn project(self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            CovStructure::Full => symmetrize(m),
            CovStructure::Diagonal => DMatrix::from_diagonal(&m.diagonal()),
            CovStructure::Isotropic => {
                let d = m.nrows();
                DMatrix::identity(d, d) * (m.trace() / d as f64)
            }
        }
    }
}

/// Which conditional a parameter set is read as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `p(x | y)`: gates on the response, experts produce the covariate.
    Inverse,
    /// `p(y | x)`: gates on the covariate, experts produce the response.
    Forward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianParams {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(GlomeError::DimensionMismatch {
                context: "gaussian covariance",
                expected: mean.len(),
                found: cov.nrows(),
            });
        }
        check_spd(&cov, "covariance")?;
        Ok(GaussianParams { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `ln Φ_d(point; mean, cov)` through a Cholesky factorization of `cov`.
pub fn gaussian_logpdf(point: &DVector<f64>, params: &GaussianParams) -> Result<f64> {
    if point.len() != params.dim() {
        return Err(GlomeError::DimensionMismatch {
            context: "gaussian_logpdf point",
            expected: params.dim(),
            found: point.len(),
        });
    }
    let kernel = GaussianKernel::new(params.mean.as_slice(), &params.cov, "covariance")?;
    let mut scratch = vec![0.0; point.len()];
    Ok(kernel.ln_pdf(point.as_slice(), &mut scratch))
}

/// A Gaussian with its Cholesky factor and normalizing constant precomputed.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    mean: Vec<f64>,
    lower: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianKernel {
    pub fn new(mean: &[f64], cov: &DMatrix<f64>, what: &str) -> Result<Self> {
        let lower = cholesky_lower(cov, what)?;
        let d = mean.len();
        let log_det: f64 = 2.0 * (0..d).map(|i| lower[(i, i)].ln()).sum::<f64>();
        Ok(GaussianKernel {
            mean: mean.to_vec(),
            lower,
            log_norm: -0.5 * (d as f64 * LN_2PI + log_det),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Log-density of an already centered point; `diff` is overwritten.
    #[inline]
    pub fn ln_pdf_centered(&self, diff: &mut [f64]) -> f64 {
        self.log_norm - 0.5 * forward_solve_sq_norm(&self.lower, diff)
    }

    #[inline]
    pub fn ln_pdf(&self, point: &[f64], scratch: &mut [f64]) -> f64 {
        for ((s, p), m) in scratch.iter_mut().zip(point).zip(&self.mean) {
            *s = p - m;
        }
        self.ln_pdf_centered(&mut scratch[..point.len()])
    }

    /// Writes `center + L z`, `z ~ N(0, I)`, into `out`.
    pub fn sample_around<R: Rng + ?Sized>(&self, center: &[f64], rng: &mut R, out: &mut [f64]) {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for r in 0..d {
            let mut acc = center[r];
            for c in 0..=r {
                acc += self.lower[(r, c)] * z[c];
            }
            out[r] = acc;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let center = self.mean.clone();
        self.sample_around(&center, rng, out);
    }
}

/// Parameters of a Gaussian-gated mixture of affine Gaussian experts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamsWire", try_from = "ParamsWire")]
pub struct GllimParams {
    /// Mixing proportions π.
    pub weights: Vec<f64>,
    /// Gate means (input space).
    pub gate_means: Vec<DVector<f64>>,
    /// Gate covariances (input space).
    pub gate_covs: Vec<DMatrix<f64>>,
    /// Expert slopes, `out_dim × in_dim`.
    pub slopes: Vec<DMatrix<f64>>,
    /// Expert intercepts (output space).
    pub intercepts: Vec<DVector<f64>>,
    /// Expert noise covariances (output space).
    pub noise_covs: Vec<DMatrix<f64>>,
    pub cov_structure: CovStructure,
}

impl GllimParams {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn in_dim(&self) -> usize {
        self.gate_means.first().map_or(0, |c| c.len())
    }

    pub fn out_dim(&self) -> usize {
        self.intercepts.first().map_or(0, |b| b.len())
    }

    /// Checks shapes, normalization and the covariance eigenvalue floor.
    pub fn validate(&self) -> Result<()> {
        let k = self.n_components();
        if k == 0 {
            return Err(GlomeError::InvalidParams("no components".into()));
        }
        for (name, len) in [
            ("gate_means", self.gate_means.len()),
            ("gate_covs", self.gate_covs.len()),
            ("slopes", self.slopes.len()),
            ("intercepts", self.intercepts.len()),
            ("noise_covs", self.noise_covs.len()),
        ] {
            if len != k {
                return Err(GlomeError::InvalidParams(format!("{name} has {len} entries, expected {k}")));
            }
        }
        let (din, dout) = (self.in_dim(), self.out_dim());
        if din == 0 || dout == 0 {
            return Err(GlomeError::InvalidParams("zero dimension".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) || (sum - 1.0).abs() > 1e-12 {
            return Err(GlomeError::InvalidParams(format!(
                "weights must be positive and sum to 1 (sum = {sum})"
            )));
        }
        for j in 0..k {
            let shape_ok = self.gate_means[j].len() == din
                && self.gate_covs[j].shape() == (din, din)
                && self.slopes[j].shape() == (dout, din)
                && self.intercepts[j].len() == dout
                && self.noise_covs[j].shape() == (dout, dout);
            if !shape_ok {
                return Err(GlomeError::InvalidParams(format!("component {j} has inconsistent shapes")));
            }
            if self.gate_means[j].iter().chain(self.intercepts[j].iter()).chain(self.slopes[j].iter()).any(|v| !v.is_finite()) {
                return Err(GlomeError::NonFinite(format!("component {j} parameters")));
            }
            check_spd(&self.gate_covs[j], &format!("gate covariance {j}"))?;
            check_spd(&self.noise_covs[j], &format!("noise covariance {j}"))?;
        }
        Ok(())
    }

    /// Reorders components: component `j` of the result is component `perm[j]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> GllimParams {
        GllimParams {
            weights: perm.iter().map(|&j| self.weights[j]).collect(),
            gate_means: perm.iter().map(|&j| self.gate_means[j].clone()).collect(),
            gate_covs: perm.iter().map(|&j| self.gate_covs[j].clone()).collect(),
            slopes: perm.iter().map(|&j| self.slopes[j].clone()).collect(),
            intercepts: perm.iter().map(|&j| self.intercepts[j].clone()).collect(),
            noise_covs: perm.iter().map(|&j| self.noise_covs[j].clone()).collect(),
            cov_structure: self.cov_structure,
        }
    }

    /// Largest relative discrepancy across every parameter block.
    pub fn max_relative_diff(&self, other: &GllimParams) -> f64 {
        if self.n_components() != other.n_components() {
            return f64::INFINITY;
        }
        let w = linalg::max_relative_diff_vec(
            &DVector::from_vec(self.weights.clone()),
            &DVector::from_vec(other.weights.clone()),
        );
        let mut worst = w;
        for j in 0..self.n_components() {
            worst = worst
                .max(linalg::max_relative_diff_vec(&self.gate_means[j], &other.gate_means[j]))
                .max(linalg::max_relative_diff_mat(&self.gate_covs[j], &other.gate_covs[j]))
                .max(linalg::max_relative_diff_mat(&self.slopes[j], &other.slopes[j]))
                .max(linalg::max_relative_diff_vec(&self.intercepts[j], &other.intercepts[j]))
                .max(linalg::max_relative_diff_mat(&self.noise_covs[j], &other.noise_covs[j]));
        }
        worst
    }

    /// Precomputes factorizations for repeated density evaluation.
    pub fn prepare(&self) -> Result<PreparedMixture> {
        PreparedMixture::new(self)
    }
}

macro_rules! role_newtype {
    ($name:ident, $doc:literal) => {
        #[doc = $doc]
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub GllimParams);

        impl Deref for $name {
            type Target = GllimParams;
            fn deref(&self) -> &GllimParams {
                &self.0
            }
        }

        impl $name {
            pub fn new(params: GllimParams) -> Result<Self> {
                params.validate()?;
                Ok($name(params))
            }

            pub fn into_inner(self) -> GllimParams {
                self.0
            }
        }
    };
}

role_newtype!(
    InverseParams,
    "GLLiM parameters read as `p(x | y)`: gates on y (dimension L), experts `A_k y + b_k` in x (dimension D)."
);
role_newtype!(
    ForwardParams,
    "GLLiM parameters read as `p(y | x)`: gates on x (dimension D), experts `A*_k x + b*_k` in y (dimension L)."
);

impl InverseParams {
    /// Reinterprets the parameters with the roles of X and Y exchanged.
    pub fn swap_roles(self) -> ForwardParams {
        ForwardParams(self.0)
    }

    /// Dimension L of the gating (response) space.
    pub fn l(&self) -> usize {
        self.in_dim()
    }

    /// Dimension D of the expert (covariate) space.
    pub fn d(&self) -> usize {
        self.out_dim()
    }
}

impl ForwardParams {
    /// Reinterprets the parameters with the roles of X and Y exchanged.
    pub fn swap_roles(self) -> InverseParams {
        InverseParams(self.0)
    }

    pub fn d(&self) -> usize {
        self.in_dim()
    }

    pub fn l(&self) -> usize {
        self.out_dim()
    }
}

/// Optional projection bounds on fitted parameters.
///
/// Only `min_weight` is active by default; every other bound is off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBounds {
    /// Floor a_π on every mixing proportion.
    pub min_weight: f64,
    /// Box bound A_c on gate-mean coordinates.
    pub gate_mean_abs_max: Option<f64>,
    /// Spectrum bounds (a_Γ, A_Γ) on gate covariances.
    pub gate_eig_min: Option<f64>,
    pub gate_eig_max: Option<f64>,
    /// Box bound on expert slope and intercept entries.
    pub expert_coef_abs_max: Option<f64>,
    /// Spectrum bounds (λ_-, λ_+) on noise covariances.
    pub noise_eig_min: Option<f64>,
    pub noise_eig_max: Option<f64>,
}

impl Default for ParameterBounds {
    fn default() -> Self {
        ParameterBounds {
            min_weight: 1e-6,
            gate_mean_abs_max: None,
            gate_eig_min: None,
            gate_eig_max: None,
            expert_coef_abs_max: None,
            noise_eig_min: None,
            noise_eig_max: None,
        }
    }
}

impl ParameterBounds {
    /// Floors the weights at `min_weight` and renormalizes.
    pub fn project_weights(&self, weights: &mut [f64]) {
        let k = weights.len() as f64;
        let floor = self.min_weight.min(1.0 / k);
        if weights.iter().any(|&w| w < floor) {
            for w in weights.iter_mut() {
                *w = w.max(floor);
            }
        }
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
    }

    pub fn project_gate_cov(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let lo = self.gate_eig_min.unwrap_or(0.0).max(linalg::EIGEN_FLOOR);
        linalg::clamp_spectrum(m, lo, self.gate_eig_max)
    }

    pub fn project_noise_cov(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let lo = self.noise_eig_min.unwrap_or(0.0).max(linalg::EIGEN_FLOOR);
        linalg::clamp_spectrum(m, lo, self.noise_eig_max)
    }

    pub fn project_gate_mean(&self, v: &mut DVector<f64>) {
        if let Some(bound) = self.gate_mean_abs_max {
            v.iter_mut().for_each(|c| *c = c.clamp(-bound, bound));
        }
    }

    pub fn project_expert(&self, slope: &mut DMatrix<f64>, intercept: &mut DVector<f64>) {
        if let Some(bound) = self.expert_coef_abs_max {
            slope.iter_mut().for_each(|c| *c = c.clamp(-bound, bound));
            intercept.iter_mut().for_each(|c| *c = c.clamp(-bound, bound));
        }
    }
}

/// One mixture component with factorizations precomputed.
#[derive(Debug, Clone)]
struct PreparedComponent {
    ln_weight: f64,
    gate: GaussianKernel,
    slope: DMatrix<f64>,
    intercept: Vec<f64>,
    noise: GaussianKernel,
}

/// Reusable buffers for [`PreparedMixture`] evaluations.
#[derive(Debug, Clone)]
pub struct Workspace {
    terms: Vec<f64>,
    gates: Vec<f64>,
    scratch: Vec<f64>,
}

impl Workspace {
    pub fn new() -> Self {
        Workspace { terms: Vec::new(), gates: Vec::new(), scratch: Vec::new() }
    }

    /// Grows the buffers to hold `k` components in dimension `dim`.
    pub fn ensure(&mut self, k: usize, dim: usize) {
        if self.terms.len() < k {
            self.terms.resize(k, 0.0);
            self.gates.resize(k, 0.0);
        }
        if self.scratch.len() < dim {
            self.scratch.resize(dim, 0.0);
        }
    }
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace::new()
    }
}

/// A parameter set ready for fast repeated evaluation.
#[derive(Debug, Clone)]
pub struct PreparedMixture {
    comps: Vec<PreparedComponent>,
    in_dim: usize,
    out_dim: usize,
}

impl PreparedMixture {
    pub fn new(params: &GllimParams) -> Result<Self> {
        params.validate()?;
        let comps = (0..params.n_components())
            .map(|j| {
                Ok(PreparedComponent {
                    ln_weight: params.weights[j].ln(),
                    gate: GaussianKernel::new(params.gate_means[j].as_slice(), &params.gate_covs[j], "gate covariance")?,
                    slope: params.slopes[j].clone(),
                    intercept: params.intercepts[j].as_slice().to_vec(),
                    noise: GaussianKernel::new(
                        &vec![0.0; params.out_dim()],
                        &params.noise_covs[j],
                        "noise covariance",
                    )?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedMixture {
            comps,
            in_dim: params.in_dim(),
            out_dim: params.out_dim(),
        })
    }

    pub fn n_components(&self) -> usize {
        self.comps.len()
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn workspace(&self) -> Workspace {
        let mut ws = Workspace::new();
        ws.ensure(self.comps.len(), self.in_dim.max(self.out_dim));
        ws
    }

    fn check_dims(&self, output: Option<&[f64]>, input: &[f64]) -> Result<()> {
        if input.len() != self.in_dim {
            return Err(GlomeError::DimensionMismatch {
                context: "gating input",
                expected: self.in_dim,
                found: input.len(),
            });
        }
        if let Some(out) = output {
            if out.len() != self.out_dim {
                return Err(GlomeError::DimensionMismatch {
                    context: "expert output",
                    expected: self.out_dim,
                    found: out.len(),
                });
            }
        }
        Ok(())
    }

    /// `ln π_k + ln Φ(input; c_k, Γ_k)` for every k.
    #[inline]
    fn gate_terms(&self, input: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        for (t, c) in out.iter_mut().zip(&self.comps) {
            *t = c.ln_weight + c.gate.ln_pdf(input, scratch);
        }
    }

    #[inline]
    fn expert_term(&self, k: usize, output: &[f64], input: &[f64], scratch: &mut [f64]) -> f64 {
        let c = &self.comps[k];
        for r in 0..self.out_dim {
            let mut mean = c.intercept[r];
            for s in 0..self.in_dim {
                mean += c.slope[(r, s)] * input[s];
            }
            scratch[r] = output[r] - mean;
        }
        c.noise.ln_pdf_centered(&mut scratch[..self.out_dim])
    }

    /// Log gating probabilities at `input`, written into `ws` and returned.
    pub fn ln_gating<'w>(&self, input: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        let k = self.comps.len();
        ws.ensure(k, self.in_dim.max(self.out_dim));
        let gates = &mut ws.gates[..k];
        self.gate_terms(input, gates, &mut ws.scratch);
        let norm = linalg::log_sum_exp(gates);
        gates.iter_mut().for_each(|g| *g -= norm);
        &ws.gates[..k]
    }

    /// `ln p(output | input)` without dimension checks.
    #[inline]
    pub fn ln_conditional_unchecked(&self, output: &[f64], input: &[f64], ws: &mut Workspace) -> f64 {
        let k = self.comps.len();
        self.ln_gating(input, ws);
        for j in 0..k {
            ws.terms[j] = ws.gates[j] + self.expert_term(j, output, input, &mut ws.scratch);
        }
        linalg::log_sum_exp(&ws.terms[..k])
    }

    pub fn ln_conditional(&self, output: &[f64], input: &[f64], ws: &mut Workspace) -> Result<f64> {
        self.check_dims(Some(output), input)?;
        Ok(self.ln_conditional_unchecked(output, input, ws))
    }

    /// Joint log terms `ln π_k + ln Φ(input; c_k, Γ_k) + ln Φ(output; A_k input + b_k, Σ_k)`.
    #[inline]
    pub fn joint_terms(&self, output: &[f64], input: &[f64], terms: &mut [f64], scratch: &mut [f64]) {
        self.gate_terms(input, terms, scratch);
        for (k, t) in terms.iter_mut().enumerate() {
            *t += self.expert_term(k, output, input, scratch);
        }
    }

    /// Draws an output given `input`: component from the gates, then the expert.
    pub fn sample_output<R: Rng + ?Sized>(&self, input: &[f64], rng: &mut R, ws: &mut Workspace, out: &mut [f64]) {
        let ln_g = self.ln_gating(input, ws);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.comps.len() - 1;
        for (k, g) in ln_g.iter().enumerate() {
            acc += g.exp();
            if u < acc {
                chosen = k;
                break;
            }
        }
        self.sample_expert(chosen, input, rng, out);
    }

    /// Draws from expert `k` at `input`.
    pub fn sample_expert<R: Rng + ?Sized>(&self, k: usize, input: &[f64], rng: &mut R, out: &mut [f64]) {
        let c = &self.comps[k];
        let mean: Vec<f64> = (0..self.out_dim)
            .map(|r| c.intercept[r] + (0..self.in_dim).map(|s| c.slope[(r, s)] * input[s]).sum::<f64>())
            .collect();
        c.noise.sample_around(&mean, rng, out);
    }

    /// Draws `(component, input)` from the gate hierarchy `Z ~ π`, `input | Z ~ Φ(c_Z, Γ_Z)`.
    pub fn sample_input<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.comps.len() - 1;
        for (k, c) in self.comps.iter().enumerate() {
            acc += c.ln_weight.exp();
            if u < acc {
                chosen = k;
                break;
            }
        }
        self.comps[chosen].gate.sample(rng, out);
        chosen
    }
}

fn dvec(v: &DVector<f64>) -> &[f64] {
    v.as_slice()
}

/// Gating probabilities `g_k(y; ω)` of an inverse model at `y`.
pub fn gating_probs(y: &DVector<f64>, params: &InverseParams) -> Result<DVector<f64>> {
    let prepared = params.prepare()?;
    prepared.check_dims(None, dvec(y))?;
    let mut ws = prepared.workspace();
    let ln_g = prepared.ln_gating(dvec(y), &mut ws);
    let mut g: Vec<f64> = ln_g.iter().map(|v| v.exp()).collect();
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    Ok(DVector::from_vec(g))
}

/// `ln p(x | y)` under an inverse GLLiM model.
pub fn inverse_conditional_logpdf(x: &DVector<f64>, y: &DVector<f64>, params: &InverseParams) -> Result<f64> {
    let prepared = params.prepare()?;
    let mut ws = prepared.workspace();
    prepared.ln_conditional(dvec(x), dvec(y), &mut ws)
}

/// `ln p(y | x)` under a forward GLLiM model.
pub fn forward_conditional_logpdf(y: &DVector<f64>, x: &DVector<f64>, params: &ForwardParams) -> Result<f64> {
    let prepared = params.prepare()?;
    let mut ws = prepared.workspace();
    prepared.ln_conditional(dvec(y), dvec(x), &mut ws)
}

/// Maps one gated affine mixture onto the mixture with input and output exchanged.
///
/// Per component: `c* = A c + b`, `Γ* = Σ + A Γ Aᵀ`, `Σ* = (Γ⁻¹ + Aᵀ Σ⁻¹ A)⁻¹`,
/// `A* = Σ* Aᵀ Σ⁻¹`, `b* = Σ* (Γ⁻¹ c − Aᵀ Σ⁻¹ b)`, `π* = π`.
pub fn exchange_roles(params: &GllimParams) -> Result<GllimParams> {
    params.validate()?;
    let k = params.n_components();
    let mut out = GllimParams {
        weights: params.weights.clone(),
        gate_means: Vec::with_capacity(k),
        gate_covs: Vec::with_capacity(k),
        slopes: Vec::with_capacity(k),
        intercepts: Vec::with_capacity(k),
        noise_covs: Vec::with_capacity(k),
        cov_structure: CovStructure::Full,
    };
    for j in 0..k {
        let (c, gamma, a, b, sigma) = (
            &params.gate_means[j],
            &params.gate_covs[j],
            &params.slopes[j],
            &params.intercepts[j],
            &params.noise_covs[j],
        );
        if a.iter().all(|&v| v == 0.0) {
            // Decoupled experts: the blocks swap verbatim.
            out.gate_means.push(b.clone());
            out.gate_covs.push(sigma.clone());
            out.slopes.push(DMatrix::zeros(a.ncols(), a.nrows()));
            out.intercepts.push(c.clone());
            out.noise_covs.push(gamma.clone());
            continue;
        }
        let gamma_inv = spd_inverse(gamma, &format!("gate covariance {j}"))?;
        let sigma_inv = spd_inverse(sigma, &format!("noise covariance {j}"))?;
        let at_sigma_inv = a.transpose() * &sigma_inv;
        let precision = symmetrize(&(&gamma_inv + &at_sigma_inv * a));
        let sigma_star = spd_inverse(&precision, &format!("mapped noise precision {j}"))?;
        let gamma_star = symmetrize(&(sigma + a * gamma * a.transpose()));
        out.gate_means.push(a * c + b);
        out.slopes.push(&sigma_star * &at_sigma_inv);
        out.intercepts.push(&sigma_star * (&gamma_inv * c - &at_sigma_inv * b));
        out.gate_covs.push(gamma_star);
        out.noise_covs.push(sigma_star);
    }
    out.validate()?;
    Ok(out)
}

/// Forward parameters `ψ*` implied by inverse parameters `ψ`.
pub fn inverse_to_forward(params: &InverseParams) -> Result<ForwardParams> {
    exchange_roles(params).map(ForwardParams)
}

/// Inverse parameters implied by forward parameters (the same map, roles exchanged).
pub fn forward_to_inverse(params: &ForwardParams) -> Result<InverseParams> {
    exchange_roles(params).map(InverseParams)
}

/// Paired covariate / response sample, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    l: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from row-major buffers of shape n×D and n×L.
    pub fn from_rows(n: usize, d: usize, l: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(GlomeError::TooFewSamples { n: 0, required: 1 });
        }
        if d == 0 || l == 0 {
            return Err(GlomeError::InvalidParams("dataset dimensions must be positive".into()));
        }
        if x.len() != n * d {
            return Err(GlomeError::DimensionMismatch { context: "dataset x", expected: n * d, found: x.len() });
        }
        if y.len() != n * l {
            return Err(GlomeError::DimensionMismatch { context: "dataset y", expected: n * l, found: y.len() });
        }
        if let Some(pos) = x.iter().chain(&y).position(|v| !v.is_finite()) {
            return Err(GlomeError::NonFinite(format!("dataset entry {pos}")));
        }
        Ok(Dataset { n, d, l, x, y })
    }

    pub fn from_matrices(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(GlomeError::DimensionMismatch {
                context: "dataset rows",
                expected: x.nrows(),
                found: y.nrows(),
            });
        }
        let rows = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
        Dataset::from_rows(x.nrows(), x.ncols(), y.ncols(), rows(x), rows(y))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn l(&self) -> usize {
        self.l
    }

    #[inline]
    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i * self.l..(i + 1) * self.l]
    }

    pub fn x_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.d, &self.x)
    }

    pub fn y_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.l, &self.y)
    }

    /// Exchanges the covariate and response blocks.
    pub fn swap_roles(&self) -> Dataset {
        Dataset { n: self.n, d: self.l, l: self.d, x: self.y.clone(), y: self.x.clone() }
    }

    /// Keeps the rows listed in `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Dataset> {
        let x = idx.iter().flat_map(|&i| self.x_row(i).iter().copied()).collect();
        let y = idx.iter().flat_map(|&i| self.y_row(i).iter().copied()).collect();
        Dataset::from_rows(idx.len(), self.d, self.l, x, y)
    }
}

/// `Σ_i ln p(· | ·)` over the sample in the requested direction.
///
/// `Inverse` evaluates `ln p(x_i | y_i)`; `Forward` evaluates `ln p(y_i | x_i)`.
pub fn log_likelihood(data: &Dataset, params: &GllimParams, direction: Direction) -> Result<f64> {
    let prepared = params.prepare()?;
    let (in_dim, out_dim) = match direction {
        Direction::Inverse => (data.l(), data.d()),
        Direction::Forward => (data.d(), data.l()),
    };
    if prepared.in_dim() != in_dim {
        return Err(GlomeError::DimensionMismatch { context: "log_likelihood input", expected: prepared.in_dim(), found: in_dim });
    }
    if prepared.out_dim() != out_dim {
        return Err(GlomeError::DimensionMismatch { context: "log_likelihood output", expected: prepared.out_dim(), found: out_dim });
    }
    let mut ws = prepared.workspace();
    let mut total = 0.0;
    for i in 0..data.n() {
        let v = match direction {
            Direction::Inverse => prepared.ln_conditional_unchecked(data.x_row(i), data.y_row(i), &mut ws),
            Direction::Forward => prepared.ln_conditional_unchecked(data.y_row(i), data.x_row(i), &mut ws),
        };
        if !v.is_finite() {
            return Err(GlomeError::NonFinite(format!("conditional log-density at sample {i}")));
        }
        total += v;
    }
    Ok(total)
}

/// Monomial feature expansion, turning affine experts into polynomial ones.
///
/// Gates then act on the expanded features as well.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolynomialFeatures {
    pub degree: usize,
}

impl PolynomialFeatures {
    /// All monomials of total degree `1..=degree`, graded then lexicographic.
    pub fn expand(&self, v: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        let mut exps = vec![0usize; v.len()];
        for deg in 1..=self.degree {
            Self::push_degree(v, deg, 0, &mut exps, &mut out);
        }
        out
    }

    fn push_degree(v: &[f64], remaining: usize, start: usize, exps: &mut [usize], out: &mut Vec<f64>) {
        if remaining == 0 {
            out.push(v.iter().zip(exps.iter()).map(|(x, &e)| x.powi(e as i32)).product());
            return;
        }
        for j in start..v.len() {
            exps[j] += 1;
            Self::push_degree(v, remaining - 1, j, exps, out);
            exps[j] -= 1;
        }
    }

    /// Replaces the gating block `y` of a dataset by its monomial expansion.
    pub fn expand_responses(&self, data: &Dataset) -> Result<Dataset> {
        let mut y = Vec::new();
        for i in 0..data.n() {
            y.extend(self.expand(data.y_row(i)));
        }
        let l = y.len() / data.n();
        Dataset::from_rows(data.n(), data.d(), l, data.x.clone(), y)
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsWire {
    weights: Vec<f64>,
    gate_means: Vec<Vec<f64>>,
    gate_covs: Vec<Vec<Vec<f64>>>,
    slopes: Vec<Vec<Vec<f64>>>,
    intercepts: Vec<Vec<f64>>,
    noise_covs: Vec<Vec<Vec<f64>>>,
    cov_structure: CovStructure,
}

fn mat_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows_mat(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != nc) {
        return Err("ragged matrix".into());
    }
    Ok(DMatrix::from_row_iterator(nr, nc, rows.iter().flatten().copied()))
}

impl From<GllimParams> for ParamsWire {
    fn from(p: GllimParams) -> Self {
        ParamsWire {
            weights: p.weights,
            gate_means: p.gate_means.iter().map(|v| v.as_slice().to_vec()).collect(),
            gate_covs: p.gate_covs.iter().map(mat_rows).collect(),
            slopes: p.slopes.iter().map(mat_rows).collect(),
            intercepts: p.intercepts.iter().map(|v| v.as_slice().to_vec()).collect(),
            noise_covs: p.noise_covs.iter().map(mat_rows).collect(),
            cov_structure: p.cov_structure,
        }
    }
}

impl TryFrom<ParamsWire> for GllimParams {
    type Error = String;

    fn try_from(w: ParamsWire) -> std::result::Result<Self, String> {
        let mats = |v: &[Vec<Vec<f64>>]| v.iter().map(|m| rows_mat(m)).collect::<std::result::Result<Vec<_>, _>>();
        Ok(GllimParams {
            gate_means: w.gate_means.into_iter().map(DVector::from_vec).collect(),
            gate_covs: mats(&w.gate_covs)?,
            slopes: mats(&w.slopes)?,
            intercepts: w.intercepts.into_iter().map(DVector::from_vec).collect(),
            noise_covs: mats(&w.noise_covs)?,
            weights: w.weights,
            cov_structure: w.cov_structure,
        })
    }
}

/// Closed-form `ln Φ` for scalar Gaussians with variance `var`.
pub fn scalar_normal_ln_pdf(v: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (v - mean) * (v - mean) / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_params(pi: &[f64], c: &[f64], gamma: &[f64], a: &[f64], b: &[f64], sigma: &[f64]) -> GllimParams {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        let dv = |v: f64| DVector::from_element(1, v);
        GllimParams {
            weights: pi.to_vec(),
            gate_means: c.iter().map(|&v| dv(v)).collect(),
            gate_covs: gamma.iter().map(|&v| m(v)).collect(),
            slopes: a.iter().map(|&v| m(v)).collect(),
            intercepts: b.iter().map(|&v| dv(v)).collect(),
            noise_covs: sigma.iter().map(|&v| m(v)).collect(),
            cov_structure: CovStructure::Full,
        }
    }

    #[test]
    fn standard_normal_at_mode() {
        let p = GaussianParams::new(DVector::from_element(1, 0.0), DMatrix::identity(1, 1)).unwrap();
        let v = gaussian_logpdf(&DVector::from_element(1, 0.0), &p).unwrap();
        assert_abs_diff_eq!(v, -0.918_938_533_204_672_7, epsilon = 1e-12);
        let p2 = GaussianParams::new(DVector::from_vec(vec![1.0, -2.0]), DMatrix::identity(2, 2)).unwrap();
        let v2 = gaussian_logpdf(&DVector::from_vec(vec![1.0, -2.0]), &p2).unwrap();
        assert_abs_diff_eq!(v2, -(2.0 * PI).ln(), epsilon = 1e-12);
    }

    #[test]
    fn gaussian_logpdf_rejects_bad_inputs() {
        let p = GaussianParams::new(DVector::from_element(2, 0.0), DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(
            gaussian_logpdf(&DVector::from_element(3, 0.0), &p),
            Err(GlomeError::DimensionMismatch { .. })
        ));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            GaussianParams::new(DVector::from_element(2, 0.0), bad),
            Err(GlomeError::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn gating_scalar_hand_evaluation() {
        let p = InverseParams::new(scalar_params(&[0.5, 0.5], &[0.2, 0.8], &[0.1, 0.15], &[0.0, 0.0], &[0.0, 0.0], &[1.0, 1.0])).unwrap();
        let g = gating_probs(&DVector::from_element(1, 0.5), &p).unwrap();
        // 0.5·Φ(0.5; 0.2, 0.1) vs 0.5·Φ(0.5; 0.8, 0.15), evaluated by hand.
        let n1 = (-(0.09) / 0.2f64).exp() / (2.0 * PI * 0.1).sqrt();
        let n2 = (-(0.09) / 0.3f64).exp() / (2.0 * PI * 0.15).sqrt();
        assert_abs_diff_eq!(g[0], n1 / (n1 + n2), epsilon = 1e-14);
        assert_abs_diff_eq!(g[1], n2 / (n1 + n2), epsilon = 1e-14);
        let single = InverseParams::new(scalar_params(&[1.0], &[0.3], &[2.0], &[1.0], &[0.0], &[1.0])).unwrap();
        assert_eq!(gating_probs(&DVector::from_element(1, -4.0), &single).unwrap()[0], 1.0);
    }

    #[test]
    fn single_component_conditional_is_expert() {
        let p = InverseParams::new(scalar_params(&[1.0], &[0.3], &[2.0], &[1.5], &[-0.2], &[0.7])).unwrap();
        let (x, y) = (DVector::from_element(1, 0.4), DVector::from_element(1, 1.1));
        let v = inverse_conditional_logpdf(&x, &y, &p).unwrap();
        let g = GaussianParams::new(DVector::from_element(1, 1.5 * 1.1 - 0.2), DMatrix::from_element(1, 1, 0.7)).unwrap();
        assert_eq!(v, gaussian_logpdf(&x, &g).unwrap());
    }

    #[test]
    fn zero_slope_mapping_swaps_blocks() {
        let p = InverseParams::new(scalar_params(&[0.4, 0.6], &[0.1, 2.0], &[0.5, 3.0], &[0.0, 0.0], &[1.0, -1.0], &[2.0, 0.25])).unwrap();
        let f = inverse_to_forward(&p).unwrap();
        for j in 0..2 {
            assert_eq!(f.gate_means[j], p.intercepts[j]);
            assert_eq!(f.gate_covs[j], p.noise_covs[j]);
            assert_eq!(f.noise_covs[j], p.gate_covs[j]);
            assert_eq!(f.intercepts[j], p.gate_means[j]);
            assert!(f.slopes[j].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scalar_mapping_hand_substitution() {
        let p = InverseParams::new(scalar_params(&[1.0], &[0.0], &[1.0], &[1.0], &[0.0], &[1.0])).unwrap();
        let f = inverse_to_forward(&p).unwrap();
        assert_abs_diff_eq!(f.gate_means[0][0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.gate_covs[0][(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.noise_covs[0][(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f.slopes[0][(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f.intercepts[0][0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn log_likelihood_is_additive() {
        let p = scalar_params(&[0.3, 0.7], &[0.0, 1.0], &[1.0, 0.5], &[2.0, -1.0], &[0.5, 0.0], &[0.2, 0.3]);
        let d1 = Dataset::from_rows(2, 1, 1, vec![0.1, 0.9], vec![0.2, 1.3]).unwrap();
        let d2 = Dataset::from_rows(4, 1, 1, vec![0.1, 0.1, 0.9, 0.9], vec![0.2, 0.2, 1.3, 1.3]).unwrap();
        let single = log_likelihood(&d1.select_rows(&[0]).unwrap(), &p, Direction::Forward).unwrap();
        let ws = p.prepare().unwrap();
        let direct = ws.ln_conditional(&[0.2], &[0.1], &mut ws.workspace()).unwrap();
        assert_eq!(single, direct);
        let a = log_likelihood(&d1, &p, Direction::Inverse).unwrap();
        let b = log_likelihood(&d2, &p, Direction::Inverse).unwrap();
        assert_abs_diff_eq!(b, 2.0 * a, epsilon = 1e-12);
    }

    #[test]
    fn log_likelihood_checks_dimensions() {
        let p = scalar_params(&[1.0], &[0.0], &[1.0], &[1.0], &[0.0], &[1.0]);
        let d = Dataset::from_rows(1, 2, 1, vec![0.0, 0.0], vec![0.0]).unwrap();
        assert!(matches!(log_likelihood(&d, &p, Direction::Forward), Err(GlomeError::DimensionMismatch { .. })));
    }

    #[test]
    fn dataset_rejects_non_finite() {
        assert!(matches!(
            Dataset::from_rows(1, 1, 1, vec![f64::NAN], vec![0.0]),
            Err(GlomeError::NonFinite(_))
        ));
        assert!(Dataset::from_rows(0, 1, 1, vec![], vec![]).is_err());
    }

    #[test]
    fn polynomial_features_expand_monomials() {
        let f = PolynomialFeatures { degree: 3 };
        assert_eq!(f.expand(&[2.0]), vec![2.0, 4.0, 8.0]);
        let f2 = PolynomialFeatures { degree: 2 };
        assert_eq!(f2.expand(&[2.0, 3.0]), vec![2.0, 3.0, 4.0, 6.0, 9.0]);
    }

    #[test]
    fn params_serde_round_trip() {
        let p = scalar_params(&[0.25, 0.75], &[0.1, -2.0], &[0.5, 3.0], &[1.0, 0.3], &[1.0, -1.0], &[2.0, 0.25]);
        let s = serde_json::to_string(&p).unwrap();
        let back: GllimParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
    }
}
