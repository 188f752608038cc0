//! GLLiM-EM: maximum likelihood for the joint hierarchical model
//! `Z ~ π`, `Y | Z=k ~ N(c_k, Γ_k)`, `X | Y, Z=k ~ N(A_k Y + b_k, Σ_k)`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GlomeError, Result};
use crate::linalg::{self, EIGEN_FLOOR};
use crate::model::{CovStructure, Dataset, GllimParams, InverseParams, ParameterBounds, PreparedMixture};
use crate::rng;

/// How the first set of responsibilities is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// k-means on standardized `(x, y)` rows, then hard responsibilities.
    KMeans,
    /// Balanced random hard partition.
    RandomResponsibilities,
    /// Caller-supplied n×K responsibilities (every restart starts here).
    Provided(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop when `|Δℓ| / (1 + |ℓ|)` falls below this.
    pub rel_tol: f64,
    pub n_restarts: usize,
    pub init: InitStrategy,
    pub min_points_per_class: usize,
    pub cov_structure: CovStructure,
    pub bounds: ParameterBounds,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iter: 1000,
            rel_tol: 1e-6,
            n_restarts: 5,
            init: InitStrategy::KMeans,
            min_points_per_class: 10,
            cov_structure: CovStructure::Full,
            bounds: ParameterBounds::default(),
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(GlomeError::OutOfRange("max_iter must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(GlomeError::OutOfRange("rel_tol must be positive".into()));
        }
        if self.n_restarts < 1 {
            return Err(GlomeError::OutOfRange("n_restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: InverseParams,
    /// Observed-data joint log-likelihood at `params`.
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub n_iter: usize,
    pub restart_index: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn k(&self) -> usize {
        self.params.n_components()
    }
}

/// Outcome of fitting one K inside [`fit_range`].
#[derive(Debug, Clone, PartialEq)]
pub struct RangeFit {
    pub k: usize,
    pub result: Result<FitResult>,
}

const MAX_RESEEDS: usize = 20;

/// Fills `resp` with posterior responsibilities and returns per-point log-likelihoods summed.
fn e_step_into(data: &Dataset, prepared: &PreparedMixture, resp: &mut DMatrix<f64>, point_ll: &mut [f64]) -> Result<f64> {
    let k = prepared.n_components();
    let mut terms = vec![0.0; k];
    let mut scratch = vec![0.0; data.d().max(data.l())];
    let mut total = 0.0;
    for i in 0..data.n() {
        prepared.joint_terms(data.x_row(i), data.y_row(i), &mut terms, &mut scratch);
        let lse = linalg::log_sum_exp(&terms);
        if !lse.is_finite() {
            return Err(GlomeError::NonFinite(format!("joint log-density at sample {i}")));
        }
        let mut s = 0.0;
        for t in terms.iter_mut() {
            *t = (*t - lse).exp();
            s += *t;
        }
        for (j, t) in terms.iter().enumerate() {
            resp[(i, j)] = t / s;
        }
        point_ll[i] = lse;
        total += lse;
    }
    Ok(total)
}

fn check_compat(data: &Dataset, params: &InverseParams) -> Result<()> {
    if params.l() != data.l() {
        return Err(GlomeError::DimensionMismatch { context: "params L vs data", expected: data.l(), found: params.l() });
    }
    if params.d() != data.d() {
        return Err(GlomeError::DimensionMismatch { context: "params D vs data", expected: data.d(), found: params.d() });
    }
    Ok(())
}

/// Posterior responsibilities `r_ik ∝ π_k Φ_L(y_i; c_k, Γ_k) Φ_D(x_i; A_k y_i + b_k, Σ_k)`
/// and the observed-data joint log-likelihood.
pub fn e_step(data: &Dataset, params: &InverseParams) -> Result<(DMatrix<f64>, f64)> {
    check_compat(data, params)?;
    let prepared = params.prepare()?;
    let mut resp = DMatrix::zeros(data.n(), params.n_components());
    let mut point_ll = vec![0.0; data.n()];
    let ll = e_step_into(data, &prepared, &mut resp, &mut point_ll)?;
    Ok((resp, ll))
}

/// Closed-form weighted maximum-likelihood updates given responsibilities.
pub fn m_step(data: &Dataset, responsibilities: &DMatrix<f64>, cov_structure: CovStructure) -> Result<InverseParams> {
    m_step_bounded(data, responsibilities, cov_structure, &ParameterBounds::default())
}

pub fn m_step_bounded(
    data: &Dataset,
    resp: &DMatrix<f64>,
    cov_structure: CovStructure,
    bounds: &ParameterBounds,
) -> Result<InverseParams> {
    let (n, d, l) = (data.n(), data.d(), data.l());
    if resp.nrows() != n {
        return Err(GlomeError::DimensionMismatch { context: "responsibility rows", expected: n, found: resp.nrows() });
    }
    let k = resp.ncols();
    if k == 0 {
        return Err(GlomeError::InvalidParams("responsibilities have no columns".into()));
    }
    let mut params = GllimParams {
        weights: Vec::with_capacity(k),
        gate_means: Vec::with_capacity(k),
        gate_covs: Vec::with_capacity(k),
        slopes: Vec::with_capacity(k),
        intercepts: Vec::with_capacity(k),
        noise_covs: Vec::with_capacity(k),
        cov_structure,
    };
    let empty_threshold = 10.0 * f64::EPSILON * n as f64;
    let all = resp.as_slice();
    for j in 0..k {
        let w = &all[j * n..(j + 1) * n];
        let nk: f64 = w.iter().sum();
        if !(nk >= empty_threshold) {
            return Err(GlomeError::EmptyComponent { k: j });
        }
        let mut ybar = vec![0.0; l];
        let mut xbar = vec![0.0; d];
        for (i, &wi) in w.iter().enumerate() {
            for (acc, v) in ybar.iter_mut().zip(data.y_row(i)) {
                *acc += wi * v;
            }
            for (acc, v) in xbar.iter_mut().zip(data.x_row(i)) {
                *acc += wi * v;
            }
        }
        ybar.iter_mut().for_each(|v| *v /= nk);
        xbar.iter_mut().for_each(|v| *v /= nk);

        let mut syy = DMatrix::<f64>::zeros(l, l);
        let mut sxy = DMatrix::<f64>::zeros(d, l);
        let mut sxx = DMatrix::<f64>::zeros(d, d);
        let mut dy = vec![0.0; l];
        let mut dx = vec![0.0; d];
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            for (t, (v, m)) in dy.iter_mut().zip(data.y_row(i).iter().zip(&ybar)) {
                *t = v - m;
            }
            for (t, (v, m)) in dx.iter_mut().zip(data.x_row(i).iter().zip(&xbar)) {
                *t = v - m;
            }
            for a in 0..l {
                for b in 0..=a {
                    syy[(a, b)] += wi * dy[a] * dy[b];
                }
            }
            for a in 0..d {
                for b in 0..l {
                    sxy[(a, b)] += wi * dx[a] * dy[b];
                }
                for b in 0..=a {
                    sxx[(a, b)] += wi * dx[a] * dx[b];
                }
            }
        }
        for a in 0..l {
            for b in 0..a {
                syy[(b, a)] = syy[(a, b)];
            }
        }
        for a in 0..d {
            for b in 0..a {
                sxx[(b, a)] = sxx[(a, b)];
            }
        }
        syy /= nk;
        sxy /= nk;
        sxx /= nk;

        let (lo, _) = linalg::eigen_range(&syy);
        if !(lo >= EIGEN_FLOOR) {
            return Err(GlomeError::SingularDesign { k: j });
        }
        let syy_inv = linalg::spd_inverse(&syy, "weighted response covariance").map_err(|_| GlomeError::SingularDesign { k: j })?;
        let ybar_v = DVector::from_vec(ybar);
        let xbar_v = DVector::from_vec(xbar);
        let mut slope = &sxy * &syy_inv;
        let mut intercept = &xbar_v - &slope * &ybar_v;
        bounds.project_expert(&mut slope, &mut intercept);
        let offset = &xbar_v - &slope * &ybar_v - &intercept;
        let cross = &slope * sxy.transpose();
        let resid = &sxx - &cross - cross.transpose() + &slope * &syy * slope.transpose() + &offset * offset.transpose();
        let noise = bounds.project_noise_cov(&cov_structure.project(&resid));

        let mut gate_mean = ybar_v;
        bounds.project_gate_mean(&mut gate_mean);
        let gate_cov = bounds.project_gate_cov(&syy);

        params.weights.push(nk / n as f64);
        params.gate_means.push(gate_mean);
        params.gate_covs.push(gate_cov);
        params.slopes.push(slope);
        params.intercepts.push(intercept);
        params.noise_covs.push(noise);
    }
    bounds.project_weights(&mut params.weights);
    InverseParams::new(params)
}

/// Joint `(x, y)` rows standardized column-wise.
fn standardized_rows(data: &Dataset) -> Vec<Vec<f64>> {
    let n = data.n();
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| data.x_row(i).iter().chain(data.y_row(i)).copied().collect())
        .collect();
    let p = data.d() + data.l();
    for c in 0..p {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        rows.iter_mut().for_each(|r| r[c] = (r[c] - mean) / sd);
    }
    rows
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// k-means++ seeding followed by Lloyd iterations; returns labels.
fn kmeans_labels<R: Rng>(rows: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<usize> {
    let n = rows.len();
    let mut centers: Vec<Vec<f64>> = vec![rows[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &dist) in nearest.iter().enumerate() {
                if u < dist {
                    idx = i;
                    break;
                }
                u -= dist;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.push(rows[pick].clone());
        for (i, r) in rows.iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(r, &centers[centers.len() - 1]));
        }
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, r) in rows.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(r, &centers[a]).total_cmp(&sq_dist(r, &centers[b])))
                .unwrap_or(0);
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let p = rows[0].len();
        let mut sums = vec![vec![0.0; p]; k];
        let mut counts = vec![0usize; k];
        for (r, &lab) in rows.iter().zip(&labels) {
            counts[lab] += 1;
            sums[lab].iter_mut().zip(r).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    labels
}

/// Moves nearest points into undersized classes until each has `min_points` members.
fn enforce_min_class_size(rows: &[Vec<f64>], labels: &mut [usize], k: usize, min_points: usize) {
    let p = rows[0].len();
    loop {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let Some(small) = (0..k).find(|&j| counts[j] < min_points) else {
            return;
        };
        let class_mean = |j: usize| {
            let mut c = vec![0.0; p];
            for (r, &l) in rows.iter().zip(labels.iter()) {
                if l == j {
                    c.iter_mut().zip(r).for_each(|(s, v)| *s += v / counts[j] as f64);
                }
            }
            c
        };
        let centroid = if counts[small] > 0 {
            class_mean(small)
        } else {
            // Empty class: seed at the member of the largest class farthest from its mean.
            let big = (0..k).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).unwrap_or(0);
            let m = class_mean(big);
            let far = (0..rows.len())
                .filter(|&i| labels[i] == big)
                .max_by(|&a, &b| sq_dist(&rows[a], &m).total_cmp(&sq_dist(&rows[b], &m)))
                .unwrap_or(0);
            rows[far].clone()
        };
        let mut candidates: Vec<usize> = (0..rows.len()).filter(|&i| labels[i] != small).collect();
        candidates.sort_by(|&a, &b| sq_dist(&rows[a], &centroid).total_cmp(&sq_dist(&rows[b], &centroid)).then(a.cmp(&b)));
        let mut need = min_points - counts[small];
        for i in candidates {
            if need == 0 {
                break;
            }
            let donor = labels[i];
            if counts[donor] > min_points {
                counts[donor] -= 1;
                labels[i] = small;
                counts[small] += 1;
                need -= 1;
            }
        }
        if need > 0 {
            // Not enough donors; the caller has already checked n ≥ K·min_points.
            return;
        }
    }
}

fn one_hot(labels: &[usize], k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(labels.len(), k);
    for (i, &l) in labels.iter().enumerate() {
        m[(i, l)] = 1.0;
    }
    m
}

fn initial_responsibilities<R: Rng>(data: &Dataset, k: usize, config: &EmConfig, rows: &[Vec<f64>], rng: &mut R) -> Result<DMatrix<f64>> {
    match &config.init {
        InitStrategy::Provided(m) => {
            if m.nrows() != data.n() || m.ncols() != k {
                return Err(GlomeError::DimensionMismatch { context: "provided responsibilities", expected: data.n() * k, found: m.len() });
            }
            Ok(m.clone())
        }
        InitStrategy::KMeans => {
            let mut labels = if k == 1 { vec![0; data.n()] } else { kmeans_labels(rows, k, rng) };
            enforce_min_class_size(rows, &mut labels, k, config.min_points_per_class);
            Ok(one_hot(&labels, k))
        }
        InitStrategy::RandomResponsibilities => {
            let mut order: Vec<usize> = (0..data.n()).collect();
            order.shuffle(rng);
            let mut labels = vec![0; data.n()];
            for (pos, &i) in order.iter().enumerate() {
                labels[i] = pos % k;
            }
            Ok(one_hot(&labels, k))
        }
    }
}

/// Re-seeds component `j` on the neighborhood of the worst-explained datum.
fn reseed(rows: &[Vec<f64>], point_ll: &[f64], resp: &mut DMatrix<f64>, j: usize, size: usize) {
    let worst = point_ll
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| sq_dist(&rows[a], &rows[worst]).total_cmp(&sq_dist(&rows[b], &rows[worst])).then(a.cmp(&b)));
    for &i in order.iter().take(size.max(2)) {
        for c in 0..resp.ncols() {
            resp[(i, c)] = if c == j { 1.0 } else { 0.0 };
        }
    }
}

/// Runs EM from the given responsibilities until convergence or `max_iter`.
fn run_em(data: &Dataset, mut resp: DMatrix<f64>, config: &EmConfig, rows: &[Vec<f64>], restart_index: usize) -> Result<FitResult> {
    let n = data.n();
    let mut point_ll = vec![f64::NAN; n];
    let mut reseeds = 0;
    let mut trace: Vec<f64> = Vec::new();
    let mut params = loop {
        match m_step_bounded(data, &resp, config.cov_structure, &config.bounds) {
            Ok(p) => break p,
            Err(GlomeError::EmptyComponent { k }) | Err(GlomeError::SingularDesign { k }) if reseeds < MAX_RESEEDS => {
                reseeds += 1;
                let ll = vec![0.0; n];
                reseed(rows, &ll, &mut resp, k, config.min_points_per_class);
            }
            Err(e) => return Err(e),
        }
    };
    let mut converged = false;
    let mut n_iter = 0;
    loop {
        let prepared = params.prepare()?;
        let ll = e_step_into(data, &prepared, &mut resp, &mut point_ll)?;
        n_iter += 1;
        if let Some(&prev) = trace.last() {
            trace.push(ll);
            if (ll - prev).abs() / (1.0 + ll.abs()) < config.rel_tol {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        if n_iter >= config.max_iter {
            break;
        }
        params = loop {
            match m_step_bounded(data, &resp, config.cov_structure, &config.bounds) {
                Ok(p) => break p,
                Err(GlomeError::EmptyComponent { k }) | Err(GlomeError::SingularDesign { k }) if reseeds < MAX_RESEEDS => {
                    reseeds += 1;
                    // The run restarts from the re-seeded partition; the trace restarts with it.
                    trace.clear();
                    reseed(rows, &point_ll, &mut resp, k, config.min_points_per_class);
                }
                Err(e) => return Err(e),
            }
        };
    }
    let loglik = *trace.last().expect("at least one E-step");
    Ok(FitResult { params, loglik, loglik_trace: trace, n_iter, restart_index, converged })
}

/// Best-of-restarts GLLiM-EM fit with `k` components.
pub fn fit(data: &Dataset, k: usize, config: &EmConfig) -> Result<FitResult> {
    config.validate()?;
    if k < 1 {
        return Err(GlomeError::OutOfRange("K must be at least 1".into()));
    }
    let required = k * config.min_points_per_class.max(1);
    if data.n() < required {
        return Err(GlomeError::TooFewSamples { n: data.n(), required });
    }
    let rows = standardized_rows(data);
    let mut best: Option<FitResult> = None;
    let mut failures = Vec::new();
    for r in 0..config.n_restarts {
        let mut rng = rng::stream(config.seed, &[k as u64, r as u64]);
        let outcome = initial_responsibilities(data, k, config, &rows, &mut rng)
            .and_then(|resp| run_em(data, resp, config, &rows, r));
        match outcome {
            Ok(res) => {
                if best.as_ref().is_none_or(|b| res.loglik > b.loglik) {
                    best = Some(res);
                }
            }
            Err(e) => failures.push(format!("restart {r}: {e}")),
        }
    }
    best.ok_or_else(|| GlomeError::AllRestartsFailed(failures.join("; ")))
}

/// Fits starting from explicit responsibilities (single run, no restarts).
pub fn fit_from_responsibilities(data: &Dataset, resp: DMatrix<f64>, config: &EmConfig) -> Result<FitResult> {
    config.validate()?;
    let rows = standardized_rows(data);
    run_em(data, resp, config, &rows, 0)
}

/// Splits component `j` of the responsibilities along its principal response axis.
fn split_responsibilities(data: &Dataset, resp: &DMatrix<f64>, params: &InverseParams, j: usize) -> DMatrix<f64> {
    let (n, k) = (data.n(), resp.ncols());
    let gamma = &params.gate_covs[j];
    let eig = nalgebra::SymmetricEigen::new(gamma.clone());
    let (axis_idx, _) = eig.eigenvalues.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let axis = eig.eigenvectors.column(axis_idx).into_owned();
    let sd = eig.eigenvalues[axis_idx].max(EIGEN_FLOOR).sqrt();
    let center = &params.gate_means[j];
    let mut out = DMatrix::zeros(n, k + 1);
    for i in 0..n {
        for c in 0..k {
            out[(i, c)] = resp[(i, c)];
        }
        let proj: f64 = data.y_row(i).iter().zip(center.iter()).zip(axis.iter()).map(|((y, c), a)| (y - c) * a).sum();
        let share = 0.5 * (1.0 + (2.0 * proj / sd).tanh());
        out[(i, k)] = resp[(i, j)] * share;
        out[(i, j)] = resp[(i, j)] * (1.0 - share);
    }
    out
}

/// The (K−1)-component fit embedded in K components by duplicating its heaviest component.
fn duplicate_component(data: &Dataset, prev: &FitResult, restart_index: usize) -> Result<FitResult> {
    let p = &prev.params;
    let j = (0..p.n_components()).max_by(|&a, &b| p.weights[a].total_cmp(&p.weights[b]).then(b.cmp(&a))).unwrap_or(0);
    let mut q = p.0.clone();
    q.weights[j] *= 0.5;
    q.weights.push(q.weights[j]);
    q.gate_means.push(q.gate_means[j].clone());
    q.gate_covs.push(q.gate_covs[j].clone());
    q.slopes.push(q.slopes[j].clone());
    q.intercepts.push(q.intercepts[j].clone());
    q.noise_covs.push(q.noise_covs[j].clone());
    let s: f64 = q.weights.iter().sum();
    q.weights.iter_mut().for_each(|w| *w /= s);
    let params = InverseParams::new(q)?;
    let (_, loglik) = e_step(data, &params)?;
    Ok(FitResult { params, loglik, loglik_trace: vec![loglik], n_iter: 1, restart_index, converged: prev.converged })
}

/// Refits K from the K−1 solution when independent restarts ended below it.
fn nested_refit(data: &Dataset, prev: &FitResult, config: &EmConfig) -> Result<FitResult> {
    let restart_index = config.n_restarts;
    let (resp, _) = e_step(data, &prev.params)?;
    let p = &prev.params;
    let mut order: Vec<usize> = (0..p.n_components()).collect();
    order.sort_by(|&a, &b| p.weights[b].total_cmp(&p.weights[a]).then(a.cmp(&b)));
    let mut best: Option<FitResult> = None;
    for &j in order.iter().take(3) {
        let split = split_responsibilities(data, &resp, p, j);
        let rows = standardized_rows(data);
        if let Ok(mut res) = run_em(data, split, config, &rows, restart_index) {
            res.restart_index = restart_index;
            if best.as_ref().is_none_or(|b| res.loglik > b.loglik) {
                best = Some(res);
            }
        }
        if best.as_ref().is_some_and(|b| b.loglik >= prev.loglik) {
            break;
        }
    }
    match best {
        Some(b) if b.loglik >= prev.loglik => Ok(b),
        _ => duplicate_component(data, prev, restart_index),
    }
}

/// Fits K = 1..=k_max. Failed K values are kept with their error.
///
/// Fits for different K run concurrently. A sequential pass then re-fits any K
/// whose likelihood ended below the (K−1) fit, starting from a split of that
/// fit, so the returned log-likelihoods are nondecreasing in K.
pub fn fit_range(data: &Dataset, k_max: usize, config: &EmConfig) -> Result<Vec<RangeFit>> {
    config.validate()?;
    if k_max < 1 {
        return Err(GlomeError::OutOfRange("K_max must be at least 1".into()));
    }
    let mut fits: Vec<RangeFit> = (1..=k_max)
        .into_par_iter()
        .map(|k| RangeFit { k, result: fit(data, k, config) })
        .collect();
    if fits.iter().all(|f| f.result.is_err()) {
        return Err(fits.swap_remove(0).result.unwrap_err());
    }
    for idx in 1..fits.len() {
        let Ok(prev) = fits[idx - 1].result.clone() else {
            continue;
        };
        let needs_repair = match &fits[idx].result {
            Ok(cur) => cur.loglik < prev.loglik,
            Err(GlomeError::TooFewSamples { .. }) => false,
            Err(_) => true,
        };
        if needs_repair {
            if let Ok(repaired) = nested_refit(data, &prev, config) {
                let better = match &fits[idx].result {
                    Ok(cur) => repaired.loglik > cur.loglik,
                    Err(_) => true,
                };
                if better {
                    fits[idx].result = Ok(repaired);
                }
            }
        }
    }
    Ok(fits)
}
