//! Scenario samplers and trial orchestration for selection and divergence studies.
//!
//! The two built-in scenarios share a covariate marginal, the equal-weight
//! mixture `½ N(0.2, 0.1) + ½ N(0.8, 0.15)` (second argument = variance), and
//! gate the experts with the normalized mixture components:
//!
//! * `Ws`: experts `N(−5x + 2, 0.09)` and `N(0.1x, 0.09)` (inside the model class);
//! * `Ms`: experts `N(x² − 6x + 1, 0.09)` and `N(−0.4x², 0.09)` (outside it).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{tensorized_kl_mc, CondDensity, ForwardDensity};
use crate::em::{fit_range, EmConfig};
use crate::error::{GlomeError, Result};
use crate::model::{inverse_to_forward, scalar_normal_ln_pdf, CovStructure, Dataset, ForwardParams, GllimParams};
use crate::rng;
use crate::selection::{select, CriterionTable, SelectionMethod};

const GATE_MEANS: [f64; 2] = [0.2, 0.8];
const GATE_VARS: [f64; 2] = [0.1, 0.15];
const NOISE_VAR: f64 = 0.09;

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    /// Well-specified: the truth is a two-component forward GLLiM.
    Ws,
    /// Misspecified: quadratic expert means.
    Ms,
    /// Any forward GLLiM; covariates follow its gate hierarchy.
    CustomForward(ForwardParams),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Ws => "ws",
            Scenario::Ms => "ms",
            Scenario::CustomForward(_) => "custom",
        }
    }

    pub fn truth(&self) -> Result<ScenarioTruth> {
        Ok(match self {
            Scenario::Ws => ScenarioTruth::Ws,
            Scenario::Ms => ScenarioTruth::Ms,
            Scenario::CustomForward(p) => ScenarioTruth::Custom(ForwardDensity::new(p)?),
        })
    }
}

impl std::str::FromStr for Scenario {
    type Err = GlomeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ws" => Ok(Scenario::Ws),
            "ms" => Ok(Scenario::Ms),
            other => Err(GlomeError::OutOfRange(format!("unknown scenario `{other}`"))),
        }
    }
}

/// The WS truth written as forward GLLiM parameters.
pub fn ws_forward_params() -> ForwardParams {
    let m = |v: f64| DMatrix::from_element(1, 1, v);
    let v = |x: f64| DVector::from_element(1, x);
    ForwardParams(GllimParams {
        weights: vec![0.5, 0.5],
        gate_means: vec![v(GATE_MEANS[0]), v(GATE_MEANS[1])],
        gate_covs: vec![m(GATE_VARS[0]), m(GATE_VARS[1])],
        slopes: vec![m(-5.0), m(0.1)],
        intercepts: vec![v(2.0), v(0.0)],
        noise_covs: vec![m(NOISE_VAR), m(NOISE_VAR)],
        cov_structure: CovStructure::Full,
    })
}

/// True conditional density `s0(y | x)` of a scenario.
pub enum ScenarioTruth {
    Ws,
    Ms,
    Custom(ForwardDensity),
}

fn gate_probs(x: f64) -> [f64; 2] {
    let a = scalar_normal_ln_pdf(x, GATE_MEANS[0], GATE_VARS[0]);
    let b = scalar_normal_ln_pdf(x, GATE_MEANS[1], GATE_VARS[1]);
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    [ea / (ea + eb), eb / (ea + eb)]
}

impl ScenarioTruth {
    fn expert_means(&self, x: f64) -> [f64; 2] {
        match self {
            ScenarioTruth::Ws => [-5.0 * x + 2.0, 0.1 * x],
            ScenarioTruth::Ms => [x * x - 6.0 * x + 1.0, -0.4 * x * x],
            ScenarioTruth::Custom(_) => unreachable!("custom truth has no closed-form experts"),
        }
    }
}

impl CondDensity for ScenarioTruth {
    fn response_dim(&self) -> usize {
        match self {
            ScenarioTruth::Custom(f) => f.response_dim(),
            _ => 1,
        }
    }

    fn covariate_dim(&self) -> usize {
        match self {
            ScenarioTruth::Custom(f) => f.covariate_dim(),
            _ => 1,
        }
    }

    fn ln_density(&self, y: &[f64], x: &[f64]) -> f64 {
        if let ScenarioTruth::Custom(f) = self {
            return f.ln_density(y, x);
        }
        let g = gate_probs(x[0]);
        let mu = self.expert_means(x[0]);
        let t0 = g[0].ln() + scalar_normal_ln_pdf(y[0], mu[0], NOISE_VAR);
        let t1 = g[1].ln() + scalar_normal_ln_pdf(y[0], mu[1], NOISE_VAR);
        crate::linalg::log_sum_exp(&[t0, t1])
    }

    fn has_sampler(&self) -> bool {
        true
    }

    fn sample(&self, x: &[f64], rng: &mut ChaCha8Rng, out: &mut [f64]) {
        if let ScenarioTruth::Custom(f) = self {
            return f.sample(x, rng, out);
        }
        let g = gate_probs(x[0]);
        let mu = self.expert_means(x[0]);
        let k = if rng.random::<f64>() < g[0] { 0 } else { 1 };
        let z: f64 = rng.sample(StandardNormal);
        out[0] = mu[k] + NOISE_VAR.sqrt() * z;
    }
}

/// Draws `n` pairs from a scenario; deterministic per seed.
pub fn sample_scenario(scenario: &Scenario, n: usize, seed: u64) -> Result<Dataset> {
    if n < 1 {
        return Err(GlomeError::TooFewSamples { n, required: 1 });
    }
    if let Scenario::CustomForward(p) = scenario {
        return sample_glome(p, n, seed);
    }
    let truth = scenario.truth()?;
    let mut rng = rng::stream(seed, &[0]);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut y = [0.0];
    for _ in 0..n {
        let k = if rng.random::<f64>() < 0.5 { 0 } else { 1 };
        let z: f64 = rng.sample(StandardNormal);
        let x = GATE_MEANS[k] + GATE_VARS[k].sqrt() * z;
        truth.sample(&[x], &mut rng, &mut y);
        xs.push(x);
        ys.push(y[0]);
    }
    Dataset::from_rows(n, 1, 1, xs, ys)
}

/// Draws `(x, y)` from the forward hierarchy and returns the latent labels too.
pub fn sample_glome_labeled(params: &ForwardParams, n: usize, seed: u64) -> Result<(Dataset, Vec<usize>)> {
    if n < 1 {
        return Err(GlomeError::TooFewSamples { n, required: 1 });
    }
    let prepared = params.prepare()?;
    let (d, l) = (params.d(), params.l());
    let mut rng = rng::stream(seed, &[0]);
    let mut xs = vec![0.0; n * d];
    let mut ys = vec![0.0; n * l];
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let x = &mut xs[i * d..(i + 1) * d];
        let k = prepared.sample_input(&mut rng, x);
        prepared.sample_expert(k, x, &mut rng, &mut ys[i * l..(i + 1) * l]);
        labels.push(k);
    }
    Ok((Dataset::from_rows(n, d, l, xs, ys)?, labels))
}

/// `Z ~ π*`, `X | Z ~ N(c*_Z, Γ*_Z)`, `Y | X, Z ~ N(A*_Z X + b*_Z, Σ*_Z)`.
pub fn sample_glome(params: &ForwardParams, n: usize, seed: u64) -> Result<Dataset> {
    sample_glome_labeled(params, n, seed).map(|(d, _)| d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSettings {
    pub n_trials: usize,
    pub k_max: usize,
    pub em: EmConfig,
    pub methods: Vec<SelectionMethod>,
    /// κ for [`SelectionMethod::FixedKappa`].
    pub kappa: Option<f64>,
    pub window_fraction: f64,
    /// Responses drawn per covariate for tKL; `None` skips divergences.
    pub n_y: Option<usize>,
    pub record_runtime: bool,
    pub seed: u64,
}

impl Default for TrialSettings {
    fn default() -> Self {
        TrialSettings {
            n_trials: 30,
            k_max: 10,
            em: EmConfig::default(),
            methods: vec![SelectionMethod::Jump, SelectionMethod::Slope],
            kappa: None,
            window_fraction: 0.5,
            n_y: Some(100),
            record_runtime: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodChoice {
    pub method: SelectionMethod,
    pub chosen_k: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedFit {
    pub k: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub choices: Vec<MethodChoice>,
    /// Forward negative log-likelihood per K (index K − 1).
    pub neg_loglik: Vec<Option<f64>>,
    /// tKL estimate per K (index K − 1).
    pub tkl: Vec<Option<f64>>,
    pub failed_fits: Vec<FailedFit>,
    pub runtime_secs: Option<f64>,
}

impl TrialRecord {
    pub fn chosen(&self, method: SelectionMethod) -> Option<usize> {
        self.choices.iter().find(|c| c.method == method).and_then(|c| c.chosen_k)
    }

    pub fn tkl_at(&self, k: usize) -> Option<f64> {
        self.tkl.get(k.checked_sub(1)?).copied().flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub method: SelectionMethod,
    pub k: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std_error: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Summary {
    /// Mean, standard error of the mean and linear-interpolated quartiles.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        let m = v.len() as f64;
        let mean = v.iter().sum::<f64>() / m;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
        let q = |p: f64| {
            let h = (m - 1.0) * p;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Summary { count: v.len(), mean, std_error: (var / m).sqrt(), q1: q(0.25), median: q(0.5), q3: q(0.75) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSummary {
    pub k: usize,
    pub tkl: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSummary {
    pub method: SelectionMethod,
    pub tkl: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFailures {
    pub method: SelectionMethod,
    pub count: usize,
}

/// All trials at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeRun {
    pub n: usize,
    pub n_trials: usize,
    pub trials: Vec<TrialRecord>,
    /// Selected-K counts per method, K = 1..=k_max.
    pub histogram: Vec<HistogramRow>,
    /// Trials in which a method produced no selection.
    pub selection_failures: Vec<MethodFailures>,
    pub tkl_by_k: Vec<KSummary>,
    pub selected_tkl: Vec<SelectedSummary>,
}

impl SampleSizeRun {
    pub fn count(&self, method: SelectionMethod, k: usize) -> usize {
        self.histogram.iter().find(|h| h.method == method && h.k == k).map_or(0, |h| h.count)
    }

    /// Most frequent K for a method (smallest K on ties).
    pub fn modal_k(&self, method: SelectionMethod) -> Option<usize> {
        self.histogram
            .iter()
            .filter(|h| h.method == method && h.count > 0)
            .max_by(|a, b| a.count.cmp(&b.count).then(b.k.cmp(&a.k)))
            .map(|h| h.k)
    }

    pub fn selected_summary(&self, method: SelectionMethod) -> Option<&Summary> {
        self.selected_tkl.iter().find(|s| s.method == method).map(|s| &s.tkl)
    }

    pub fn k_summary(&self, k: usize) -> Option<&Summary> {
        self.tkl_by_k.iter().find(|s| s.k == k).map(|s| &s.tkl)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub n: usize,
    pub mean_tkl: f64,
    pub std_error: f64,
}

/// Least-squares line of `ln(mean tKL)` against `ln n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRegression {
    pub method: SelectionMethod,
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub points: Vec<DecayPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub scenario: String,
    pub k_max: usize,
    pub n_y: Option<usize>,
    pub methods: Vec<SelectionMethod>,
    pub seed: u64,
    pub runs: Vec<SampleSizeRun>,
    pub decay: Option<DecayRegression>,
}

fn run_trial(scenario: &Scenario, truth: &ScenarioTruth, n: usize, settings: &TrialSettings, trial: usize) -> TrialRecord {
    let started = Instant::now();
    let k_max = settings.k_max;
    let mut record = TrialRecord {
        trial,
        choices: Vec::new(),
        neg_loglik: vec![None; k_max],
        tkl: vec![None; k_max],
        failed_fits: Vec::new(),
        runtime_secs: None,
    };
    let fail_all = |record: &mut TrialRecord, msg: String| {
        record.choices = settings
            .methods
            .iter()
            .map(|&method| MethodChoice { method, chosen_k: None, error: Some(msg.clone()) })
            .collect();
    };
    let data = match sample_scenario(scenario, n, rng::derive_seed(settings.seed, &[trial as u64, 0])) {
        Ok(d) => d,
        Err(e) => {
            fail_all(&mut record, e.to_string());
            return record;
        }
    };
    let em = EmConfig { seed: rng::derive_seed(settings.seed, &[trial as u64, 1]), ..settings.em.clone() };
    let fits = match fit_range(&data, k_max, &em) {
        Ok(f) => f,
        Err(e) => {
            fail_all(&mut record, e.to_string());
            return record;
        }
    };
    let mut forwards: Vec<Option<ForwardParams>> = vec![None; k_max];
    for f in &fits {
        match &f.result {
            Ok(res) => match inverse_to_forward(&res.params) {
                Ok(fp) => forwards[f.k - 1] = Some(fp),
                Err(e) => record.failed_fits.push(FailedFit { k: f.k, error: e.to_string() }),
            },
            Err(e) => record.failed_fits.push(FailedFit { k: f.k, error: e.to_string() }),
        }
    }
    match CriterionTable::from_fits(&data, &fits, settings.em.cov_structure) {
        Ok(table) => {
            for e in table.entries() {
                record.neg_loglik[e.k - 1] = Some(e.neg_loglik);
            }
            record.choices = settings
                .methods
                .iter()
                .map(|&method| match select(&table, method, settings.kappa, settings.window_fraction) {
                    Ok(r) => MethodChoice { method, chosen_k: Some(r.chosen_k), error: None },
                    Err(e) => MethodChoice { method, chosen_k: None, error: Some(e.to_string()) },
                })
                .collect();
        }
        Err(e) => fail_all(&mut record, e.to_string()),
    }
    if let Some(n_y) = settings.n_y {
        let xs = data.x_matrix();
        // Common random numbers across K.
        let mc_seed = rng::derive_seed(settings.seed, &[trial as u64, 2]);
        for (k_idx, fp) in forwards.iter().enumerate() {
            let Some(fp) = fp else { continue };
            let est = ForwardDensity::new(fp).and_then(|dens| tensorized_kl_mc(truth, &dens, &xs, n_y, mc_seed));
            match est {
                Ok(e) => record.tkl[k_idx] = Some(e.value),
                Err(e) => record.failed_fits.push(FailedFit { k: k_idx + 1, error: format!("tKL: {e}") }),
            }
        }
    }
    if settings.record_runtime {
        record.runtime_secs = Some(started.elapsed().as_secs_f64());
    }
    record
}

fn aggregate(n: usize, settings: &TrialSettings, trials: Vec<TrialRecord>) -> SampleSizeRun {
    let mut histogram = Vec::new();
    let mut selection_failures = Vec::new();
    let mut selected_tkl = Vec::new();
    for &method in &settings.methods {
        let mut failures = 0;
        let mut counts = vec![0usize; settings.k_max + 1];
        let mut chosen_tkl = Vec::new();
        for t in &trials {
            match t.chosen(method) {
                Some(k) => {
                    counts[k] += 1;
                    if let Some(v) = t.tkl_at(k) {
                        chosen_tkl.push(v);
                    }
                }
                None => failures += 1,
            }
        }
        for (k, &count) in counts.iter().enumerate().skip(1) {
            histogram.push(HistogramRow { method, k, count });
        }
        selection_failures.push(MethodFailures { method, count: failures });
        if let Some(s) = Summary::of(&chosen_tkl) {
            selected_tkl.push(SelectedSummary { method, tkl: s });
        }
    }
    let tkl_by_k = (1..=settings.k_max)
        .filter_map(|k| {
            let v: Vec<f64> = trials.iter().filter_map(|t| t.tkl_at(k)).collect();
            Summary::of(&v).map(|tkl| KSummary { k, tkl })
        })
        .collect();
    SampleSizeRun { n, n_trials: trials.len(), trials, histogram, selection_failures, tkl_by_k, selected_tkl }
}

/// Runs independent trials at sample size `n`: sample, fit K = 1..=k_max,
/// map to forward parameters, select with every method and optionally score
/// every K by Monte Carlo tKL against the scenario truth.
pub fn run_selection_trials(scenario: &Scenario, n: usize, settings: &TrialSettings) -> Result<TrialReport> {
    if settings.n_trials < 1 {
        return Err(GlomeError::OutOfRange("n_trials must be at least 1".into()));
    }
    if settings.k_max < 1 {
        return Err(GlomeError::OutOfRange("k_max must be at least 1".into()));
    }
    settings.em.validate()?;
    let truth = scenario.truth()?;
    let trials: Vec<TrialRecord> = (0..settings.n_trials)
        .into_par_iter()
        .map(|t| run_trial(scenario, &truth, n, settings, t))
        .collect();
    Ok(TrialReport {
        scenario: scenario.name().to_string(),
        k_max: settings.k_max,
        n_y: settings.n_y,
        methods: settings.methods.clone(),
        seed: settings.seed,
        runs: vec![aggregate(n, settings, trials)],
        decay: None,
    })
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, se(b))`.
pub fn ols_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let m = xs.len();
    if m < 2 || ys.len() != m {
        return Err(GlomeError::OutOfRange("line fit needs at least two paired points".into()));
    }
    let mf = m as f64;
    let mx = xs.iter().sum::<f64>() / mf;
    let my = ys.iter().sum::<f64>() / mf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(GlomeError::OutOfRange("line fit needs distinct abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let se = if m > 2 {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (mf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, intercept, se))
}

/// Log-log regression of the mean tKL of the `method`-selected model against n.
pub fn decay_regression(runs: &[SampleSizeRun], method: SelectionMethod) -> Result<DecayRegression> {
    let points: Vec<DecayPoint> = runs
        .iter()
        .filter_map(|r| {
            r.selected_summary(method)
                .map(|s| DecayPoint { n: r.n, mean_tkl: s.mean, std_error: s.std_error })
        })
        .collect();
    if points.len() < 3 {
        return Err(GlomeError::OutOfRange(format!("decay regression needs 3 sample sizes, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|p| !(p.mean_tkl > 0.0)) {
        return Err(GlomeError::NonFinite(format!("mean tKL {} at n = {} has no logarithm", p.mean_tkl, p.n)));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_tkl.ln()).collect();
    let (slope, intercept, slope_std_error) = ols_line(&xs, &ys)?;
    Ok(DecayRegression { method, slope, intercept, slope_std_error, points })
}

/// Trials at every n of the grid, then the log-log decay fit of the jump-selected tKL.
pub fn error_decay_study(scenario: &Scenario, n_grid: &[usize], settings: &TrialSettings) -> Result<TrialReport> {
    if n_grid.len() < 3 {
        return Err(GlomeError::OutOfRange("n_grid needs at least 3 sample sizes".into()));
    }
    let mut settings = settings.clone();
    if settings.n_y.is_none() {
        settings.n_y = Some(100);
    }
    if !settings.methods.contains(&SelectionMethod::Jump) {
        settings.methods.insert(0, SelectionMethod::Jump);
    }
    let mut report: Option<TrialReport> = None;
    for &n in n_grid {
        let per_n = TrialSettings { seed: rng::derive_seed(settings.seed, &[n as u64]), ..settings.clone() };
        let r = run_selection_trials(scenario, n, &per_n)?;
        match report.as_mut() {
            None => {
                let mut r = r;
                r.seed = settings.seed;
                report = Some(r);
            }
            Some(acc) => acc.runs.extend(r.runs),
        }
    }
    let mut report = report.expect("non-empty grid");
    report.decay = Some(decay_regression(&report.runs, SelectionMethod::Jump)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_quartiles() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!(s.median, 3.0);
        assert_eq!(s.q1, 2.0);
        assert_eq!(s.q3, 4.0);
        assert_eq!(s.mean, 3.0);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn ols_on_exact_power_law() {
        let ns = [500.0f64, 1000.0, 2000.0, 4000.0];
        let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
        let ys: Vec<f64> = ns.iter().map(|n| (3.0 / n).ln()).collect();
        let (slope, intercept, se) = ols_line(&xs, &ys).unwrap();
        assert!((slope + 1.0).abs() < 1e-12);
        assert!((intercept - 3f64.ln()).abs() < 1e-10);
        assert!(se < 1e-10);
    }

    #[test]
    fn ws_truth_matches_forward_model() {
        let truth = ScenarioTruth::Ws;
        let dens = ForwardDensity::new(&ws_forward_params()).unwrap();
        let data = sample_scenario(&Scenario::Ws, 200, 3).unwrap();
        for i in 0..data.n() {
            let (x, y) = (data.x_row(i), data.y_row(i));
            assert!((truth.ln_density(y, x) - dens.ln_density(y, x)).abs() < 1e-12);
        }
    }

    #[test]
    fn scenario_sampling_is_deterministic() {
        let a = sample_scenario(&Scenario::Ms, 50, 11).unwrap();
        let b = sample_scenario(&Scenario::Ms, 50, 11).unwrap();
        let c = sample_scenario(&Scenario::Ms, 50, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
