//! Penalized model selection over the number of components.
//!
//! Every method minimizes `NLL(K) + κ (dim(K) + z_K)` for some κ; they differ in
//! how κ is chosen: fixed, AIC (κ = 1), BIC (κ = ln(n)/2), or calibrated from the
//! data by the dimension-jump or slope criterion (κ = 2κ̂).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::em::RangeFit;
use crate::error::{GlomeError, Result};
use crate::model::{inverse_to_forward, log_likelihood, CovStructure, Dataset, Direction};

/// Number of free parameters of a K-component GLLiM with dimensions (D, L).
pub fn model_dimension(k: usize, d: usize, l: usize, cov_structure: CovStructure) -> usize {
    let noise = match cov_structure {
        CovStructure::Full => d * (d + 1) / 2,
        CovStructure::Diagonal => d,
        CovStructure::Isotropic => 1,
    };
    k * (1 + d * (l + 1) + noise + l * (l + 1) / 2 + l) - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionEntry {
    pub k: usize,
    pub dim: usize,
    pub neg_loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionTable {
    entries: Vec<CriterionEntry>,
    n: usize,
}

impl CriterionTable {
    /// Sorts by K and checks that dimensions strictly increase with K.
    pub fn new(mut entries: Vec<CriterionEntry>, n: usize) -> Result<Self> {
        if entries.is_empty() {
            return Err(GlomeError::EmptyTable);
        }
        entries.sort_by_key(|e| e.k);
        for w in entries.windows(2) {
            if w[0].k == w[1].k {
                return Err(GlomeError::InvalidTable(format!("duplicate K = {}", w[0].k)));
            }
            if w[1].dim <= w[0].dim {
                return Err(GlomeError::InvalidTable(format!(
                    "dimension not increasing between K = {} and K = {}",
                    w[0].k, w[1].k
                )));
            }
        }
        if let Some(e) = entries.iter().find(|e| !e.neg_loglik.is_finite()) {
            return Err(GlomeError::NonFinite(format!("neg_loglik for K = {}", e.k)));
        }
        Ok(CriterionTable { entries, n })
    }

    /// Builds the table from forward conditional log-likelihoods of a range of inverse fits.
    ///
    /// Failed fits are skipped.
    pub fn from_fits(data: &Dataset, fits: &[RangeFit], cov_structure: CovStructure) -> Result<Self> {
        let mut entries = Vec::new();
        for f in fits {
            let Ok(res) = &f.result else { continue };
            let forward = inverse_to_forward(&res.params)?;
            let ll = log_likelihood(data, &forward, Direction::Forward)?;
            entries.push(CriterionEntry {
                k: f.k,
                dim: model_dimension(f.k, data.d(), data.l(), cov_structure),
                neg_loglik: -ll,
            });
        }
        CriterionTable::new(entries, data.n())
    }

    pub fn entries(&self) -> &[CriterionEntry] {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn contains_k(&self, k: usize) -> bool {
        self.entries.iter().any(|e| e.k == k)
    }

    /// Writes `K,dim,neg_loglik` CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(["K", "dim", "neg_loglik"])?;
        for e in &self.entries {
            w.write_record([e.k.to_string(), e.dim.to_string(), format!("{:?}", e.neg_loglik)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `K,dim,neg_loglik` CSV; `n` is the sample size behind the likelihoods.
    pub fn read_csv<R: Read>(reader: R, n: usize) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| GlomeError::MissingColumn(name.to_string()))
        };
        let (ck, cd, cn) = (col("K")?, col("dim")?, col("neg_loglik")?);
        let mut entries = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |c: usize, name: &str| -> Result<&str> {
                rec.get(c).map(str::trim).ok_or_else(|| GlomeError::ParseError {
                    row: row + 1,
                    column: name.into(),
                    message: "missing field".into(),
                })
            };
            let perr = |name: &str, msg: String| GlomeError::ParseError { row: row + 1, column: name.into(), message: msg };
            entries.push(CriterionEntry {
                k: field(ck, "K")?.parse().map_err(|e: std::num::ParseIntError| perr("K", e.to_string()))?,
                dim: field(cd, "dim")?.parse().map_err(|e: std::num::ParseIntError| perr("dim", e.to_string()))?,
                neg_loglik: field(cn, "neg_loglik")?
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| perr("neg_loglik", e.to_string()))?,
            });
        }
        CriterionTable::new(entries, n)
    }

    fn penalized_argmin(&self, kappa: f64, offsets: Option<&[f64]>) -> usize {
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for (i, e) in self.entries.iter().enumerate() {
            let z = offsets.map_or(0.0, |o| o[i]);
            let v = e.neg_loglik + kappa * (e.dim as f64 + z);
            if v < best_val {
                best_val = v;
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Jump,
    Slope,
    Aic,
    Bic,
    FixedKappa,
}

impl SelectionMethod {
    pub fn name(self) -> &'static str {
        match self {
            SelectionMethod::Jump => "jump",
            SelectionMethod::Slope => "slope",
            SelectionMethod::Aic => "aic",
            SelectionMethod::Bic => "bic",
            SelectionMethod::FixedKappa => "kappa",
        }
    }
}

impl std::str::FromStr for SelectionMethod {
    type Err = GlomeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jump" => Ok(SelectionMethod::Jump),
            "slope" => Ok(SelectionMethod::Slope),
            "aic" => Ok(SelectionMethod::Aic),
            "bic" => Ok(SelectionMethod::Bic),
            "kappa" | "fixed_kappa" => Ok(SelectionMethod::FixedKappa),
            other => Err(GlomeError::OutOfRange(format!("unknown selection method `{other}`"))),
        }
    }
}

/// One breakpoint of the κ ↦ selected-model path: from `kappa` on, `selected_k` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub kappa: f64,
    pub selected_k: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen_k: usize,
    /// Calibrated minimal constant κ̂ (jump, slope), the given κ (fixed), NaN for AIC/BIC.
    #[serde(with = "nan_as_null")]
    pub kappa_hat: f64,
    /// The κ actually used in the penalty.
    pub kappa_penalty: f64,
    pub method: SelectionMethod,
    pub path: Vec<PathPoint>,
    /// K range (inclusive) regressed by the slope criterion.
    pub fit_window: Option<(usize, usize)>,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Minimizes `NLL + κ (dim + z_K)`; ties go to the smaller K.
pub fn select_fixed_kappa(table: &CriterionTable, kappa: f64, offsets: Option<&[f64]>) -> Result<SelectionResult> {
    if table.entries.is_empty() {
        return Err(GlomeError::EmptyTable);
    }
    if !(kappa >= 0.0) {
        return Err(GlomeError::OutOfRange(format!("kappa must be nonnegative, got {kappa}")));
    }
    if let Some(o) = offsets {
        if o.len() != table.entries.len() {
            return Err(GlomeError::DimensionMismatch { context: "penalty offsets", expected: table.entries.len(), found: o.len() });
        }
    }
    let i = table.penalized_argmin(kappa, offsets);
    Ok(SelectionResult {
        chosen_k: table.entries[i].k,
        kappa_hat: kappa,
        kappa_penalty: kappa,
        method: SelectionMethod::FixedKappa,
        path: Vec::new(),
        fit_window: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InformationCriterion {
    Aic,
    Bic,
}

/// AIC (κ = 1) or BIC (κ = ln(n)/2).
pub fn select_aic_bic(table: &CriterionTable, which: InformationCriterion) -> Result<SelectionResult> {
    if table.entries.is_empty() {
        return Err(GlomeError::EmptyTable);
    }
    let (kappa, method) = match which {
        InformationCriterion::Aic => (1.0, SelectionMethod::Aic),
        InformationCriterion::Bic => {
            if table.n < 2 {
                return Err(GlomeError::OutOfRange("BIC needs n ≥ 2".into()));
            }
            ((table.n as f64).ln() / 2.0, SelectionMethod::Bic)
        }
    };
    let mut res = select_fixed_kappa(table, kappa, None)?;
    res.method = method;
    res.kappa_hat = f64::NAN;
    Ok(res)
}

/// Exact piecewise-constant path κ ↦ selected model, as breakpoints in increasing κ.
///
/// The first point is at κ = 0. Each later point is the κ at which the selection
/// switches to a smaller model (the lower convex hull of (dim, NLL)).
pub fn selection_path(table: &CriterionTable) -> Vec<PathPoint> {
    let e = &table.entries;
    let mut cur = table.penalized_argmin(0.0, None);
    let mut path = vec![PathPoint { kappa: 0.0, selected_k: e[cur].k, dim: e[cur].dim }];
    loop {
        // Next κ at which a smaller model ties with the current one.
        let mut next: Option<(f64, usize)> = None;
        for j in 0..cur {
            let kappa = (e[j].neg_loglik - e[cur].neg_loglik) / (e[cur].dim - e[j].dim) as f64;
            let kappa = kappa.max(path.last().map_or(0.0, |p| p.kappa));
            match next {
                Some((best, _)) if kappa > best => {}
                // Equal κ: prefer the smaller model (j iterates upward, so keep the first).
                Some((best, _)) if kappa == best => {}
                _ => next = Some((kappa, j)),
            }
        }
        let Some((kappa, j)) = next else { break };
        path.push(PathPoint { kappa, selected_k: e[j].k, dim: e[j].dim });
        cur = j;
    }
    path
}

/// Dimension-jump calibration: κ̂ is the breakpoint with the largest drop in
/// selected dimension (largest κ̂ on ties); the model is selected at 2κ̂.
pub fn jump_criterion(table: &CriterionTable) -> Result<SelectionResult> {
    if table.entries.is_empty() {
        return Err(GlomeError::EmptyTable);
    }
    if table.entries.len() < 2 {
        return Err(GlomeError::DegeneratePath);
    }
    let path = selection_path(table);
    let mut best: Option<(usize, f64)> = None;
    for w in path.windows(2) {
        let jump = w[0].dim - w[1].dim;
        match best {
            Some((size, _)) if jump < size => {}
            _ => best = Some((jump, w[1].kappa)),
        }
    }
    let Some((_, kappa_hat)) = best else {
        return Err(GlomeError::DegeneratePath);
    };
    let mut res = select_fixed_kappa(table, 2.0 * kappa_hat, None)?;
    res.method = SelectionMethod::Jump;
    res.kappa_hat = kappa_hat;
    res.path = path;
    Ok(res)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Siegel's repeated-median line fit; returns `(slope, intercept)`.
pub fn repeated_median_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let m = xs.len();
    let mut per_point: Vec<f64> = (0..m)
        .map(|i| {
            let mut slopes: Vec<f64> = (0..m)
                .filter(|&j| j != i && xs[j] != xs[i])
                .map(|j| (ys[j] - ys[i]) / (xs[j] - xs[i]))
                .collect();
            median(&mut slopes)
        })
        .collect();
    let slope = median(&mut per_point);
    let mut intercepts: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| y - slope * x).collect();
    (slope, median(&mut intercepts))
}

/// Slope calibration: robust slope of NLL against dimension over the most complex
/// `window_fraction` of the models, then κ = 2|slope|.
pub fn slope_criterion(table: &CriterionTable, window_fraction: f64) -> Result<SelectionResult> {
    if table.entries.is_empty() {
        return Err(GlomeError::EmptyTable);
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(GlomeError::OutOfRange(format!("window fraction {window_fraction} outside (0, 1]")));
    }
    let m = table.entries.len();
    let size = ((m as f64 * window_fraction).ceil() as usize).min(m);
    if size < 3 {
        return Err(GlomeError::WindowTooSmall { size });
    }
    let window = &table.entries[m - size..];
    let xs: Vec<f64> = window.iter().map(|e| e.dim as f64).collect();
    let ys: Vec<f64> = window.iter().map(|e| e.neg_loglik).collect();
    let (slope, _) = repeated_median_fit(&xs, &ys);
    let kappa_hat = slope.abs();
    let mut res = select_fixed_kappa(table, 2.0 * kappa_hat, None)?;
    res.method = SelectionMethod::Slope;
    res.kappa_hat = kappa_hat;
    res.fit_window = Some((window[0].k, window[size - 1].k));
    Ok(res)
}

/// Dispatches on `method`; `kappa` is required for [`SelectionMethod::FixedKappa`].
pub fn select(table: &CriterionTable, method: SelectionMethod, kappa: Option<f64>, window_fraction: f64) -> Result<SelectionResult> {
    match method {
        SelectionMethod::Jump => jump_criterion(table),
        SelectionMethod::Slope => slope_criterion(table, window_fraction),
        SelectionMethod::Aic => select_aic_bic(table, InformationCriterion::Aic),
        SelectionMethod::Bic => select_aic_bic(table, InformationCriterion::Bic),
        SelectionMethod::FixedKappa => {
            let kappa = kappa.ok_or_else(|| GlomeError::OutOfRange("fixed-kappa selection needs a kappa".into()))?;
            select_fixed_kappa(table, kappa, None)
        }
    }
}
