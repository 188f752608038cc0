use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use glome_core::{CovStructure, EmConfig, SelectionMethod};
use serde_json::Value;

#[derive(Debug, Parser)]
#[command(name = "glome", version, about = "Fit, select and evaluate Gaussian-gated mixture-of-experts regressions")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "GLOME_THREADS")]
    pub threads: Option<usize>,

    /// JSON file of flag values; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a dataset from a simulation scenario and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit a K-component model by EM and write inverse and forward parameters.
    Fit(FitArgs),
    /// Fit K = 1..=k-max and select the number of components.
    Select(SelectArgs),
    /// Repeated simulate/fit/select trials with divergence scoring.
    Experiment(ExperimentArgs),
    /// Evaluate the theoretical penalty bound and κ₀.
    Bounds(BoundsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScenarioArg {
    Ws,
    Ms,
}

impl From<ScenarioArg> for glome_core::Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Ws => glome_core::Scenario::Ws,
            ScenarioArg::Ms => glome_core::Scenario::Ms,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CovArg {
    Full,
    Diag,
    Iso,
}

impl From<CovArg> for CovStructure {
    fn from(c: CovArg) -> Self {
        match c {
            CovArg::Full => CovStructure::Full,
            CovArg::Diag => CovStructure::Diagonal,
            CovArg::Iso => CovStructure::Isotropic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Jump,
    Slope,
    Aic,
    Bic,
    Kappa,
}

impl From<MethodArg> for SelectionMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Jump => SelectionMethod::Jump,
            MethodArg::Slope => SelectionMethod::Slope,
            MethodArg::Aic => SelectionMethod::Aic,
            MethodArg::Bic => SelectionMethod::Bic,
            MethodArg::Kappa => SelectionMethod::FixedKappa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DivergenceArg {
    Tkl,
    None,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ScenarioArg::Ws)]
    pub scenario: ScenarioArg,
    /// Number of (x, y) pairs.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "data.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Covariate columns, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "x")]
    pub x_cols: Vec<String>,
    /// Response columns, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "y")]
    pub y_cols: Vec<String>,
    /// Use the y columns as covariates and the x columns as responses.
    #[arg(long)]
    pub swap_roles: bool,
}

#[derive(Debug, Args)]
pub struct EmArgs {
    /// EM restarts per K; the best log-likelihood wins.
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Relative log-likelihood change that stops EM.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Minimum points per class in the initial partition.
    #[arg(long, default_value_t = 10)]
    pub min_points: usize,
    #[arg(long, value_enum, default_value_t = CovArg::Full)]
    pub cov: CovArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl EmArgs {
    pub fn config(&self) -> EmConfig {
        EmConfig {
            max_iter: self.max_iter,
            rel_tol: self.tol,
            n_restarts: self.restarts,
            min_points_per_class: self.min_points,
            cov_structure: self.cov.into(),
            seed: self.seed,
            ..EmConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of mixture components.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long, default_value = "fit.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Jump)]
    pub method: MethodArg,
    /// Penalty multiplier; required by and only valid with `--method kappa`.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Fraction of the most complex models regressed by the slope method.
    #[arg(long, default_value_t = 0.5)]
    pub window_fraction: f64,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long, default_value = "selection.json")]
    pub out: PathBuf,
    /// Criterion table path (defaults to criterion.csv beside --out).
    #[arg(long)]
    pub criterion_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, value_enum, default_value_t = ScenarioArg::Ws)]
    pub scenario: ScenarioArg,
    /// Sample sizes, comma separated; three or more also fit the error decay.
    #[arg(long, value_delimiter = ',', default_value = "2000")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
    #[arg(long, default_value_t = 30)]
    pub trials: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "jump,slope")]
    pub methods: Vec<MethodArg>,
    /// Penalty multiplier for the `kappa` method.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub window_fraction: f64,
    /// Divergence scored for every fitted K.
    #[arg(long, value_enum, default_value_t = DivergenceArg::Tkl)]
    pub divergence: DivergenceArg,
    /// Responses drawn per covariate in the Monte Carlo divergence.
    #[arg(long, default_value_t = 100)]
    pub n_y: usize,
    /// Store per-trial wall-clock times (makes output run-dependent).
    #[arg(long)]
    pub record_runtime: bool,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long, default_value = "results")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Model dimension.
    #[arg(long)]
    pub dim: usize,
    /// Sample size.
    #[arg(long)]
    pub n: usize,
    /// Entropy constant of the model collection.
    #[arg(long, default_value_t = 1.0)]
    pub frak_c: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 2.0)]
    pub c1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eps_d: f64,
    /// Constant of the inner concentration bound.
    #[arg(long, default_value_t = 27.0)]
    pub inner_kappa: f64,
    /// Kraft weight offset z_m.
    #[arg(long, default_value_t = 0.0)]
    pub z: f64,
    /// Penalty multiplier (defaults to κ₀).
    #[arg(long)]
    pub kappa: Option<f64>,
}

fn check_kappa(uses_kappa: bool, kappa: Option<f64>) -> Result<()> {
    match (uses_kappa, kappa) {
        (true, None) => bail!("method `kappa` requires --kappa"),
        (false, Some(_)) => bail!("--kappa conflicts with the chosen method(s); it is only used by method `kappa`"),
        (_, Some(k)) if !(k >= 0.0 && k.is_finite()) => bail!("--kappa must be a finite non-negative number"),
        _ => Ok(()),
    }
}

impl Cli {
    /// Cross-flag checks that clap cannot express.
    pub fn check(&self) -> Result<()> {
        if self.threads == Some(0) {
            bail!("--threads must be at least 1");
        }
        match &self.command {
            Command::Select(a) => check_kappa(a.method == MethodArg::Kappa, a.kappa),
            Command::Experiment(a) => {
                if a.methods.is_empty() {
                    bail!("--methods needs at least one method");
                }
                check_kappa(a.methods.contains(&MethodArg::Kappa), a.kappa)
            }
            _ => Ok(()),
        }
    }
}

const SUBCOMMANDS: [&str; 5] = ["simulate", "fit", "select", "experiment", "bounds"];

/// Removes `--config PATH` from `argv` and splices the file's flags in right
/// after the subcommand name, so later command-line flags override them.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut out = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        match arg.to_str() {
            Some("--config") => {
                config = Some(PathBuf::from(it.next().context("--config needs a path")?));
            }
            Some(s) if s.starts_with("--config=") => config = Some(PathBuf::from(&s["--config=".len()..])),
            _ => out.push(arg),
        }
    }
    let Some(path) = config else { return Ok(out) };
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read config {}", path.display()))?;
    let doc: Value = serde_json::from_str(&text).with_context(|| format!("config {} is not valid JSON", path.display()))?;
    let Value::Object(map) = doc else { bail!("config {} must be a JSON object", path.display()) };
    let mut flags = Vec::new();
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => flags.push(OsString::from(flag)),
            Value::Number(n) => flags.extend([OsString::from(flag), OsString::from(n.to_string())]),
            Value::String(s) => flags.extend([OsString::from(flag), OsString::from(s)]),
            Value::Array(items) => {
                let parts: Result<Vec<String>> = items
                    .iter()
                    .map(|v| match v {
                        Value::String(s) => Ok(s.clone()),
                        Value::Number(n) => Ok(n.to_string()),
                        other => bail!("config key `{key}`: unsupported list item {other}"),
                    })
                    .collect();
                flags.extend([OsString::from(flag), OsString::from(parts?.join(","))]);
            }
            Value::Object(_) => bail!("config key `{key}`: nested objects are not supported"),
        }
    }
    let pos = out
        .iter()
        .position(|a| a.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s)))
        .map_or(out.len(), |p| p + 1);
    out.splice(pos..pos, flags);
    Ok(out)
}
