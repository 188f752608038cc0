//! CSV ingestion and versioned JSON result documents.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::em::FitResult;
use crate::error::{GlomeError, Result};
use crate::model::{inverse_to_forward, Dataset, ForwardParams, InverseParams};
use crate::selection::SelectionResult;
use crate::simulate::{DecayRegression, TrialReport};

pub const SCHEMA_VERSION: u64 = 1;

/// Which CSV columns form the covariate and response blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub x_columns: Vec<String>,
    pub y_columns: Vec<String>,
    /// Use the listed x columns as responses and the y columns as covariates.
    #[serde(default)]
    pub swap_roles: bool,
}

impl DatasetSpec {
    pub fn new(path: impl Into<PathBuf>, x_columns: &[&str], y_columns: &[&str]) -> Self {
        DatasetSpec {
            path: path.into(),
            x_columns: x_columns.iter().map(|s| s.to_string()).collect(),
            y_columns: y_columns.iter().map(|s| s.to_string()).collect(),
            swap_roles: false,
        }
    }
}

/// Loads the file named by `spec`.
pub fn load_csv(spec: &DatasetSpec) -> Result<Dataset> {
    let file = File::open(&spec.path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => GlomeError::FileNotFound(spec.path.clone()),
        _ => GlomeError::from(e),
    })?;
    read_csv(BufReader::new(file), spec)
}

/// Parses CSV text with a header row; `spec.path` is ignored.
///
/// Reported rows are 1-based data rows (the header is row 0).
pub fn read_csv<R: Read>(reader: R, spec: &DatasetSpec) -> Result<Dataset> {
    if spec.x_columns.is_empty() || spec.y_columns.is_empty() {
        return Err(GlomeError::InvalidParams("x and y column lists must be non-empty".into()));
    }
    if let Some(c) = spec.x_columns.iter().find(|c| spec.y_columns.contains(c)) {
        return Err(GlomeError::InvalidParams(format!("column `{c}` is listed as both x and y")));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let locate = |names: &[String]| -> Result<Vec<usize>> {
        names
            .iter()
            .map(|name| {
                headers.iter().position(|h| h == name).ok_or_else(|| GlomeError::MissingColumn(name.clone()))
            })
            .collect()
    };
    let x_idx = locate(&spec.x_columns)?;
    let y_idx = locate(&spec.y_columns)?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut n = 0;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| GlomeError::ParseError { row, column: String::new(), message: e.to_string() })?;
        let cell = |j: usize, name: &str| -> Result<f64> {
            let raw = record.get(j).ok_or_else(|| GlomeError::ParseError {
                row,
                column: name.to_string(),
                message: "missing cell".into(),
            })?;
            let v: f64 = raw.parse().map_err(|_| GlomeError::ParseError {
                row,
                column: name.to_string(),
                message: format!("`{raw}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(GlomeError::ParseError { row, column: name.to_string(), message: format!("non-finite value `{raw}`") });
            }
            Ok(v)
        };
        for (&j, name) in x_idx.iter().zip(&spec.x_columns) {
            xs.push(cell(j, name)?);
        }
        for (&j, name) in y_idx.iter().zip(&spec.y_columns) {
            ys.push(cell(j, name)?);
        }
        n += 1;
    }
    let data = Dataset::from_rows(n, x_idx.len(), y_idx.len(), xs, ys)?;
    Ok(if spec.swap_roles { data.swap_roles() } else { data })
}

/// Writes a dataset as CSV with the given column names.
pub fn write_dataset_csv<W: Write>(data: &Dataset, x_names: &[String], y_names: &[String], writer: W) -> Result<()> {
    if x_names.len() != data.d() {
        return Err(GlomeError::DimensionMismatch { context: "x column names", expected: data.d(), found: x_names.len() });
    }
    if y_names.len() != data.l() {
        return Err(GlomeError::DimensionMismatch { context: "y column names", expected: data.l(), found: y_names.len() });
    }
    let mut w = csv_writer(writer);
    w.write_record(x_names.iter().chain(y_names))?;
    for i in 0..data.n() {
        w.write_record(data.x_row(i).iter().chain(data.y_row(i)).map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Default column names: `x`/`y` for scalars, `x1..xD`/`y1..yL` otherwise.
pub fn default_column_names(prefix: &str, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=dim).map(|j| format!("{prefix}{j}")).collect()
    }
}

fn csv_writer<W: Write>(writer: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer)
}

fn opt_float(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:?}"))
}

/// Selected-K counts: `n,method,K,count`, one row per (n, method, K).
pub fn write_histogram_csv<W: Write>(report: &TrialReport, writer: W) -> Result<()> {
    let mut w = csv_writer(writer);
    w.write_record(["n", "method", "K", "count"])?;
    for run in &report.runs {
        for h in &run.histogram {
            w.write_record([run.n.to_string(), h.method.name().to_string(), h.k.to_string(), h.count.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-(K, trial) tKL estimates: `n,K,trial,tkl`; failed estimates are left empty.
pub fn write_boxplot_csv<W: Write>(report: &TrialReport, writer: W) -> Result<()> {
    let mut w = csv_writer(writer);
    w.write_record(["n", "K", "trial", "tkl"])?;
    for run in &report.runs {
        for k in 1..=report.k_max {
            for t in &run.trials {
                w.write_record([run.n.to_string(), k.to_string(), t.trial.to_string(), opt_float(t.tkl_at(k))])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-trial selections: `n,method,trial,K,tkl` (K empty when selection failed).
pub fn write_selected_csv<W: Write>(report: &TrialReport, writer: W) -> Result<()> {
    let mut w = csv_writer(writer);
    w.write_record(["n", "method", "trial", "K", "tkl"])?;
    for run in &report.runs {
        for &method in &report.methods {
            for t in &run.trials {
                let k = t.chosen(method);
                w.write_record([
                    run.n.to_string(),
                    method.name().to_string(),
                    t.trial.to_string(),
                    k.map_or_else(String::new, |k| k.to_string()),
                    opt_float(k.and_then(|k| t.tkl_at(k))),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Error-decay points: `n,mean_tkl,stderr`.
pub fn write_decay_csv<W: Write>(decay: &DecayRegression, writer: W) -> Result<()> {
    let mut w = csv_writer(writer);
    w.write_record(["n", "mean_tkl", "stderr"])?;
    for p in &decay.points {
        w.write_record([p.n.to_string(), format!("{:?}", p.mean_tkl), format!("{:?}", p.std_error)])?;
    }
    w.flush()?;
    Ok(())
}

/// A fitted inverse model together with its forward image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub fit: FitResult,
    pub forward: ForwardParams,
}

impl FitReport {
    pub fn new(fit: FitResult) -> Result<Self> {
        let forward = inverse_to_forward(&fit.params)?;
        Ok(FitReport { fit, forward })
    }

    pub fn inverse(&self) -> &InverseParams {
        &self.fit.params
    }
}

/// A result type stored as a versioned JSON document.
pub trait Report: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

impl Report for FitResult {
    const KIND: &'static str = "fit_result";
}

impl Report for FitReport {
    const KIND: &'static str = "fit_report";
}

impl Report for SelectionResult {
    const KIND: &'static str = "selection_result";
}

impl Report for TrialReport {
    const KIND: &'static str = "trial_report";
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    schema_version: u64,
    kind: &'a str,
    body: &'a T,
}

pub fn to_json_string<T: Report>(report: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Envelope { schema_version: SCHEMA_VERSION, kind: T::KIND, body: report })?;
    s.push('\n');
    Ok(s)
}

pub fn from_json_str<T: Report>(text: &str) -> Result<T> {
    let mut doc: Value = serde_json::from_str(text)?;
    let obj = doc.as_object_mut().ok_or_else(|| GlomeError::Serde("document is not a JSON object".into()))?;
    let version = obj.get("schema_version").and_then(Value::as_u64);
    if version != Some(SCHEMA_VERSION) {
        return Err(GlomeError::SchemaVersionMismatch { found: version, expected: SCHEMA_VERSION });
    }
    match obj.get("kind").and_then(Value::as_str) {
        Some(kind) if kind == T::KIND => {}
        other => {
            return Err(GlomeError::Serde(format!("expected a `{}` document, found {:?}", T::KIND, other)));
        }
    }
    let body = obj.remove("body").ok_or_else(|| GlomeError::Serde("document has no body".into()))?;
    Ok(serde_json::from_value(body)?)
}

pub fn save_report<T: Report>(report: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(to_json_string(report)?.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn load_report<T: Report>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => GlomeError::FileNotFound(path.to_path_buf()),
        _ => GlomeError::from(e),
    })?;
    from_json_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(x: &[&str], y: &[&str]) -> DatasetSpec {
        DatasetSpec::new("inline.csv", x, y)
    }

    #[test]
    fn three_row_file() {
        let text = "a,b\n1,2\n3,4\n5,6\n";
        let d = read_csv(text.as_bytes(), &spec(&["a"], &["b"])).unwrap();
        assert_eq!((d.n(), d.d(), d.l()), (3, 1, 1));
        assert_eq!(d.x_row(2), &[5.0]);
        assert_eq!(d.y_row(0), &[2.0]);
        let mut s = spec(&["a"], &["b"]);
        s.swap_roles = true;
        let swapped = read_csv(text.as_bytes(), &s).unwrap();
        assert_eq!(swapped.x_matrix(), d.y_matrix());
        assert_eq!(swapped.y_matrix(), d.x_matrix());
    }

    #[test]
    fn located_errors() {
        let e = read_csv("a,b\n1,2\n3,oops\n".as_bytes(), &spec(&["a"], &["b"])).unwrap_err();
        assert!(matches!(e, GlomeError::ParseError { row: 2, ref column, .. } if column == "b"));
        let e = read_csv("a,b\nNaN,2\n".as_bytes(), &spec(&["a"], &["b"])).unwrap_err();
        assert!(matches!(e, GlomeError::ParseError { row: 1, ref column, .. } if column == "a"));
        let e = read_csv("a,b\ninf,2\n".as_bytes(), &spec(&["a"], &["b"])).unwrap_err();
        assert!(matches!(e, GlomeError::ParseError { row: 1, .. }));
        let e = read_csv("a,b\n1,2\n".as_bytes(), &spec(&["a"], &["c"])).unwrap_err();
        assert_eq!(e, GlomeError::MissingColumn("c".into()));
        let e = load_csv(&DatasetSpec::new("/nonexistent/file.csv", &["a"], &["b"])).unwrap_err();
        assert!(matches!(e, GlomeError::FileNotFound(_)));
    }

    #[test]
    fn missing_schema_version_is_rejected() {
        let e = from_json_str::<SelectionResult>(r#"{"kind":"selection_result","body":{}}"#).unwrap_err();
        assert_eq!(e, GlomeError::SchemaVersionMismatch { found: None, expected: 1 });
        let e = from_json_str::<SelectionResult>(r#"{"schema_version":2,"kind":"selection_result","body":{}}"#).unwrap_err();
        assert_eq!(e, GlomeError::SchemaVersionMismatch { found: Some(2), expected: 1 });
    }
}
