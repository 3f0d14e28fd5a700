//! Serialization of reports: rounded JSON, CSV tables and SVG charts.

mod chart;
mod tables;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::analysis::Report;

pub use chart::{charts_for, render_svg, ChartError, ChartKind, ChartSpec, Series};
pub use tables::{tables_for, Table};

/// Significant digits kept for every float written to a report.
pub const SIGNIFICANT_DIGITS: usize = 6;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Chart(#[from] ChartError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits. Non-finite values
/// pass through.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().expect("formatted float parses")
}

/// Rounds every float in a JSON tree in place. Integers are left alone.
pub fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            *v = serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Serialized tree with rounded floats.
pub fn to_rounded_value<T: Serialize>(value: &T) -> Result<Value, ReportError> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    Ok(v)
}

/// Pretty JSON with rounded floats and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, ReportError> {
    let mut s = serde_json::to_string_pretty(&to_rounded_value(value)?)?;
    s.push('\n');
    Ok(s)
}

/// The report exactly as a reader of its JSON file sees it.
pub fn rounded(report: &Report) -> Result<Report, ReportError> {
    Ok(serde_json::from_value(to_rounded_value(report)?)?)
}

pub fn read_report(path: &Path) -> Result<Report, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// One file produced for a report, with its name relative to the output
/// directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// JSON, CSV and SVG artifacts of a report, in a fixed order.
pub fn artifacts(report: &Report) -> Result<Vec<Artifact>, ReportError> {
    let value = to_rounded_value(report)?;
    let mut json = serde_json::to_string_pretty(&value)?;
    json.push('\n');
    let mut out = vec![Artifact { name: format!("{}.json", report.name()), bytes: json.into_bytes() }];
    for table in tables_for(report.name(), &value) {
        out.push(Artifact { name: format!("{}.csv", table.name), bytes: table.to_csv()? });
    }
    let reread: Report = serde_json::from_value(value)?;
    for (name, spec) in charts_for(&reread) {
        out.push(Artifact { name: format!("{name}.svg"), bytes: render_svg(&spec)?.into_bytes() });
    }
    Ok(out)
}

/// Writes artifacts under `dir`, returning the names written.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<String>, ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut names = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.bytes).map_err(io_err(&path))?;
        names.push(a.name.clone());
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_six_digits() {
        assert_eq!(round_sig(0.123456789), 0.123457);
        assert_eq!(round_sig(-98765.4321), -98765.4);
        assert_eq!(round_sig(1.0), 1.0);
        assert_eq!(round_sig(0.0), 0.0);
        assert_eq!(round_sig(1e-9 / 3.0), 3.33333e-10);
    }

    #[test]
    fn integers_untouched() {
        let mut v = serde_json::json!({"n": 1234567891u64, "x": [2.0f64 / 3.0]});
        round_value(&mut v);
        assert_eq!(v.to_string(), r#"{"n":1234567891,"x":[0.666667]}"#);
    }
}
