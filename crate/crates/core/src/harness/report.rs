//! Experiment reports: per-metric records, data tables, JSON and CSV output.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Result;

/// How `empirical` is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    /// `|empirical - predicted| <= tolerance`
    Within,
    /// `empirical <= tolerance`
    AtMost,
    /// `empirical >= tolerance`
    AtLeast,
    /// Reported for reference; always passes.
    Informational,
}

// Equality treats NaN fields as equal, so identical runs compare equal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    #[serde(with = "nan_as_null")]
    pub empirical: f64,
    pub predicted: Option<f64>,
    pub standard_error: Option<f64>,
    #[serde(with = "nan_as_null")]
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
    /// The module function that produced the prediction or bound.
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

impl PartialEq for Metric {
    fn eq(&self, o: &Self) -> bool {
        self.name == o.name
            && same(self.empirical, o.empirical)
            && self.predicted == o.predicted
            && self.standard_error == o.standard_error
            && same(self.tolerance, o.tolerance)
            && self.comparison == o.comparison
            && self.pass == o.pass
            && self.provenance == o.provenance
            && self.error == o.error
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Metric {
    fn build(
        name: &str,
        provenance: &str,
        empirical: f64,
        predicted: Option<f64>,
        se: f64,
        tolerance: f64,
        comparison: Comparison,
    ) -> Self {
        let pass = match comparison {
            Comparison::Within => predicted.is_some_and(|p| (empirical - p).abs() <= tolerance),
            Comparison::AtMost => empirical <= tolerance,
            Comparison::AtLeast => empirical >= tolerance,
            Comparison::Informational => true,
        };
        Self {
            name: name.into(),
            empirical,
            predicted: predicted.and_then(finite),
            standard_error: finite(se),
            tolerance,
            comparison,
            pass,
            provenance: provenance.into(),
            error: None,
        }
    }

    /// Passes when `|empirical - predicted| <= 3 se + abs_tol` (a NaN `se`
    /// contributes nothing).
    pub fn within(name: &str, provenance: &str, empirical: f64, predicted: f64, se: f64, abs_tol: f64) -> Self {
        let tol = if se.is_finite() { 3.0 * se + abs_tol } else { abs_tol };
        Self::build(name, provenance, empirical, Some(predicted), se, tol, Comparison::Within)
    }

    /// Passes when `empirical <= bound`; `reference` is shown alongside.
    pub fn at_most(name: &str, provenance: &str, empirical: f64, bound: f64, se: f64, reference: Option<f64>) -> Self {
        Self::build(name, provenance, empirical, reference, se, bound, Comparison::AtMost)
    }

    pub fn at_least(name: &str, provenance: &str, empirical: f64, bound: f64, se: f64, reference: Option<f64>) -> Self {
        Self::build(name, provenance, empirical, reference, se, bound, Comparison::AtLeast)
    }

    pub fn informational(name: &str, provenance: &str, empirical: f64, predicted: Option<f64>, se: f64) -> Self {
        Self::build(name, provenance, empirical, predicted, se, f64::NAN, Comparison::Informational)
    }

    /// A metric whose computation failed; it never passes.
    pub fn failed(name: &str, provenance: &str, err: &crate::error::Error) -> Self {
        Self {
            pass: false,
            error: Some(err.to_string()),
            ..Self::build(name, provenance, f64::NAN, None, f64::NAN, f64::NAN, Comparison::Within)
        }
    }
}

/// A rectangular numeric table exported next to the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(with = "nan_as_null_rows")]
    pub rows: Vec<Vec<f64>>,
}

impl PartialEq for Table {
    fn eq(&self, o: &Self) -> bool {
        self.name == o.name
            && self.columns == o.columns
            && self.rows.len() == o.rows.len()
            && self
                .rows
                .iter()
                .zip(&o.rows)
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| same(*x, *y)))
    }
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_float(*v)))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Experiment kind, or `validate` for the fast suite.
    pub suite: String,
    pub config: Option<ExperimentConfig>,
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub tables: Vec<Table>,
    pub wall_clock_seconds: f64,
    pub version: String,
}

impl Report {
    pub fn new(suite: &str, config: Option<ExperimentConfig>) -> Self {
        Self {
            suite: suite.into(),
            config,
            metrics: Vec::new(),
            tables: Vec::new(),
            wall_clock_seconds: 0.0,
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.metrics.iter().all(|m| m.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Metric> {
        self.metrics.iter().filter(|m| !m.pass)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Human-readable one-line-per-metric summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for m in &self.metrics {
            let status = if m.pass { "pass" } else { "FAIL" };
            let pred = m.predicted.map(|p| format!(" predicted {p:.6e}")).unwrap_or_default();
            let se = m.standard_error.map(|p| format!(" se {p:.2e}")).unwrap_or_default();
            let err = m.error.as_deref().map(|e| format!(" error: {e}")).unwrap_or_default();
            s.push_str(&format!(
                "[{status}] {}: {:.6e}{pred}{se} ({:?} {:.3e}){err}\n",
                m.name, m.empirical, m.comparison, m.tolerance
            ));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

const METRIC_COLUMNS: [&str; 9] =
    ["name", "empirical", "predicted", "standard_error", "tolerance", "comparison", "pass", "provenance", "error"];

fn format_float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:e}")
    }
}

/// JSON: the full report. CSV: the flat metric table (header only when empty).
pub fn write_report(report: &Report, path: &Path, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Json => {
            let w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(w, report)?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(METRIC_COLUMNS)?;
            for m in &report.metrics {
                let comparison = serde_json::to_value(m.comparison)?;
                w.write_record([
                    m.name.clone(),
                    format_float(m.empirical),
                    m.predicted.map(format_float).unwrap_or_default(),
                    m.standard_error.map(format_float).unwrap_or_default(),
                    format_float(m.tolerance),
                    comparison.as_str().unwrap_or_default().to_string(),
                    m.pass.to_string(),
                    m.provenance.clone(),
                    m.error.clone().unwrap_or_default(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Report> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

/// Writes `report.json`, `metrics.csv` and one `<table>.csv` per table into
/// `dir`, returning the paths written.
pub fn write_outputs(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = vec![dir.join("report.json"), dir.join("metrics.csv")];
    write_report(report, &written[0], ReportFormat::Json)?;
    write_report(report, &written[1], ReportFormat::Csv)?;
    for t in &report.tables {
        let p = dir.join(format!("{}.csv", t.name));
        t.write_csv(&p)?;
        written.push(p);
    }
    Ok(written)
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

mod nan_as_null_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let mapped: Vec<Vec<Option<f64>>> =
            rows.iter().map(|r| r.iter().map(|v| v.is_finite().then_some(*v)).collect()).collect();
        mapped.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let raw = Vec::<Vec<Option<f64>>>::deserialize(d)?;
        Ok(raw.into_iter().map(|r| r.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn sample_report() -> Report {
        let mut r = Report::new("clt", None);
        r.metrics.push(Metric::within("variance", "functionals::variance_v", 2.01, 2.0, 0.02, 0.0));
        r.metrics.push(Metric::at_most("spread", "bandlimits::decompose", 4.0, 30.0, f64::NAN, None));
        r.metrics.push(Metric::informational("slope", "stats::linear_fit", 0.1, Some(0.101), 0.01));
        r.metrics.push(Metric::failed("broken", "dbm::simulate_dbm", &Error::InvalidInput("x".into())));
        let mut t = Table::new("cf", &["xi", "re"]);
        t.push(vec![0.5, f64::NAN]);
        r.tables.push(t);
        r.wall_clock_seconds = 1.5;
        r
    }

    #[test]
    fn comparisons() {
        let r = sample_report();
        assert!(r.metrics[0].pass && r.metrics[1].pass && r.metrics[2].pass);
        assert!((r.metrics[0].tolerance - 0.06).abs() < 1e-15);
        assert!(!r.metrics[3].pass && !r.passed());
        assert_eq!(r.failures().count(), 1);
        assert!(!Metric::within("m", "p", 1.0, 2.0, 0.1, 0.5).pass);
        assert!(!Metric::within("m", "p", f64::NAN, 2.0, 0.1, 0.5).pass);
        assert!(Metric::at_least("m", "p", 0.95, 0.9, f64::NAN, None).pass);
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample_report();
        let p = dir.path().join("r.json");
        write_report(&r, &p, ReportFormat::Json).unwrap();
        let back = read_report(&p).unwrap();
        assert_eq!(back.metrics[..3], r.metrics[..3]);
        assert!(back.metrics[3].empirical.is_nan() && back.metrics[3].error.is_some());
        assert!(back.tables[0].rows[0][1].is_nan());
    }

    #[test]
    fn csv_rows_match_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample_report();
        let p = dir.path().join("m.csv");
        write_report(&r, &p, ReportFormat::Csv).unwrap();
        let mut rd = csv::Reader::from_path(&p).unwrap();
        assert_eq!(rd.headers().unwrap().len(), METRIC_COLUMNS.len());
        assert_eq!(rd.records().count(), r.metrics.len());

        let empty = Report::new("validate", None);
        write_report(&empty, &p, ReportFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("name,empirical"));
    }

    #[test]
    fn outputs_directory() {
        let dir = tempfile::tempdir().unwrap();
        let written = write_outputs(&sample_report(), &dir.path().join("out")).unwrap();
        assert_eq!(written.len(), 3);
        assert!(written.iter().all(|p| p.exists()));
    }
}
