//! Experiment reports, pass/fail metrics and log-log slope fits.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// How a metric's value is judged against its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// `|value - target| <= tol`.
    Near,
    /// `value <= tol`.
    AtMost,
    /// `value >= tol`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
    pub check: Check,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

impl Metric {
    pub fn near(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        let pass = (value - target).abs() <= tol;
        Self {
            name: name.into(),
            value,
            tol,
            pass,
            check: Check::Near,
            target: Some(target),
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tol,
            pass: value <= tol,
            check: Check::AtMost,
            target: None,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tol,
            pass: value >= tol,
            check: Check::AtLeast,
            target: None,
        }
    }
}

/// A numeric table emitted as CSV next to the JSON report.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(&self.columns).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| format!("{v:e}")))
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub params: BTreeMap<String, Value>,
    pub metrics: Vec<Metric>,
    pub artifacts: Vec<String>,
    pub seed: u64,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl ExperimentReport {
    pub fn new(experiment: impl Into<String>, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            params: BTreeMap::new(),
            metrics: Vec::new(),
            artifacts: Vec::new(),
            seed,
            tables: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, v: impl Serialize) {
        self.params.insert(
            key.to_string(),
            serde_json::to_value(v).unwrap_or(Value::Null),
        );
    }

    pub fn metric(&mut self, m: Metric) {
        self.metrics.push(m);
    }

    pub fn metric_value(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.name == name)
            .map(|m| m.value)
    }

    pub fn get(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn table(&mut self, t: Table) {
        self.tables.push(t);
    }

    /// Conjunction of all metric verdicts; a report without metrics fails.
    pub fn pass(&self) -> bool {
        !self.metrics.is_empty() && self.metrics.iter().all(|m| m.pass)
    }

    pub fn failures(&self) -> Vec<&Metric> {
        self.metrics.iter().filter(|m| !m.pass).collect()
    }

    /// Merge another report's metrics, prefixing their names.
    pub fn absorb(&mut self, prefix: &str, other: ExperimentReport) {
        for mut m in other.metrics {
            m.name = format!("{prefix}.{}", m.name);
            self.metrics.push(m);
        }
        for mut t in other.tables {
            t.name = format!("{prefix}_{}", t.name);
            self.tables.push(t);
        }
    }

    /// Write `report.json` and one CSV per table into `dir`; artifact paths
    /// are recorded relative to `dir`.
    pub fn write(&mut self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        self.artifacts.clear();
        for t in &self.tables {
            let name = format!("{}.csv", t.name);
            t.write_csv(&dir.join(&name))?;
            self.artifacts.push(name);
        }
        let path = dir.join("report.json");
        std::fs::write(&path, self.to_json()?)?;
        Ok(path)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Least-squares slope of `log y` against `log x`, with its standard error.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::Domain(format!(
            "{} abscissae for {} ordinates",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 4 {
        return Err(Error::Domain(format!(
            "slope fit needs at least 4 points, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(
            "slope fit needs positive finite values".into(),
        ));
    }
    let inc = xs.windows(2).all(|w| w[1] > w[0]);
    let dec = xs.windows(2).all(|w| w[1] < w[0]);
    if !inc && !dec {
        return Err(Error::Domain("abscissae must be strictly monotone".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let (slope, _, stderr) = linear_fit(&lx, &ly);
    Ok((slope, stderr))
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, stderr(a))`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let sse: f64 = x.iter().zip(y).map(|(u, v)| (v - a * u - b).powi(2)).sum();
    let stderr = if x.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (a, b, stderr)
}

/// `n` log-spaced values from `a` to `b` inclusive.
pub fn geomspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_power_law() {
        let xs = geomspace(0.1, 10.0, 7);
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let (s, e) = fit_slope(&xs, &ys).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && e < 1e-12);
    }

    #[test]
    fn noisy_quartic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs = geomspace(0.01, 1.0, 12);
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x.powi(4) * (1.0 + 0.01 * rng.gen_range(-1.0..1.0)))
            .collect();
        let (s, _) = fit_slope(&xs, &ys).unwrap();
        assert!((s - 4.0).abs() < 0.1);
    }

    #[test]
    fn flat_single_decade() {
        let xs = geomspace(1.0, 10.0, 5);
        let (s, _) = fit_slope(&xs, &[3.0; 5]).unwrap();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_slope(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(fit_slope(&[1.0, 2.0, 3.0, 4.0], &[1.0, 0.0, 3.0, 4.0]).is_err());
        assert!(fit_slope(&[1.0, 3.0, 2.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn empty_report_fails() {
        let mut r = ExperimentReport::new("x", 1);
        assert!(!r.pass());
        r.metric(Metric::near("a", 1.0, 1.05, 0.1));
        r.metric(Metric::at_most("b", 1e-9, 1e-8));
        assert!(r.pass());
        r.metric(Metric::at_least("c", 0.5, 1.0));
        assert!(!r.pass());
        assert_eq!(r.failures().len(), 1);
    }
}
