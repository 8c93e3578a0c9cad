//! Scenario runner: reads a scenario file, executes one experiment, and
//! writes a config echo, module artifacts and `report.json`.

pub mod config;
mod experiments;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use config::{Experiment, Identity, ModelKind, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<String>,
    pub model_kind: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub thresholds: BTreeMap<String, f64>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

impl Report {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug)]
pub struct ReportBundle {
    pub report: Report,
    pub out_dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
}

/// Metrics, thresholds and artifacts produced by one experiment.
#[derive(Debug, Default)]
pub(crate) struct Outcome {
    pub metrics: BTreeMap<String, f64>,
    pub thresholds: BTreeMap<String, f64>,
    pub checks: Vec<bool>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    /// Records a metric. Non-finite values cannot be stored in JSON, so
    /// they fail the run with a warning instead.
    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        let name = name.into();
        if value.is_finite() {
            self.metrics.insert(name, value);
        } else {
            self.warn(format!("metric {name} is not finite ({value})"));
            self.checks.push(false);
        }
    }

    /// Records `value <= limit` as a pass criterion.
    pub fn at_most(&mut self, name: &str, value: f64, limit: f64) {
        self.metric(name, value);
        self.thresholds.insert(format!("{name}_max"), limit);
        self.checks.push(value <= limit);
    }

    pub fn check(&mut self, ok: bool) {
        self.checks.push(ok);
    }

    pub fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    pub fn write(&mut self, dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, contents)?;
        self.artifacts.push(path);
        Ok(())
    }
}

/// Runs one scenario into `out_dir`.
///
/// Invalid configurations fail before anything is written. Failures during
/// the experiment are recorded in `report.json`, which is always written once
/// validation succeeds.
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path) -> Result<ReportBundle> {
    config.validate()?;
    let start = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let echo = out_dir.join("config.toml");
    std::fs::write(&echo, config.to_toml()?)?;

    let result = experiments::run(config, out_dir);
    let mut report = Report {
        experiment: config.experiment.name().to_string(),
        identity: config
            .identity
            .filter(|_| config.experiment == Experiment::IdentityCheck)
            .map(|i| {
                serde_json::to_value(i)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default()
            }),
        model_kind: match config.model.kind {
            ModelKind::Linear => "linear".into(),
            ModelKind::Nonlinear => "nonlinear".into(),
        },
        seed: config.seed,
        metrics: BTreeMap::new(),
        thresholds: BTreeMap::new(),
        pass: false,
        error: None,
        warnings: Vec::new(),
        wall_time_s: 0.0,
    };
    let mut artifacts = vec![echo];
    match result {
        Ok(out) => {
            report.pass = out.checks.iter().all(|c| *c);
            report.metrics = out.metrics;
            report.thresholds = out.thresholds;
            report.warnings = out.warnings;
            artifacts.extend(out.artifacts);
        }
        Err(e) => {
            log::error!("{e}");
            report.error = Some(e.to_string());
        }
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    let path = out_dir.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    artifacts.push(path);
    Ok(ReportBundle {
        report,
        out_dir: out_dir.to_path_buf(),
        artifacts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub delta: Option<f64>,
    /// `a / b`.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDiff {
    pub experiment: String,
    pub rows: Vec<MetricDelta>,
}

impl ReportDiff {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:e}"));
        let mut s = format!(
            "{:<40} {:>24} {:>24} {:>24} {:>24}\n",
            "metric", "a", "b", "a-b", "a/b"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<40} {:>24} {:>24} {:>24} {:>24}\n",
                r.metric,
                fmt(r.a),
                fmt(r.b),
                fmt(r.delta),
                fmt(r.ratio)
            ));
        }
        s
    }
}

/// Tabulates metrics that differ between two reports of the same kind.
pub fn compare_reports(a: &Report, b: &Report) -> Result<ReportDiff> {
    if a.experiment != b.experiment || a.identity != b.identity || a.model_kind != b.model_kind {
        return Err(Error::Mismatch(format!(
            "cannot compare {} ({}) with {} ({})",
            a.experiment, a.model_kind, b.experiment, b.model_kind
        )));
    }
    let mut names: Vec<&String> = a.metrics.keys().chain(b.metrics.keys()).collect();
    names.sort();
    names.dedup();
    let rows = names
        .into_iter()
        .filter_map(|name| {
            let (va, vb) = (a.metrics.get(name).copied(), b.metrics.get(name).copied());
            if va == vb {
                return None;
            }
            let (delta, ratio) = match (va, vb) {
                (Some(x), Some(y)) => (Some(x - y), (y != 0.0).then(|| x / y)),
                _ => (None, None),
            };
            Some(MetricDelta {
                metric: name.clone(),
                a: va,
                b: vb,
                delta,
                ratio,
            })
        })
        .collect();
    Ok(ReportDiff {
        experiment: a.experiment.clone(),
        rows,
    })
}

pub fn compare_report_files(a: &Path, b: &Path) -> Result<ReportDiff> {
    compare_reports(&Report::load(a)?, &Report::load(b)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub param: String,
    pub values: Vec<f64>,
    pub reports: Vec<Report>,
    /// Observed orders `log(m_k / m_{k+1}) / log(v_k / v_{k+1})` per metric.
    pub orders: BTreeMap<String, Vec<Option<f64>>>,
}

/// Runs the scenario once per parameter value, each in its own
/// subdirectory, and writes `sweep.json` and `sweep.csv`.
pub fn sweep(
    config: &ScenarioConfig,
    param: &str,
    values: &[f64],
    out_dir: &Path,
) -> Result<SweepSummary> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| config.with_param(param, v))
        .collect::<Result<Vec<_>>>()?;
    for c in &configs {
        c.validate()?;
    }
    let mut reports = Vec::with_capacity(values.len());
    for (c, v) in configs.iter().zip(values) {
        let dir = out_dir.join(format!("{param}={v}"));
        reports.push(run_scenario(c, &dir)?.report);
    }
    let mut orders: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    if let Some(first) = reports.first() {
        for name in first.metrics.keys() {
            let row = (0..reports.len().saturating_sub(1))
                .map(|k| {
                    let m0 = reports[k].metrics.get(name)?.abs();
                    let m1 = reports[k + 1].metrics.get(name)?.abs();
                    let r = (values[k] / values[k + 1]).ln();
                    (m0 > 0.0 && m1 > 0.0 && r != 0.0).then(|| (m0 / m1).ln() / r)
                })
                .collect();
            orders.insert(name.clone(), row);
        }
    }
    let summary = SweepSummary {
        param: param.to_string(),
        values: values.to_vec(),
        reports,
        orders,
    };
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("sweep.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    std::fs::write(out_dir.join("sweep.csv"), summary.csv())?;
    Ok(summary)
}

impl SweepSummary {
    /// One row per value: the parameter, pass flag and every metric.
    pub fn csv(&self) -> String {
        let names: Vec<&String> = self.orders.keys().collect();
        let mut csv = format!("{},pass", self.param);
        for n in &names {
            csv.push_str(&format!(",{n}"));
        }
        csv.push('\n');
        for (v, r) in self.values.iter().zip(&self.reports) {
            csv.push_str(&format!("{v:e},{}", r.pass));
            for n in &names {
                match r.metrics.get(*n) {
                    Some(m) => csv.push_str(&format!(",{m:e}")),
                    None => csv.push(','),
                }
            }
            csv.push('\n');
        }
        csv
    }
}
