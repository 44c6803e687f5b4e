//! Versioned JSON reports plus a CSV sidecar for curve data.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct EnvironmentInfo {
    pub package_version: &'static str,
    pub os: &'static str,
    pub arch: &'static str,
    pub prediction_threads: usize,
}

impl Default for EnvironmentInfo {
    fn default() -> Self {
        EnvironmentInfo {
            package_version: env!("CARGO_PKG_VERSION"),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            prediction_threads: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct MethodReport {
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_rmse_vs_exact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_rmse_vs_exact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_prediction_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clamp_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fnorm_error: Option<f64>,
}

impl MethodReport {
    pub fn ok() -> Self {
        MethodReport {
            status: "ok".into(),
            ..Default::default()
        }
    }

    pub fn failed(msg: impl Into<String>) -> Self {
        MethodReport {
            status: format!("error: {}", msg.into()),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AbsErrorSummary {
    pub max: f64,
    pub mean: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub b: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_rmse_vs_exact: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    pub step_size: f64,
}

/// Per-query curves for 1-D experiments.
#[derive(Debug, Clone, Serialize, Default)]
pub struct CurveTable {
    pub x: Vec<f64>,
    /// Column name -> values (means/variances per method).
    pub columns: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub environment: EnvironmentInfo,
    /// Echo of the effective configuration (after defaults).
    pub config: serde_json::Value,
    pub methods: BTreeMap<String, MethodReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_error_summary: Option<BTreeMap<String, AbsErrorSummary>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_vs_b: Option<Vec<SweepPoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepPoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distill_trace: Option<Vec<TracePoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curves: Option<CurveTable>,
}

impl Report {
    pub fn new(experiment: &str, seed: u64, config: serde_json::Value) -> Self {
        Report {
            schema_version: REPORT_SCHEMA_VERSION,
            experiment: experiment.to_string(),
            seed,
            environment: EnvironmentInfo::default(),
            config,
            methods: BTreeMap::new(),
            abs_error_summary: None,
            error_vs_b: None,
            sweep: None,
            distill_trace: None,
            curves: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        if let Some(csv_path) = sidecar_path(path) {
            self.write_curves_csv(&csv_path)?;
        }
        Ok(())
    }

    /// Curve sidecar: sweep points or 1-D curves, whichever the experiment
    /// produced.
    fn write_curves_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        if let Some(curves) = &self.curves {
            let mut header = vec!["x".to_string()];
            header.extend(curves.columns.keys().cloned());
            out.push_str(&header.join(","));
            out.push('\n');
            for i in 0..curves.x.len() {
                let mut row = vec![format!("{}", curves.x[i])];
                for col in curves.columns.values() {
                    row.push(format!("{}", col[i]));
                }
                out.push_str(&row.join(","));
                out.push('\n');
            }
        } else if let Some(points) = self.sweep.as_ref().or(self.error_vs_b.as_ref()) {
            out.push_str("b,objective,smse,variance_rmse_vs_exact\n");
            for p in points {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    p.b,
                    p.objective.map_or(String::new(), |v| v.to_string()),
                    p.smse.map_or(String::new(), |v| v.to_string()),
                    p.variance_rmse_vs_exact
                        .map_or(String::new(), |v| v.to_string()),
                ));
            }
        } else {
            return Ok(());
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

fn sidecar_path(report_path: &Path) -> Option<std::path::PathBuf> {
    let stem = report_path.file_stem()?.to_string_lossy();
    Some(report_path.with_file_name(format!("{stem}.curves.csv")))
}

/// Max/mean/quartile summary of a sample (consumes and sorts it).
pub fn summarize_abs_errors(mut values: Vec<f64>) -> AbsErrorSummary {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    let q = |f: f64| values[(f * (n - 1) as f64).round() as usize];
    AbsErrorSummary {
        max: values[n - 1],
        mean: values.iter().sum::<f64>() / n as f64,
        q25: q(0.25),
        q50: q(0.50),
        q75: q(0.75),
    }
}
