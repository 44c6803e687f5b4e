//! Experiment configuration, loaded from JSON.

use std::path::{Path, PathBuf};

use gpdistill_core::{DistillConfig, GradientMode, KernelFamily};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Reconstruct,
    Toy1d,
    Bench,
    SweepB,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataConfig {
    /// CSV file with a header row; `target` names the label column.
    Csv { path: PathBuf, target: String },
    /// Regression targets drawn from a squared-exponential GP.
    RbfDraw {
        n: usize,
        d: usize,
        #[serde(default = "default_draw_lengthscale")]
        lengthscale: f64,
        #[serde(default = "default_draw_noise_sd")]
        noise_sd: f64,
    },
    /// The 1-D toy curve with unit observation noise.
    Toy1d { n: usize },
}

fn default_draw_lengthscale() -> f64 {
    2.0
}

fn default_draw_noise_sd() -> f64 {
    0.15
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Exact,
    Sor,
    Fitc,
    Kiss1d,
    #[default]
    Distill,
}

impl MethodName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::Exact => "exact",
            MethodName::Sor => "sor",
            MethodName::Fitc => "fitc",
            MethodName::Kiss1d => "kiss1d",
            MethodName::Distill => "distill",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Rbf,
    Ard,
}

impl KernelChoice {
    pub fn family(&self) -> KernelFamily {
        match self {
            KernelChoice::Rbf => KernelFamily::Rbf,
            KernelChoice::Ard => KernelFamily::Ard,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSettings {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_kernel")]
    pub kernel: KernelChoice,
    #[serde(default = "default_init_lengthscale")]
    pub init_lengthscale: f64,
    #[serde(default = "default_init_noise")]
    pub init_noise: f64,
}

fn default_steps() -> usize {
    200
}

fn default_learning_rate() -> f64 {
    0.1
}

fn default_kernel() -> KernelChoice {
    KernelChoice::Rbf
}

fn default_init_lengthscale() -> f64 {
    1.0
}

fn default_init_noise() -> f64 {
    0.1
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            steps: default_steps(),
            learning_rate: default_learning_rate(),
            kernel: default_kernel(),
            init_lengthscale: default_init_lengthscale(),
            init_noise: default_init_noise(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InducingSettings {
    pub m: usize,
}

impl Default for InducingSettings {
    fn default() -> Self {
        InducingSettings { m: 100 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSettings {
    pub size: usize,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings { size: 400 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradientModeChoice {
    #[default]
    Analytic,
    Paper,
}

impl GradientModeChoice {
    pub fn mode(&self) -> GradientMode {
        match self {
            GradientModeChoice::Analytic => GradientMode::Analytic,
            GradientModeChoice::Paper => GradientMode::DiagDoubled,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistillSettings {
    #[serde(default = "default_distill_m")]
    pub m: usize,
    #[serde(default = "default_distill_b")]
    pub b: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub mode: GradientModeChoice,
    #[serde(default = "default_line_search")]
    pub line_search: bool,
    #[serde(default)]
    pub step_size: Option<f64>,
}

fn default_distill_m() -> usize {
    100
}

fn default_distill_b() -> usize {
    10
}

fn default_iterations() -> usize {
    100
}

fn default_line_search() -> bool {
    true
}

impl Default for DistillSettings {
    fn default() -> Self {
        DistillSettings {
            m: default_distill_m(),
            b: default_distill_b(),
            iterations: default_iterations(),
            mode: GradientModeChoice::default(),
            line_search: default_line_search(),
            step_size: None,
        }
    }
}

impl DistillSettings {
    pub fn to_core(&self) -> DistillConfig<f64> {
        DistillConfig {
            m: self.m,
            b: self.b,
            step_size: self.step_size,
            iterations: self.iterations,
            gradient_mode: self.mode.mode(),
            line_search: self.line_search,
        }
    }
}

/// Kernel-reconstruction experiment settings. Defaults mirror the simulation
/// setup: 1000 sorted inputs from N(0, 25), a shared-lengthscale kernel,
/// distillation with 100 inducing points at sparsity 6, subset-of-regressors
/// with 200, and a 400-node interpolation grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructSettings {
    #[serde(default = "default_reconstruct_n")]
    pub n: usize,
    #[serde(default = "default_reconstruct_lengthscale")]
    pub lengthscale: f64,
    #[serde(default = "default_distill_m")]
    pub distill_m: usize,
    #[serde(default = "default_reconstruct_b")]
    pub distill_b: usize,
    #[serde(default = "default_reconstruct_iterations")]
    pub iterations: usize,
    #[serde(default = "default_sor_m")]
    pub sor_m: usize,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "default_b_sweep")]
    pub b_sweep: Vec<usize>,
}

fn default_reconstruct_n() -> usize {
    1000
}

fn default_reconstruct_lengthscale() -> f64 {
    16.0
}

fn default_reconstruct_b() -> usize {
    6
}

fn default_reconstruct_iterations() -> usize {
    100
}

fn default_sor_m() -> usize {
    200
}

fn default_grid_size() -> usize {
    400
}

fn default_b_sweep() -> Vec<usize> {
    vec![2, 3, 4, 5, 6, 7, 8, 9, 10]
}

impl Default for ReconstructSettings {
    fn default() -> Self {
        ReconstructSettings {
            n: default_reconstruct_n(),
            lengthscale: default_reconstruct_lengthscale(),
            distill_m: default_distill_m(),
            distill_b: default_reconstruct_b(),
            iterations: default_reconstruct_iterations(),
            sor_m: default_sor_m(),
            grid_size: default_grid_size(),
            b_sweep: default_b_sweep(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TimingSettings {
    /// Number of test points timed (capped at the test-set size).
    #[serde(default = "default_timing_points")]
    pub points: usize,
    /// Repetitions; the median per-point time is reported.
    #[serde(default = "default_timing_reps")]
    pub repetitions: usize,
}

fn default_timing_points() -> usize {
    1000
}

fn default_timing_reps() -> usize {
    5
}

impl Default for TimingSettings {
    fn default() -> Self {
        TimingSettings {
            points: default_timing_points(),
            repetitions: default_timing_reps(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default = "default_split")]
    pub split: f64,
    #[serde(default = "default_standardize")]
    pub standardize: bool,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodName>,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub sor: InducingSettings,
    #[serde(default)]
    pub fitc: InducingSettings,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub distill: DistillSettings,
    #[serde(default = "default_sweep_b_values")]
    pub sweep_b: Vec<usize>,
    #[serde(default)]
    pub reconstruct: ReconstructSettings,
    #[serde(default)]
    pub timing: TimingSettings,
}

fn default_split() -> f64 {
    0.8
}

fn default_standardize() -> bool {
    true
}

fn default_methods() -> Vec<MethodName> {
    vec![
        MethodName::Exact,
        MethodName::Fitc,
        MethodName::Distill,
    ]
}

fn default_sweep_b_values() -> Vec<usize> {
    vec![5, 10, 15, 20, 25, 30, 35, 40]
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::File {
            path: path.to_path_buf(),
            source: e,
        })?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| HarnessError::config(format!("invalid config {path:?}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(HarnessError::config(format!(
                "split must lie in (0, 1), got {}",
                self.split
            )));
        }
        if let Some(DataConfig::Csv { path, .. }) = &self.data {
            if !path.exists() {
                return Err(HarnessError::config(format!(
                    "dataset file {path:?} does not exist"
                )));
            }
        }
        if self.sweep_b.windows(2).any(|w| w[0] > w[1]) {
            return Err(HarnessError::config("sweep_b must be non-decreasing"));
        }
        if self.reconstruct.b_sweep.windows(2).any(|w| w[0] > w[1]) {
            return Err(HarnessError::config(
                "reconstruct.b_sweep must be non-decreasing",
            ));
        }
        Ok(())
    }

    /// Resolve the experiment kind against the CLI subcommand.
    pub fn resolve_experiment(&self, from_cli: ExperimentKind) -> Result<ExperimentKind> {
        match self.experiment {
            None => Ok(from_cli),
            Some(k) if k == from_cli => Ok(k),
            Some(k) => Err(HarnessError::config(format!(
                "config declares experiment {k:?} but the subcommand requests {from_cli:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gets_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.split, 0.8);
        assert!(cfg.standardize);
        assert_eq!(cfg.distill.m, 100);
        assert_eq!(cfg.reconstruct.n, 1000);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_split() {
        let err = serde_json::from_str::<RunConfig>(r#"{"nonsense": 1}"#);
        assert!(err.is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"split": 1.5}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn experiment_resolution() {
        let mut cfg = RunConfig::default();
        assert_eq!(
            cfg.resolve_experiment(ExperimentKind::Bench).unwrap(),
            ExperimentKind::Bench
        );
        cfg.experiment = Some(ExperimentKind::Toy1d);
        assert!(cfg.resolve_experiment(ExperimentKind::Bench).is_err());
        assert_eq!(
            cfg.resolve_experiment(ExperimentKind::Toy1d).unwrap(),
            ExperimentKind::Toy1d
        );
    }

    #[test]
    fn data_config_parses() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"data": {"rbf_draw": {"n": 100, "d": 3}}, "seed": 9}"#,
        )
        .unwrap();
        match cfg.data {
            Some(DataConfig::RbfDraw { n, d, .. }) => {
                assert_eq!((n, d), (100, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
