//! `gpdistill`: train exact GP teachers, compress their kernels into sparse
//! low-rank students, predict, and run the benchmark experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gpdistill_core::{
    io, DistillConfig, ExactGpModel, GradientMode, KernelSpec, TrainOptions,
};
use gpdistill::config::{ExperimentKind, KernelChoice, RunConfig};
use gpdistill::csvio;
use gpdistill::error::{HarnessError, Result};
use gpdistill::experiments;

#[derive(Parser)]
#[command(
    name = "gpdistill",
    about = "Gaussian-process kernel distillation toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Rbf,
    Ard,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Exact gradient of the squared Frobenius objective.
    Analytic,
    /// Doubled-diagonal single-factor update.
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Train an exact GP teacher on a CSV dataset.
    Train(TrainArgs),
    /// Compress a trained teacher into a sparse low-rank student.
    Distill(DistillArgs),
    /// Predict with a saved model on feature rows from a CSV.
    Predict(PredictArgs),
    /// Dataset benchmark (SMSE, variance closeness, prediction timing).
    Bench(ExperimentArgs),
    /// Kernel reconstruction comparison on synthetic 1-D inputs.
    Reconstruct(ExperimentArgs),
    /// 1-D toy-curve comparison of means and variances.
    Toy1d(ExperimentArgs),
    /// Sparsity sweep of the distilled student.
    SweepB(ExperimentArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the target column.
    #[arg(long)]
    target: String,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "rbf")]
    kernel: KernelArg,
    /// Optimizer steps over the marginal likelihood.
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 1.0)]
    init_lengthscale: f64,
    #[arg(long, default_value_t = 0.1)]
    init_noise: f64,
    /// Standardize features and targets (statistics stored in the model).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    standardize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DistillArgs {
    /// Teacher model produced by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Output student model file.
    #[arg(long)]
    out: PathBuf,
    /// Number of inducing points.
    #[arg(long, default_value_t = 100)]
    m: usize,
    /// Maximum non-zeros per weight row.
    #[arg(long, default_value_t = 10)]
    b: usize,
    /// Gradient mode for the descent loop.
    #[arg(long, value_enum, default_value = "analytic")]
    mode: ModeArg,
    /// Raw step size (default derives from the kernel scale).
    #[arg(long)]
    eta: Option<f64>,
    /// Gradient iterations.
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Accept steps only on objective decrease.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    line_search: bool,
    /// Optional JSON file for the iteration log.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PredictArgs {
    /// Teacher or student model file.
    #[arg(long)]
    model: PathBuf,
    /// CSV of feature rows (header row required).
    #[arg(long)]
    data: PathBuf,
    /// Column to drop if the file still carries the target.
    #[arg(long)]
    target: Option<String>,
    /// Output CSV (`mean,variance,clamped`).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report output path (JSON, with a `.curves.csv` sidecar).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => train(args),
        Command::Distill(args) => distill_cmd(args),
        Command::Predict(args) => predict(args),
        Command::Bench(args) => experiment(args, ExperimentKind::Bench),
        Command::Reconstruct(args) => experiment(args, ExperimentKind::Reconstruct),
        Command::Toy1d(args) => experiment(args, ExperimentKind::Toy1d),
        Command::SweepB(args) => experiment(args, ExperimentKind::SweepB),
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let data = csvio::load_csv_full(&args.data, &args.target, args.standardize)?;
    let lengthscales = match args.kernel {
        KernelArg::Rbf => vec![args.init_lengthscale],
        KernelArg::Ard => vec![args.init_lengthscale; data.dim()],
    };
    let family = match args.kernel {
        KernelArg::Rbf => KernelChoice::Rbf,
        KernelArg::Ard => KernelChoice::Ard,
    };
    let init = KernelSpec::new(family.family(), lengthscales, args.init_noise)
        .map_err(HarnessError::Core)?;
    let opts = TrainOptions {
        steps: args.steps,
        learning_rate: args.lr,
    };
    let model = ExactGpModel::train(data, init, &opts).map_err(HarnessError::Core)?;
    io::save_exact_model(&args.out, &model).map_err(HarnessError::Core)?;
    let lml = model.log_marginal_likelihood().map_err(HarnessError::Core)?;
    println!(
        "trained on {} rows ({} features); log marginal likelihood {lml:.6}; wrote {}",
        model.data().n(),
        model.data().dim(),
        args.out.display()
    );
    Ok(())
}

fn distill_cmd(args: DistillArgs) -> Result<()> {
    let teacher = io::load_exact_model::<f64>(&args.model).map_err(HarnessError::Core)?;
    let cfg = DistillConfig {
        m: args.m,
        b: args.b,
        step_size: args.eta,
        iterations: args.iters,
        gradient_mode: match args.mode {
            ModeArg::Analytic => GradientMode::Analytic,
            ModeArg::Paper => GradientMode::DiagDoubled,
        },
        line_search: args.line_search,
    };
    let (student, trace) = experiments::distill_teacher(&teacher, &cfg, args.seed)?;
    io::save_distilled_model(&args.out, &student).map_err(HarnessError::Core)?;
    if let Some(log_path) = &args.log {
        let mut s = serde_json::to_string_pretty(&trace)?;
        s.push('\n');
        std::fs::write(log_path, s)?;
    }
    let final_obj = trace.last().map_or(f64::NAN, |t| t.objective);
    println!(
        "distilled to m={} b={} in {} accepted steps; final objective {final_obj:.6e}; wrote {}",
        args.m,
        args.b,
        trace.len().saturating_sub(1),
        args.out.display()
    );
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let kind = io::sniff_model_kind(&args.model).map_err(HarnessError::Core)?;
    let rows = match kind {
        io::ModelKind::Exact => {
            let model = io::load_exact_model::<f64>(&args.model).map_err(HarnessError::Core)?;
            let raw = csvio::load_features(&args.data, args.target.as_deref(), model.data().dim())?;
            let std = standardize_queries(&raw, model.data())?;
            let (means, vars) = model.predict(&std).map_err(HarnessError::Core)?;
            means
                .iter()
                .zip(&vars)
                .map(|(&m, &v)| {
                    (
                        model.data().destandardize_target(m),
                        model.data().destandardize_variance(v),
                        false,
                    )
                })
                .collect::<Vec<_>>()
        }
        io::ModelKind::Distilled => {
            let model = io::load_distilled_model::<f64>(&args.model).map_err(HarnessError::Core)?;
            let raw = csvio::load_features(&args.data, args.target.as_deref(), model.dim())?;
            // Bundles carry the teacher's standardization statistics, so raw
            // feature rows map into the model space and predictions back out.
            let queries = match model.scaling() {
                Some(s) => {
                    let mut rows = Vec::with_capacity(raw.rows() * raw.cols());
                    for i in 0..raw.rows() {
                        rows.extend(s.standardize_features(raw.row(i)).map_err(HarnessError::Core)?);
                    }
                    gpdistill_core::DenseMatrix::from_vec(raw.rows(), raw.cols(), rows)
                        .map_err(HarnessError::Core)?
                }
                None => raw,
            };
            let preds = model.predict_batch(&queries).map_err(HarnessError::Core)?;
            preds
                .iter()
                .map(|p| match model.scaling() {
                    Some(s) => (
                        s.destandardize_target(p.mean),
                        s.destandardize_variance(p.variance),
                        p.clamp_flag,
                    ),
                    None => (p.mean, p.variance, p.clamp_flag),
                })
                .collect()
        }
    };
    csvio::write_predictions_csv(&args.out, &rows)?;
    println!("wrote {} predictions to {}", rows.len(), args.out.display());
    Ok(())
}

fn standardize_queries(
    raw: &gpdistill_core::Matrix64,
    like: &gpdistill_core::Dataset64,
) -> Result<gpdistill_core::Matrix64> {
    let mut rows = Vec::with_capacity(raw.rows() * raw.cols());
    for i in 0..raw.rows() {
        rows.extend(like.standardize_features(raw.row(i)).map_err(HarnessError::Core)?);
    }
    gpdistill_core::DenseMatrix::from_vec(raw.rows(), raw.cols(), rows)
        .map_err(HarnessError::Core)
}

fn experiment(args: ExperimentArgs, kind: ExperimentKind) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let kind = cfg.resolve_experiment(kind)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let report = match kind {
        ExperimentKind::Reconstruct => experiments::run_reconstruction(&cfg)?,
        ExperimentKind::Toy1d => experiments::run_toy1d(&cfg)?,
        ExperimentKind::Bench => experiments::run_benchmark(&cfg)?,
        ExperimentKind::SweepB => experiments::run_sweep_b(&cfg)?,
    };
    report.write(&args.out)?;
    println!("wrote report to {}", args.out.display());
    Ok(())
}
