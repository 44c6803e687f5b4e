//! Scripted experiments behind the CLI: kernel reconstruction, the 1-D toy
//! comparison, dataset benchmarks, and sparsity sweeps.

use std::collections::BTreeMap;

use gpdistill_core::{
    cholesky_with_jitter, distill, distill_kernel, error_vs_sparsity, fro_diff,
    kernel_matrix, kmeans, Dataset, Dataset64, DenseMatrix, DistilledModel, ExactGp64,
    ExactGpModel, GridDesign, GridInterpModel, KernelSpec, KernelSpec64, Matrix64,
    SorFitcModel, SorFitcVariant, TrainOptions,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DataConfig, MethodName, RunConfig, TrainSettings};
use crate::error::{HarnessError, Result};
use crate::metrics::{rmse, smse, variance_rmse};
use crate::report::{
    summarize_abs_errors, CurveTable, MethodReport, Report, SweepPoint, TracePoint,
};
use crate::synth;
use crate::timing::median_per_point_time;

fn config_echo(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null)
}

fn trace_points(trace: &[gpdistill_core::IterationRecord<f64>]) -> Vec<TracePoint> {
    trace
        .iter()
        .map(|r| TracePoint {
            iteration: r.iteration,
            objective: r.objective,
            step_size: r.step_size,
        })
        .collect()
}

fn init_spec(train: &TrainSettings, d: usize) -> Result<KernelSpec64> {
    let lengthscales = match train.kernel {
        crate::config::KernelChoice::Rbf => vec![train.init_lengthscale],
        crate::config::KernelChoice::Ard => vec![train.init_lengthscale; d],
    };
    Ok(KernelSpec::new(
        train.kernel.family(),
        lengthscales,
        train.init_noise,
    )?)
}

/// Shuffle, split, and standardize an in-memory dataset the same way
/// [`crate::csvio::load_csv`] treats files.
pub fn split_dataset(
    x: Matrix64,
    y: Vec<f64>,
    split: f64,
    standardize: bool,
    seed: u64,
) -> Result<(Dataset64, Dataset64)> {
    if !(split > 0.0 && split < 1.0) {
        return Err(HarnessError::config(format!(
            "split fraction must lie in (0, 1), got {split}"
        )));
    }
    let n = x.rows();
    if n < 4 {
        return Err(HarnessError::config("need at least 4 rows to split"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = ((split * n as f64).round() as usize).clamp(2, n - 1);
    let take = |ids: &[usize]| -> (Matrix64, Vec<f64>) {
        let xm = DenseMatrix::from_fn(ids.len(), x.cols(), |i, j| x.get(ids[i], j));
        let yv = ids.iter().map(|&i| y[i]).collect();
        (xm, yv)
    };
    let (x_tr, y_tr) = take(&order[..n_train]);
    let (x_te, y_te) = take(&order[n_train..]);
    if standardize {
        let train = Dataset::standardized(x_tr, y_tr)?;
        let test = Dataset::standardized_like(x_te, y_te, &train)?;
        Ok((train, test))
    } else {
        Ok((Dataset::new(x_tr, y_tr)?, Dataset::new(x_te, y_te)?))
    }
}

fn load_data(cfg: &RunConfig) -> Result<(Dataset64, Dataset64)> {
    match cfg
        .data
        .as_ref()
        .ok_or_else(|| HarnessError::config("this experiment requires a `data` section"))?
    {
        DataConfig::Csv { path, target } => {
            crate::csvio::load_csv(path, target, cfg.standardize, cfg.seed, cfg.split)
        }
        DataConfig::RbfDraw {
            n,
            d,
            lengthscale,
            noise_sd,
        } => {
            let (x, y) = synth::rbf_draw(*n, *d, *lengthscale, *noise_sd, cfg.seed)?;
            split_dataset(x, y, cfg.split, cfg.standardize, cfg.seed)
        }
        DataConfig::Toy1d { n } => {
            let (x, y) = synth::toy1d(*n, cfg.seed);
            split_dataset(x, y, cfg.split, cfg.standardize, cfg.seed)
        }
    }
}

/// Mean |entries| of `K_XX - student` flattened (for the error summaries).
fn abs_errors(k_xx: &Matrix64, student: &Matrix64) -> Vec<f64> {
    k_xx.as_slice()
        .iter()
        .zip(student.as_slice())
        .map(|(a, b)| (a - b).abs())
        .collect()
}

/// Kernel reconstruction on sorted normal inputs: compare the Frobenius
/// reconstruction error of distillation, subset-of-regressors, and grid
/// interpolation on the same kernel matrix, plus an error-versus-sparsity
/// sweep for the distilled student.
pub fn run_reconstruction(cfg: &RunConfig) -> Result<Report> {
    let rc = &cfg.reconstruct;
    let mut report = Report::new("reconstruct", cfg.seed, config_echo(cfg));

    let x = synth::sorted_normal_inputs(rc.n, 5.0, cfg.seed);
    let spec = KernelSpec::rbf(rc.lengthscale, 1e-6)?;
    let k_xx = kernel_matrix(&spec, &x, &x)?;
    let mut summaries = BTreeMap::new();

    // Distillation student.
    let mut dcfg = cfg.distill.to_core();
    dcfg.m = rc.distill_m;
    dcfg.b = rc.distill_b;
    dcfg.iterations = rc.iterations;
    let run = distill_kernel(&x, &spec, &dcfg, cfg.seed)?;
    let student = run.weights.student_matrix(&run.k_uu);
    let mut distill_report = MethodReport::ok();
    distill_report.fnorm_error = Some(fro_diff(&k_xx, &student)?);
    summaries.insert(
        "distill".to_string(),
        summarize_abs_errors(abs_errors(&k_xx, &student)),
    );
    report.distill_trace = Some(trace_points(&run.trace));
    report.methods.insert("distill".into(), distill_report);

    // Subset of regressors, under the shared jitter policy for singular
    // kernel matrices.
    let u_sor = kmeans(&x, rc.sor_m, cfg.seed)?;
    let k_uu_sor = kernel_matrix(&spec, u_sor.points(), u_sor.points())?;
    let k_xu_sor = kernel_matrix(&spec, &x, u_sor.points())?;
    let (chol_sor, _) = cholesky_with_jitter(&k_uu_sor)?;
    let s = chol_sor.solve_matrix(&k_xu_sor.transpose());
    let nystrom = k_xu_sor.matmul(&s);
    let mut sor_report = MethodReport::ok();
    sor_report.fnorm_error = Some(fro_diff(&k_xx, &nystrom)?);
    summaries.insert(
        "sor".to_string(),
        summarize_abs_errors(abs_errors(&k_xx, &nystrom)),
    );
    report.methods.insert("sor".into(), sor_report);

    // Grid interpolation.
    let design = GridDesign::build(&x, rc.grid_size)?;
    let nodes = design.nodes();
    let k_uu_grid = kernel_matrix(&spec, &nodes, &nodes)?;
    let grid_student = design.weights.student_matrix(&k_uu_grid);
    let mut kiss_report = MethodReport::ok();
    kiss_report.fnorm_error = Some(fro_diff(&k_xx, &grid_student)?);
    summaries.insert(
        "kiss1d".to_string(),
        summarize_abs_errors(abs_errors(&k_xx, &grid_student)),
    );
    report.methods.insert("kiss1d".into(), kiss_report);

    // Error-versus-sparsity sweep.
    let curve = error_vs_sparsity(&x, &spec, &dcfg, &rc.b_sweep, cfg.seed)?;
    report.error_vs_b = Some(
        curve
            .into_iter()
            .map(|(b, e)| SweepPoint {
                b,
                objective: Some(e),
                smse: None,
                variance_rmse_vs_exact: None,
            })
            .collect(),
    );
    report.abs_error_summary = Some(summaries);
    Ok(report)
}

struct FittedTeacher {
    teacher: ExactGp64,
    queries_std: Matrix64,
    truth_raw: Vec<f64>,
    exact_mean_raw: Vec<f64>,
    exact_var_raw: Vec<f64>,
}

fn fit_teacher_on(
    train: &Dataset64,
    test: &Dataset64,
    settings: &TrainSettings,
) -> Result<FittedTeacher> {
    let init = init_spec(settings, train.dim())?;
    let opts = TrainOptions {
        steps: settings.steps,
        learning_rate: settings.learning_rate,
    };
    let teacher = ExactGpModel::train(train.clone(), init, &opts)?;
    let queries_std = test.x().clone();
    let (mean_std, var_std) = teacher.predict(&queries_std)?;
    let exact_mean_raw: Vec<f64> = mean_std
        .iter()
        .map(|&v| train.destandardize_target(v))
        .collect();
    let exact_var_raw: Vec<f64> = var_std
        .iter()
        .map(|&v| train.destandardize_variance(v))
        .collect();
    let truth_raw: Vec<f64> = test
        .y()
        .iter()
        .map(|&v| train.destandardize_target(v))
        .collect();
    Ok(FittedTeacher {
        teacher,
        queries_std,
        truth_raw,
        exact_mean_raw,
        exact_var_raw,
    })
}

/// The 1-D toy comparison: train a teacher on noisy draws of the toy curve,
/// then compare distilled and grid-interpolation predictions (means and
/// variances) against the exact posterior on a dense test grid.
pub fn run_toy1d(cfg: &RunConfig) -> Result<Report> {
    let mut report = Report::new("toy1d", cfg.seed, config_echo(cfg));
    let n = match cfg.data {
        Some(DataConfig::Toy1d { n }) => n,
        None => 1000,
        Some(_) => {
            return Err(HarnessError::config(
                "toy1d runs on its own generator; use a `toy1d` data section or none",
            ))
        }
    };
    let (x, y) = synth::toy1d(n, cfg.seed);
    let train = if cfg.standardize {
        Dataset::standardized(x, y)?
    } else {
        Dataset::new(x, y)?
    };

    // Dense test grid over the input range, with fresh noisy targets for
    // SMSE and the noise-free curve for reference.
    let grid_n = 400;
    let xs_raw: Vec<f64> = (0..grid_n)
        .map(|i| -10.0 + 20.0 * (i as f64 + 0.5) / grid_n as f64)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let targets_raw: Vec<f64> = xs_raw
        .iter()
        .map(|&v| {
            synth::toy1d_truth(v)
                + <rand_distr::StandardNormal as rand_distr::Distribution<f64>>::sample(
                    &rand_distr::StandardNormal,
                    &mut rng,
                )
        })
        .collect();
    let queries_std = DenseMatrix::from_fn(grid_n, 1, |i, _| {
        (xs_raw[i] - train.feature_means()[0]) / train.feature_sds()[0]
    });

    let init = init_spec(&cfg.train, 1)?;
    let opts = TrainOptions {
        steps: cfg.train.steps,
        learning_rate: cfg.train.learning_rate,
    };
    let teacher = ExactGpModel::train(train.clone(), init, &opts)?;
    let (exact_mean_std, exact_var_std) = teacher.predict(&queries_std)?;
    let exact_mean: Vec<f64> = exact_mean_std
        .iter()
        .map(|&v| train.destandardize_target(v))
        .collect();
    let exact_var: Vec<f64> = exact_var_std
        .iter()
        .map(|&v| train.destandardize_variance(v))
        .collect();

    let mut curves = CurveTable {
        x: xs_raw.clone(),
        columns: BTreeMap::new(),
    };
    curves.columns.insert("truth".into(), xs_raw.iter().map(|&v| synth::toy1d_truth(v)).collect());
    curves.columns.insert("exact_mean".into(), exact_mean.clone());
    curves.columns.insert("exact_variance".into(), exact_var.clone());

    let mut exact_report = MethodReport::ok();
    exact_report.smse = Some(smse(&targets_raw, &exact_mean)?);
    report.methods.insert("exact".into(), exact_report);

    // Distilled student.
    let dcfg = cfg.distill.to_core();
    let (student, trace) = distill(&teacher, &dcfg, cfg.seed)?;
    let preds = student.predict_batch(&queries_std)?;
    let d_mean: Vec<f64> = preds
        .iter()
        .map(|p| train.destandardize_target(p.mean))
        .collect();
    let d_var: Vec<f64> = preds
        .iter()
        .map(|p| train.destandardize_variance(p.variance))
        .collect();
    let mut distill_report = MethodReport::ok();
    distill_report.smse = Some(smse(&targets_raw, &d_mean)?);
    distill_report.mean_rmse_vs_exact = Some(rmse(&exact_mean, &d_mean)?);
    distill_report.variance_rmse_vs_exact = Some(variance_rmse(&exact_var, &d_var)?);
    distill_report.clamp_rate =
        Some(preds.iter().filter(|p| p.clamp_flag).count() as f64 / preds.len() as f64);
    report.methods.insert("distill".into(), distill_report);
    report.distill_trace = Some(trace_points(&trace));
    curves.columns.insert("distill_mean".into(), d_mean);
    curves.columns.insert("distill_variance".into(), d_var);

    // Grid interpolation.
    let kiss = GridInterpModel::fit(&train, teacher.spec(), cfg.grid.size)?;
    let (k_mean_std, k_var_std) = kiss.predict(&queries_std)?;
    let k_mean: Vec<f64> = k_mean_std
        .iter()
        .map(|&v| train.destandardize_target(v))
        .collect();
    let k_var: Vec<f64> = k_var_std
        .iter()
        .map(|&v| train.destandardize_variance(v))
        .collect();
    let mut kiss_report = MethodReport::ok();
    kiss_report.smse = Some(smse(&targets_raw, &k_mean)?);
    kiss_report.mean_rmse_vs_exact = Some(rmse(&exact_mean, &k_mean)?);
    kiss_report.variance_rmse_vs_exact = Some(variance_rmse(&exact_var, &k_var)?);
    report.methods.insert("kiss1d".into(), kiss_report);
    curves.columns.insert("kiss1d_mean".into(), k_mean);
    curves.columns.insert("kiss1d_variance".into(), k_var);

    report.curves = Some(curves);
    Ok(report)
}

/// Benchmark on a dataset: fit every configured method against the shared
/// teacher hyperparameters, report SMSE, variance closeness to the exact
/// posterior, and median per-point prediction time.
pub fn run_benchmark(cfg: &RunConfig) -> Result<Report> {
    let mut report = Report::new("bench", cfg.seed, config_echo(cfg));
    let (train, test) = load_data(cfg)?;
    let fitted = fit_teacher_on(&train, &test, &cfg.train)?;
    let timing_points = cfg.timing.points.min(test.n()).max(1);
    let timing_queries = DenseMatrix::from_fn(timing_points, test.dim(), |i, j| {
        fitted.queries_std.get(i, j)
    });

    for method in &cfg.methods {
        let name = method.as_str().to_string();
        match run_bench_method(cfg, method, &train, &fitted, &timing_queries) {
            Ok((mr, trace)) => {
                report.methods.insert(name, mr);
                if trace.is_some() {
                    report.distill_trace = trace;
                }
            }
            Err(e) => {
                log::warn!("method {name} failed: {e}");
                report.methods.insert(name, MethodReport::failed(e.to_string()));
            }
        }
    }
    Ok(report)
}

type BenchOutcome = (MethodReport, Option<Vec<TracePoint>>);

fn run_bench_method(
    cfg: &RunConfig,
    method: &MethodName,
    train: &Dataset64,
    fitted: &FittedTeacher,
    timing_queries: &Matrix64,
) -> Result<BenchOutcome> {
    let reps = cfg.timing.repetitions.max(1);
    let points = timing_queries.rows();
    match method {
        MethodName::Exact => {
            let mut mr = MethodReport::ok();
            mr.smse = Some(smse(&fitted.truth_raw, &fitted.exact_mean_raw)?);
            let teacher = &fitted.teacher;
            mr.mean_prediction_time_s = Some(median_per_point_time(points, reps, || {
                teacher.predict(timing_queries).expect("timed prediction");
            }));
            Ok((mr, None))
        }
        MethodName::Sor | MethodName::Fitc => {
            let (m, variant) = match method {
                MethodName::Sor => (cfg.sor.m, SorFitcVariant::Sor),
                _ => (cfg.fitc.m, SorFitcVariant::Fitc),
            };
            let m = m.min(train.n());
            let u = kmeans(train.x(), m, cfg.seed)?;
            let model = SorFitcModel::fit(train, fitted.teacher.spec(), u, variant)?;
            let (mean_std, var_std) = model.predict(&fitted.queries_std)?;
            let mr = approx_method_report(
                train,
                fitted,
                &mean_std,
                &var_std,
                Some(median_per_point_time(points, reps, || {
                    model.predict(timing_queries).expect("timed prediction");
                })),
            )?;
            Ok((mr, None))
        }
        MethodName::Kiss1d => {
            if train.dim() != 1 {
                return Err(HarnessError::config(
                    "grid interpolation requires 1-D inputs",
                ));
            }
            let model = GridInterpModel::fit(train, fitted.teacher.spec(), cfg.grid.size)?;
            let (mean_std, var_std) = model.predict(&fitted.queries_std)?;
            let mr = approx_method_report(
                train,
                fitted,
                &mean_std,
                &var_std,
                Some(median_per_point_time(points, reps, || {
                    model.predict(timing_queries).expect("timed prediction");
                })),
            )?;
            Ok((mr, None))
        }
        MethodName::Distill => {
            let dcfg = cfg.distill.to_core();
            let (student, trace) = distill(&fitted.teacher, &dcfg, cfg.seed)?;
            let preds = student.predict_batch(&fitted.queries_std)?;
            let mean_std: Vec<f64> = preds.iter().map(|p| p.mean).collect();
            let var_std: Vec<f64> = preds.iter().map(|p| p.variance).collect();
            let mut mr = approx_method_report(
                train,
                fitted,
                &mean_std,
                &var_std,
                Some(median_per_point_time(points, reps, || {
                    student.predict_batch(timing_queries).expect("timed prediction");
                })),
            )?;
            mr.clamp_rate = Some(
                preds.iter().filter(|p| p.clamp_flag).count() as f64 / preds.len() as f64,
            );
            Ok((mr, Some(trace_points(&trace))))
        }
    }
}

fn approx_method_report(
    train: &Dataset64,
    fitted: &FittedTeacher,
    mean_std: &[f64],
    var_std: &[f64],
    per_point_time: Option<f64>,
) -> Result<MethodReport> {
    let mean_raw: Vec<f64> = mean_std
        .iter()
        .map(|&v| train.destandardize_target(v))
        .collect();
    let var_raw: Vec<f64> = var_std
        .iter()
        .map(|&v| train.destandardize_variance(v))
        .collect();
    let mut mr = MethodReport::ok();
    mr.smse = Some(smse(&fitted.truth_raw, &mean_raw)?);
    mr.mean_rmse_vs_exact = Some(rmse(&fitted.exact_mean_raw, &mean_raw)?);
    mr.variance_rmse_vs_exact = Some(variance_rmse(&fitted.exact_var_raw, &var_raw)?);
    mr.mean_prediction_time_s = per_point_time;
    Ok(mr)
}

/// Sparsity sweep: one teacher, one inducing-point budget, distilled
/// students across the configured `b` values.
pub fn run_sweep_b(cfg: &RunConfig) -> Result<Report> {
    let mut report = Report::new("sweep_b", cfg.seed, config_echo(cfg));
    let (train, test) = load_data(cfg)?;
    let fitted = fit_teacher_on(&train, &test, &cfg.train)?;

    if train.dim() == 1 {
        // Grid-interpolation reference point for the variance comparison.
        match GridInterpModel::fit(&train, fitted.teacher.spec(), cfg.grid.size) {
            Ok(model) => {
                let (mean_std, var_std) = model.predict(&fitted.queries_std)?;
                let mr = approx_method_report(&train, &fitted, &mean_std, &var_std, None)?;
                report.methods.insert("kiss1d".into(), mr);
            }
            Err(e) => {
                report
                    .methods
                    .insert("kiss1d".into(), MethodReport::failed(e.to_string()));
            }
        }
    }
    let mut exact_mr = MethodReport::ok();
    exact_mr.smse = Some(smse(&fitted.truth_raw, &fitted.exact_mean_raw)?);
    report.methods.insert("exact".into(), exact_mr);

    let mut points = Vec::with_capacity(cfg.sweep_b.len());
    for &b in &cfg.sweep_b {
        let mut dcfg = cfg.distill.to_core();
        dcfg.b = b;
        let (student, trace) = distill(&fitted.teacher, &dcfg, cfg.seed)?;
        let preds = student.predict_batch(&fitted.queries_std)?;
        let mean_raw: Vec<f64> = preds
            .iter()
            .map(|p| train.destandardize_target(p.mean))
            .collect();
        let var_raw: Vec<f64> = preds
            .iter()
            .map(|p| train.destandardize_variance(p.variance))
            .collect();
        points.push(SweepPoint {
            b,
            objective: trace.last().map(|r| r.objective),
            smse: Some(smse(&fitted.truth_raw, &mean_raw)?),
            variance_rmse_vs_exact: Some(variance_rmse(&fitted.exact_var_raw, &var_raw)?),
        });
    }
    report.sweep = Some(points);
    Ok(report)
}

/// One distilled student for the CLI `distill` subcommand.
pub fn distill_teacher(
    teacher: &ExactGp64,
    dcfg: &gpdistill_core::DistillConfig<f64>,
    seed: u64,
) -> Result<(DistilledModel<f64>, Vec<TracePoint>)> {
    let (model, trace) = distill(teacher, dcfg, seed)?;
    Ok((model, trace_points(&trace)))
}
