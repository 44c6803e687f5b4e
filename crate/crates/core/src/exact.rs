//! Exact Gaussian-process regression: marginal-likelihood training of the
//! kernel hyperparameters and dense posterior prediction.
//!
//! This is the teacher side of the toolkit. Everything is dense and assumes
//! the problem fits in memory (n <= 20000 guard); the prior mean is zero and
//! targets are expected to be standardized.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{kernel_matrix, kernel_row, KernelFamily, KernelSpec};
use crate::linalg::{dot, CholeskyFactor, DenseMatrix};
use crate::scalar::Real;

const MAX_TRAIN_N: usize = 20_000;
const NOISE_FLOOR: f64 = 1e-8;
const LN_2PI: f64 = 1.8378770664093453;

/// Trained exact GP: data, fitted hyperparameters, and the cached Cholesky
/// factor of `K_XX + noise * I` with its weight vector `alpha`.
#[derive(Debug, Clone)]
pub struct ExactGpModel<T> {
    data: Dataset<T>,
    spec: KernelSpec<T>,
    chol: CholeskyFactor<T>,
    alpha: Vec<T>,
}

/// Optimizer settings for [`ExactGpModel::train`].
#[derive(Debug, Clone)]
pub struct TrainOptions<T> {
    pub steps: usize,
    pub learning_rate: T,
}

impl<T: Real> Default for TrainOptions<T> {
    fn default() -> Self {
        TrainOptions {
            steps: 200,
            learning_rate: T::cast(0.1),
        }
    }
}

/// Log marginal likelihood of the data under `spec`, together with its
/// gradient with respect to the log-hyperparameters
/// `[log lengthscale_1, ..., log lengthscale_k, log noise]`.
pub fn log_marginal_likelihood<T: Real>(
    data: &Dataset<T>,
    spec: &KernelSpec<T>,
) -> Result<(T, Vec<T>)> {
    spec.check_dim(data.dim())?;
    let n = data.n();
    let mut k = kernel_matrix(spec, data.x(), data.x())?;
    let noise = spec.noise_variance();
    k.add_diagonal(noise);
    let chol = CholeskyFactor::new(&k).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, value } => Error::Numerical(format!(
            "kernel matrix not positive definite (pivot {pivot}, value {value}); \
             consider a larger noise floor"
        )),
        other => other,
    })?;
    let alpha = chol.solve_vec(data.y());
    let half = T::cast(0.5);
    let fit = dot(data.y(), &alpha);
    let value =
        -half * fit - chol.log_diag_sum() - half * T::cast(n as f64) * T::cast(LN_2PI);

    // d/dtheta = 0.5 (alpha^T dK alpha - tr(K^{-1} dK)) for each
    // log-hyperparameter. The inverse is affordable at teacher scale.
    let k_inv = chol.inverse();
    let n_params = spec.lengthscales().len() + 1;
    let mut grad = Vec::with_capacity(n_params);
    let x = data.x();
    for p in 0..spec.lengthscales().len() {
        let mut quad = T::zero();
        let mut tr = T::zero();
        for i in 0..n {
            let xi = x.row(i);
            for j in 0..n {
                let xj = x.row(j);
                let scaled = match spec.family() {
                    KernelFamily::Rbf => {
                        let l = spec.lengthscales()[0];
                        let mut s = T::zero();
                        for (&a, &b) in xi.iter().zip(xj) {
                            let d = a - b;
                            s += d * d;
                        }
                        s / (l * l)
                    }
                    KernelFamily::Ard => {
                        let l = spec.lengthscales()[p];
                        let d = (xi[p] - xj[p]) / l;
                        d * d
                    }
                };
                // dK_ij / d(log l_p) on the noise-free part.
                let noise_free = if i == j { k.get(i, j) - noise } else { k.get(i, j) };
                let dk = noise_free * scaled;
                quad += alpha[i] * dk * alpha[j];
                tr += k_inv.get(i, j) * dk;
            }
        }
        grad.push(half * (quad - tr));
    }
    // dK / d(log noise) = noise * I.
    let quad_noise = noise * dot(&alpha, &alpha);
    let tr_noise = noise * k_inv.trace();
    grad.push(half * (quad_noise - tr_noise));
    Ok((value, grad))
}

impl<T: Real> ExactGpModel<T> {
    /// Fit hyperparameters by Adam ascent on the log marginal likelihood in
    /// log-hyperparameter space, then cache the posterior factorization.
    ///
    /// The returned model never has a lower marginal likelihood than `init`:
    /// the best parameters seen during the search win. Non-finite proposals
    /// halve the learning rate and retry, up to 20 halvings.
    pub fn train(
        data: Dataset<T>,
        init: KernelSpec<T>,
        opts: &TrainOptions<T>,
    ) -> Result<Self> {
        if data.n() > MAX_TRAIN_N {
            return Err(Error::contract(format!(
                "dense training is guarded at n <= {MAX_TRAIN_N} (got {})",
                data.n()
            )));
        }
        init.check_dim(data.dim())?;
        if opts.steps == 0 {
            return Self::from_fitted(data, init);
        }

        let mut theta = pack(&init);
        let family = init.family();
        let (mut best_value, grad0) = log_marginal_likelihood(&data, &init)?;
        let mut best_theta = theta.clone();
        let mut grad = grad0;

        let mut lr = opts.learning_rate;
        let beta1 = T::cast(0.9);
        let beta2 = T::cast(0.999);
        let eps = T::cast(1e-8);
        let mut m1 = vec![T::zero(); theta.len()];
        let mut m2 = vec![T::zero(); theta.len()];
        let mut halvings = 0;

        let mut step = 0;
        while step < opts.steps {
            step += 1;
            let t = T::cast(step as f64);
            let mut proposal = theta.clone();
            let mut m1_next = m1.clone();
            let mut m2_next = m2.clone();
            for i in 0..theta.len() {
                m1_next[i] = beta1 * m1[i] + (T::one() - beta1) * grad[i];
                m2_next[i] = beta2 * m2[i] + (T::one() - beta2) * grad[i] * grad[i];
                let m1_hat = m1_next[i] / (T::one() - beta1.powf(t));
                let m2_hat = m2_next[i] / (T::one() - beta2.powf(t));
                // Ascent direction.
                proposal[i] = theta[i] + lr * m1_hat / (m2_hat.sqrt() + eps);
            }
            floor_noise(&mut proposal);
            let spec = unpack(family, &proposal)?;
            match log_marginal_likelihood(&data, &spec) {
                Ok((value, g)) if value.is_finite() => {
                    theta = proposal;
                    grad = g;
                    m1 = m1_next;
                    m2 = m2_next;
                    if value > best_value {
                        best_value = value;
                        best_theta = theta.clone();
                    }
                }
                _ => {
                    halvings += 1;
                    if halvings > 20 {
                        return Err(Error::Numerical(
                            "marginal likelihood stayed non-finite after 20 step halvings"
                                .into(),
                        ));
                    }
                    lr *= T::cast(0.5);
                    // Retry the step from the same iterate and moments.
                    step -= 1;
                }
            }
        }

        let spec = unpack(family, &best_theta)?;
        Self::from_fitted(data, spec)
    }

    /// Cache the factorization for an already-chosen spec (`steps = 0` path).
    pub fn from_fitted(data: Dataset<T>, spec: KernelSpec<T>) -> Result<Self> {
        spec.check_dim(data.dim())?;
        let mut k = kernel_matrix(&spec, data.x(), data.x())?;
        k.add_diagonal(spec.noise_variance());
        let chol = CholeskyFactor::new(&k).map_err(|e| match e {
            Error::NotPositiveDefinite { pivot, value } => Error::Numerical(format!(
                "kernel matrix not positive definite (pivot {pivot}, value {value}); \
                 consider a larger noise floor"
            )),
            other => other,
        })?;
        let alpha = chol.solve_vec(data.y());
        Ok(ExactGpModel {
            data,
            spec,
            chol,
            alpha,
        })
    }

    pub fn data(&self) -> &Dataset<T> {
        &self.data
    }

    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    pub fn chol(&self) -> &CholeskyFactor<T> {
        &self.chol
    }

    pub fn log_marginal_likelihood(&self) -> Result<T> {
        log_marginal_likelihood(&self.data, &self.spec).map(|(v, _)| v)
    }

    /// Posterior mean and latent variance at each query row.
    ///
    /// Variances are clamped at zero after a `-1e-10` sanity floor.
    pub fn predict(&self, queries: &DenseMatrix<T>) -> Result<(Vec<T>, Vec<T>)> {
        if queries.cols() != self.data.dim() {
            return Err(Error::DimensionMismatch {
                context: "prediction query dimension",
                expected: self.data.dim(),
                got: queries.cols(),
            });
        }
        let p = queries.rows();
        let mut means = Vec::with_capacity(p);
        let mut vars = Vec::with_capacity(p);
        let clamp_floor = T::cast(-1e-10);
        for i in 0..p {
            let q = queries.row(i);
            let k_star = kernel_row(&self.spec, q, self.data.x())?;
            let mean = dot(&k_star, &self.alpha);
            let v = self.chol.solve_lower(&k_star);
            let prior = self.spec.eval_unchecked(q, q);
            let mut var = prior - dot(&v, &v);
            if var < T::zero() {
                debug_assert!(var >= clamp_floor, "variance fell below sanity floor");
                var = T::zero();
            }
            means.push(mean);
            vars.push(var);
        }
        Ok((means, vars))
    }
}

fn pack<T: Real>(spec: &KernelSpec<T>) -> Vec<T> {
    let mut theta: Vec<T> = spec.lengthscales().iter().map(|l| l.ln()).collect();
    theta.push(spec.noise_variance().ln());
    theta
}

fn unpack<T: Real>(family: KernelFamily, theta: &[T]) -> Result<KernelSpec<T>> {
    let k = theta.len() - 1;
    let lengthscales: Vec<T> = theta[..k].iter().map(|t| t.exp()).collect();
    KernelSpec::new(family, lengthscales, theta[k].exp())
}

fn floor_noise<T: Real>(theta: &mut [T]) {
    let floor = T::cast(NOISE_FLOOR).ln();
    let last = theta.len() - 1;
    if theta[last] < floor {
        theta[last] = floor;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn toy_dataset(n: usize, seed: u64) -> Dataset<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        let x = DenseMatrix::<f64>::from_fn(n, 1, |_, _| rng.random_range(-5.0..5.0));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let v = x.get(i, 0);
                v.sin() * (-v * v / 50.0).exp() + 0.05 * rng.random_range(-1.0..1.0)
            })
            .collect();
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn lml_single_point_closed_form() {
        let x = DenseMatrix::from_vec(1, 1, vec![0.7]).unwrap();
        let ds = Dataset::new(x, vec![0.0]).unwrap();
        let spec = KernelSpec::rbf(1.3, 0.25).unwrap();
        let (value, _) = log_marginal_likelihood(&ds, &spec).unwrap();
        let expected = -0.5 * (1.0f64 + 0.25).ln() - 0.5 * LN_2PI;
        assert!((value - expected).abs() < 1e-12, "{value} vs {expected}");
    }

    #[test]
    fn lml_gradient_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(4);
        for trial in 0..10 {
            let n = rng.random_range(2..6);
            let d = rng.random_range(1..3);
            let x = DenseMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ds = Dataset::new(x, y).unwrap();
            let family = if trial % 2 == 0 {
                KernelFamily::Rbf
            } else {
                KernelFamily::Ard
            };
            let k = if family == KernelFamily::Rbf { 1 } else { d };
            let lengthscales: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..2.0)).collect();
            let spec = KernelSpec::new(family, lengthscales, 0.1).unwrap();

            let (_, grad) = log_marginal_likelihood(&ds, &spec).unwrap();
            let theta = pack(&spec);
            let h = 1e-5;
            for p in 0..theta.len() {
                let mut tp = theta.clone();
                tp[p] += h;
                let (vp, _) =
                    log_marginal_likelihood(&ds, &unpack(family, &tp).unwrap()).unwrap();
                tp[p] -= 2.0 * h;
                let (vm, _) =
                    log_marginal_likelihood(&ds, &unpack(family, &tp).unwrap()).unwrap();
                let fd = (vp - vm) / (2.0 * h);
                let scale = grad[p].abs().max(fd.abs()).max(1e-8);
                assert!(
                    (grad[p] - fd).abs() / scale < 1e-5,
                    "param {p}: analytic {} vs fd {fd}",
                    grad[p]
                );
            }
        }
    }

    #[test]
    fn larger_noise_decreases_fit_term() {
        let ds = toy_dataset(20, 9);
        let fit_term = |noise: f64| -> f64 {
            let spec = KernelSpec::rbf(1.0, noise).unwrap();
            let model = ExactGpModel::from_fitted(ds.clone(), spec).unwrap();
            dot(ds.y(), model.alpha())
        };
        assert!(fit_term(0.2) < fit_term(0.1));
    }

    #[test]
    fn zero_steps_returns_init_exactly() {
        let ds = toy_dataset(15, 2);
        let init = KernelSpec::rbf(1.7, 0.3).unwrap();
        let opts = TrainOptions {
            steps: 0,
            learning_rate: 0.1,
        };
        let model = ExactGpModel::train(ds, init.clone(), &opts).unwrap();
        assert_eq!(model.spec(), &init);
    }

    #[test]
    fn training_improves_likelihood_on_toy_curve() {
        let ds = toy_dataset(60, 31);
        let init = KernelSpec::rbf(0.3, 0.5).unwrap();
        let (before, _) = log_marginal_likelihood(&ds, &init).unwrap();
        let opts = TrainOptions {
            steps: 60,
            learning_rate: 0.1,
        };
        let model = ExactGpModel::train(ds, init, &opts).unwrap();
        let after = model.log_marginal_likelihood().unwrap();
        assert!(
            after > before,
            "likelihood did not improve: {before} -> {after}"
        );
    }

    #[test]
    fn recovers_lengthscale_from_gp_draw() {
        // Data generated exactly from the model family: fitted lengthscale
        // should land within +-30% of the truth.
        let mut rng = StdRng::seed_from_u64(77);
        let n = 300;
        let true_l = 2.0;
        let true_noise: f64 = 0.01;
        let x = DenseMatrix::from_fn(n, 1, |_, _| rng.random_range(-8.0..8.0));
        let spec = KernelSpec::rbf(true_l, 1e-10).unwrap();
        let mut k = kernel_matrix(&spec, &x, &x).unwrap();
        k.add_diagonal(1e-8);
        let chol = CholeskyFactor::new(&k).unwrap();
        let z: Vec<f64> = (0..n)
            .map(|_| {
                // Box-Muller from two uniforms.
                let u1: f64 = rng.random_range(1e-12..1.0);
                let u2: f64 = rng.random_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let f = chol.lower().matvec(&z);
        let y: Vec<f64> = f
            .iter()
            .map(|&v| {
                let u1: f64 = rng.random_range(1e-12..1.0);
                let u2: f64 = rng.random_range(0.0..1.0);
                v + true_noise.sqrt()
                    * (-2.0 * u1.ln()).sqrt()
                    * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let ds = Dataset::new(x, y).unwrap();
        let init = KernelSpec::rbf(1.0, 0.1).unwrap();
        let opts = TrainOptions {
            steps: 120,
            learning_rate: 0.1,
        };
        let model = ExactGpModel::train(ds, init, &opts).unwrap();
        let l = model.spec().lengthscales()[0];
        assert!(
            l > true_l * 0.7 && l < true_l * 1.3,
            "recovered lengthscale {l} not within 30% of {true_l}"
        );
    }

    #[test]
    fn near_interpolation_at_vanishing_noise() {
        let x = DenseMatrix::<f64>::from_vec(5, 1, vec![-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        let y = vec![0.3, -0.5, 0.8, 0.1, -0.2];
        let ds = Dataset::new(x.clone(), y.clone()).unwrap();
        let spec = KernelSpec::rbf(1.0, 1e-8).unwrap();
        let model = ExactGpModel::from_fitted(ds, spec).unwrap();
        let (means, vars) = model.predict(&x).unwrap();
        for (m, t) in means.iter().zip(&y) {
            assert!((m - t).abs() < 1e-3, "mean {m} vs target {t}");
        }
        for v in vars {
            assert!(v <= 1e-6, "variance {v}");
        }
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let ds = toy_dataset(30, 12);
        let spec = KernelSpec::rbf(1.0, 0.1).unwrap();
        let model = ExactGpModel::from_fitted(ds, spec).unwrap();
        let far = DenseMatrix::from_vec(1, 1, vec![500.0]).unwrap();
        let (means, vars) = model.predict(&far).unwrap();
        assert!(means[0].abs() < 1e-10);
        assert!((vars[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn predict_matches_direct_dense_formulas() {
        let mut rng = StdRng::seed_from_u64(8);
        let x = DenseMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = KernelSpec::rbf(0.8, 0.05).unwrap();
        let ds = Dataset::new(x.clone(), y.clone()).unwrap();
        let model = ExactGpModel::from_fitted(ds, spec.clone()).unwrap();
        let q = DenseMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
        let (means, vars) = model.predict(&q).unwrap();

        // Direct dense route: explicit inverse of (K + noise I).
        let mut k = kernel_matrix(&spec, &x, &x).unwrap();
        k.add_diagonal(0.05);
        let k_inv = CholeskyFactor::new(&k).unwrap().inverse();
        let k_qx = kernel_matrix(&spec, &q, &x).unwrap();
        for i in 0..4 {
            let ks = k_qx.row(i);
            let tmp = k_inv.matvec(ks);
            let mean_direct = dot(&tmp, &y);
            let var_direct = 1.0 - dot(ks, &tmp);
            assert!((means[i] - mean_direct).abs() < 1e-10);
            assert!((vars[i] - var_direct.max(0.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn variance_never_exceeds_prior() {
        let ds = toy_dataset(40, 3);
        let spec = KernelSpec::rbf(1.2, 0.05).unwrap();
        let model = ExactGpModel::from_fitted(ds, spec).unwrap();
        let mut rng = StdRng::seed_from_u64(1);
        let q = DenseMatrix::from_fn(50, 1, |_, _| rng.random_range(-20.0..20.0));
        let (_, vars) = model.predict(&q).unwrap();
        for v in vars {
            assert!(v <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn prediction_invariant_to_training_permutation() {
        let ds = toy_dataset(25, 6);
        let spec = KernelSpec::rbf(1.0, 0.1).unwrap();
        let model = ExactGpModel::from_fitted(ds.clone(), spec.clone()).unwrap();

        // Reversed row order.
        let n = ds.n();
        let xr = DenseMatrix::from_fn(n, 1, |i, j| ds.x().get(n - 1 - i, j));
        let yr: Vec<f64> = (0..n).map(|i| ds.y()[n - 1 - i]).collect();
        let dsr = Dataset::new(xr, yr).unwrap();
        let model_r = ExactGpModel::from_fitted(dsr, spec).unwrap();

        let q = DenseMatrix::from_vec(3, 1, vec![-2.3, 0.4, 3.7]).unwrap();
        let (m1, v1) = model.predict(&q).unwrap();
        let (m2, v2) = model_r.predict(&q).unwrap();
        for i in 0..3 {
            assert!((m1[i] - m2[i]).abs() < 1e-10);
            assert!((v1[i] - v2[i]).abs() < 1e-10);
        }
    }
}
