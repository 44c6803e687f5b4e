//! Sparse low-rank kernel compression: approximate a teacher kernel matrix
//! `K_XX` by the student form `W K_UU W^T`, where `U` holds k-means inducing
//! points and each row of `W` keeps at most `b` entries on a fixed support of
//! nearest inducing points.
//!
//! The pipeline: select `U`, initialize each row of `W` by a local least
//! squares fit against `K_XU`, then run support-constrained projected
//! gradient descent on the Frobenius-norm objective. The finished student is
//! packaged with the precomputed inference vector/matrix from
//! [`crate::infer`].

use crate::error::{Error, Result};
use crate::exact::ExactGpModel;
use crate::infer::{precompute, DistilledModel};
use crate::kernel::{kernel_matrix, KernelSpec};
use crate::linalg::{least_squares, DenseMatrix};
use crate::scalar::Real;
use crate::spatial::{kmeans, InducingSet};

/// Row-sparse n x m weight matrix: per row a sorted support of inducing ids
/// and matching values. Supports are fixed at initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseWeights<T> {
    n: usize,
    m: usize,
    supports: Vec<Vec<usize>>,
    values: Vec<Vec<T>>,
}

impl<T: Real> SparseWeights<T> {
    pub fn new(n: usize, m: usize, rows: Vec<(Vec<usize>, Vec<T>)>) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                context: "sparse weight row count",
                expected: n,
                got: rows.len(),
            });
        }
        let mut supports = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for (support, vals) in rows {
            if support.len() != vals.len() {
                return Err(Error::contract("support/value length mismatch"));
            }
            if support.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::contract("supports must be sorted and distinct"));
            }
            if support.iter().any(|&j| j >= m) {
                return Err(Error::contract("support id out of range"));
            }
            supports.push(support);
            values.push(vals);
        }
        Ok(SparseWeights {
            n,
            m,
            supports,
            values,
        })
    }

    /// Identity-supported weights: row i carries a single 1 at column i.
    pub fn identity(n: usize) -> Self {
        SparseWeights {
            n,
            m: n,
            supports: (0..n).map(|i| vec![i]).collect(),
            values: (0..n).map(|_| vec![T::one()]).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn support(&self, i: usize) -> &[usize] {
        &self.supports[i]
    }

    pub fn row_values(&self, i: usize) -> &[T] {
        &self.values[i]
    }

    pub fn max_row_nnz(&self) -> usize {
        self.supports.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Dense n x m copy (diagnostics and oracles only).
    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.n, self.m);
        for i in 0..self.n {
            for (&j, &v) in self.supports[i].iter().zip(&self.values[i]) {
                out.set(i, j, v);
            }
        }
        out
    }

    /// `W * dense` for an m x p dense matrix, exploiting row sparsity.
    pub fn mul_dense(&self, dense: &DenseMatrix<T>) -> DenseMatrix<T> {
        assert_eq!(dense.rows(), self.m, "sparse-dense product dimension");
        let p = dense.cols();
        let mut out = DenseMatrix::zeros(self.n, p);
        for i in 0..self.n {
            // Split borrow: output row i vs rows of `dense`.
            let row_out = out.row_mut(i);
            for (&j, &w) in self.supports[i].iter().zip(&self.values[i]) {
                let drow = dense.row(j);
                for (o, &d) in row_out.iter_mut().zip(drow) {
                    *o += w * d;
                }
            }
        }
        out
    }

    /// `W^T * v` for an n-vector, as an m-vector.
    pub fn transpose_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.n, "sparse transpose product dimension");
        let mut out = vec![T::zero(); self.m];
        for i in 0..self.n {
            let vi = v[i];
            for (&j, &w) in self.supports[i].iter().zip(&self.values[i]) {
                out[j] += w * vi;
            }
        }
        out
    }

    /// Sparse dot of row `i` against a dense slice of length m.
    #[inline]
    pub fn row_dot(&self, i: usize, dense: &[T]) -> T {
        let mut s = T::zero();
        for (&j, &v) in self.supports[i].iter().zip(&self.values[i]) {
            s += v * dense[j];
        }
        s
    }

    /// The student matrix `W K_UU W^T`, materialized densely (n x n).
    pub fn student_matrix(&self, k_uu: &DenseMatrix<T>) -> DenseMatrix<T> {
        let p = self.mul_dense(k_uu); // n x m
        let n = self.n;
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let row = out.row_mut(i);
            for (j, slot) in row.iter_mut().enumerate() {
                let mut s = T::zero();
                for (&c, &w) in self.supports[j].iter().zip(&self.values[j]) {
                    s += w * p.get(i, c);
                }
                *slot = s;
            }
        }
        out
    }

    /// Residual `W K_UU W^T - K_XX` as a dense matrix.
    pub(crate) fn residual(&self, k_xx: &DenseMatrix<T>, k_uu: &DenseMatrix<T>) -> DenseMatrix<T> {
        let p = self.mul_dense(k_uu); // n x m
        let n = self.n;
        let mut e = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let row = e.row_mut(i);
            for (j, slot) in row.iter_mut().enumerate() {
                let mut s = T::zero();
                for (&c, &w) in self.supports[j].iter().zip(&self.values[j]) {
                    s += w * p.get(i, c);
                }
                *slot = s - k_xx.get(i, j);
            }
        }
        e
    }
}

/// Which update direction the descent loop uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Exact gradient of `||W K_UU W^T - K_XX||_F^2`, i.e. `4 E W K_UU` for
    /// the symmetric residual `E`.
    Analytic,
    /// Variant that doubles the residual diagonal and uses a single residual
    /// factor: `E_ii <- 2 E_ii; grad = E^T W K_UU`. Not the exact gradient;
    /// kept selectable for comparison.
    DiagDoubled,
}

/// Distillation settings.
#[derive(Debug, Clone)]
pub struct DistillConfig<T> {
    /// Number of inducing points.
    pub m: usize,
    /// Maximum non-zeros per weight row.
    pub b: usize,
    /// Raw step size; `None` derives `1e-4 * n / ||K_UU||_F`.
    pub step_size: Option<T>,
    /// Gradient iterations (0 = keep the initialization).
    pub iterations: usize,
    pub gradient_mode: GradientMode,
    /// Backtracking line search: accept steps only on objective decrease.
    pub line_search: bool,
}

impl<T: Real> DistillConfig<T> {
    pub fn new(m: usize, b: usize) -> Self {
        DistillConfig {
            m,
            b,
            step_size: None,
            iterations: 100,
            gradient_mode: GradientMode::Analytic,
            line_search: true,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.b == 0 {
            return Err(Error::contract("sparsity b must be >= 1"));
        }
        if self.m == 0 || self.m > n {
            return Err(Error::contract(format!(
                "inducing count m must satisfy 1 <= m <= n (m={}, n={n})",
                self.m
            )));
        }
        if self.b > self.m {
            return Err(Error::contract(format!(
                "sparsity b must not exceed m (b={}, m={})",
                self.b, self.m
            )));
        }
        if let Some(eta) = self.step_size {
            if !(eta.is_finite() && eta > T::zero()) {
                return Err(Error::contract("step size must be positive"));
            }
        }
        Ok(())
    }
}

/// One accepted descent step (or the initialization, at iteration 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    pub objective: T,
    pub step_size: T,
}

/// Weight initialization: for each training point, fit its weight row by
/// least squares on the rows of `K_UU` indexed by its `b` nearest inducing
/// points, matching the corresponding row of `K_XU`.
pub fn init_weights<T: Real>(
    k_xu: &DenseMatrix<T>,
    k_uu: &DenseMatrix<T>,
    u: &InducingSet<T>,
    x: &DenseMatrix<T>,
    b: usize,
) -> Result<SparseWeights<T>> {
    let n = x.rows();
    let m = u.len();
    if b == 0 || b > m {
        return Err(Error::contract(format!(
            "init_weights requires 1 <= b <= m (b={b}, m={m})"
        )));
    }
    if k_xu.rows() != n || k_xu.cols() != m || k_uu.rows() != m || k_uu.cols() != m {
        return Err(Error::ShapeMismatch(k_xu.rows(), k_xu.cols(), n, m));
    }
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let neighbors = u.knn(x.row(i), b)?;
        let mut support = neighbors.indices;
        support.sort_unstable();
        // min over w of || w * K_UU(J, :) - (K_XU)_i ||_2, i.e. least squares
        // with the m x |J| system K_UU(:, J) (K_UU is symmetric).
        let sys = DenseMatrix::from_fn(m, support.len(), |r, c| k_uu.get(r, support[c]));
        let rhs = k_xu.row(i);
        let vals = least_squares(&sys, rhs);
        rows.push((support, vals));
    }
    SparseWeights::new(n, m, rows)
}

/// Frobenius-norm objective `||K_XX - W K_UU W^T||_F`, evaluated from the
/// sparse rows without materializing a dense `W`.
pub fn objective<T: Real>(
    k_xx: &DenseMatrix<T>,
    w: &SparseWeights<T>,
    k_uu: &DenseMatrix<T>,
) -> Result<T> {
    check_shapes(k_xx, w, k_uu)?;
    let p = w.mul_dense(k_uu); // n x m
    let n = w.n();
    let mut acc = T::zero();
    for i in 0..n {
        let p_row = p.row(i);
        let k_row = k_xx.row(i);
        for j in 0..n {
            let d = w.row_dot(j, p_row) - k_row[j];
            acc += d * d;
        }
    }
    Ok(acc.sqrt())
}

/// Dense pre-projection gradient of the squared objective at `W`.
pub fn gradient<T: Real>(
    k_xx: &DenseMatrix<T>,
    w: &SparseWeights<T>,
    k_uu: &DenseMatrix<T>,
    mode: GradientMode,
) -> Result<DenseMatrix<T>> {
    check_shapes(k_xx, w, k_uu)?;
    let p = w.mul_dense(k_uu); // W K_UU, n x m
    let mut e = w.residual(k_xx, k_uu);
    match mode {
        GradientMode::Analytic => Ok(e.matmul(&p).scale(T::cast(4.0))),
        GradientMode::DiagDoubled => {
            for i in 0..e.rows() {
                let v = e.get(i, i);
                e.set(i, i, v + v);
            }
            // E^T * (W K_UU), written via the transpose-product kernel.
            Ok(e.matmul_transpose_self(&p))
        }
    }
}

/// Zero every gradient entry outside each row's fixed support.
pub fn project_rows<T: Real>(
    g: &DenseMatrix<T>,
    like: &SparseWeights<T>,
) -> Result<SparseWeights<T>> {
    if g.rows() != like.n() || g.cols() != like.m() {
        return Err(Error::ShapeMismatch(g.rows(), g.cols(), like.n(), like.m()));
    }
    let rows = (0..like.n())
        .map(|i| {
            let support = like.support(i).to_vec();
            let vals = support.iter().map(|&j| g.get(i, j)).collect();
            (support, vals)
        })
        .collect();
    SparseWeights::new(like.n(), like.m(), rows)
}

fn check_shapes<T: Real>(
    k_xx: &DenseMatrix<T>,
    w: &SparseWeights<T>,
    k_uu: &DenseMatrix<T>,
) -> Result<()> {
    if k_xx.rows() != w.n() || k_xx.cols() != w.n() {
        return Err(Error::ShapeMismatch(k_xx.rows(), k_xx.cols(), w.n(), w.n()));
    }
    if k_uu.rows() != w.m() || k_uu.cols() != w.m() {
        return Err(Error::ShapeMismatch(k_uu.rows(), k_uu.cols(), w.m(), w.m()));
    }
    Ok(())
}

fn axpy_rows<T: Real>(w: &SparseWeights<T>, step: T, dir: &SparseWeights<T>) -> SparseWeights<T> {
    debug_assert_eq!(w.supports, dir.supports, "supports must stay fixed");
    let mut out = w.clone();
    for i in 0..w.n {
        for (v, &g) in out.values[i].iter_mut().zip(&dir.values[i]) {
            *v -= step * g;
        }
    }
    out
}

/// Everything the optimizer produces before inference precomputation.
#[derive(Debug, Clone)]
pub struct KernelDistillation<T> {
    pub inducing: InducingSet<T>,
    pub k_uu: DenseMatrix<T>,
    pub weights: SparseWeights<T>,
    pub trace: Vec<IterationRecord<T>>,
}

impl<T: Real> KernelDistillation<T> {
    pub fn final_objective(&self) -> T {
        self.trace
            .last()
            .map(|r| r.objective)
            .unwrap_or_else(T::nan)
    }
}

/// Compress the kernel of `spec` evaluated on `x`: k-means inducing points,
/// local least-squares initialization, then `cfg.iterations` projected
/// gradient steps. The trace records the objective after initialization
/// (iteration 0) and after every accepted step.
pub fn distill_kernel<T: Real>(
    x: &DenseMatrix<T>,
    spec: &KernelSpec<T>,
    cfg: &DistillConfig<T>,
    seed: u64,
) -> Result<KernelDistillation<T>> {
    let n = x.rows();
    cfg.validate(n)?;
    if n > 20_000 {
        return Err(Error::contract(
            "dense teacher kernel is guarded at n <= 20000",
        ));
    }
    let inducing = kmeans(x, cfg.m, seed)?;
    let k_xx = kernel_matrix(spec, x, x)?;
    let k_uu = kernel_matrix(spec, inducing.points(), inducing.points())?;
    let k_xu = kernel_matrix(spec, x, inducing.points())?;

    let mut w = init_weights(&k_xu, &k_uu, &inducing, x, cfg.b)?;
    let mut obj = objective(&k_xx, &w, &k_uu)?;
    if !obj.is_finite() {
        return Err(Error::Numerical(
            "objective non-finite after initialization".into(),
        ));
    }
    let mut trace = vec![IterationRecord {
        iteration: 0,
        objective: obj,
        step_size: T::zero(),
    }];

    let base_eta = cfg.step_size.unwrap_or_else(|| {
        T::cast(1e-4) * T::cast(n as f64) / k_uu.frobenius_norm()
    });
    let mut eta = base_eta;

    for iter in 1..=cfg.iterations {
        let g = gradient(&k_xx, &w, &k_uu, cfg.gradient_mode)?;
        let dir = project_rows(&g, &w)?;

        if cfg.line_search {
            // Backtracking: accept on decrease, shrink by half, give up
            // after 30 shrinks (treated as converged).
            let mut accepted = false;
            let mut try_eta = eta;
            for _ in 0..30 {
                let cand = axpy_rows(&w, try_eta, &dir);
                let cand_obj = objective(&k_xx, &cand, &k_uu)?;
                if cand_obj.is_finite() && cand_obj < obj {
                    w = cand;
                    obj = cand_obj;
                    trace.push(IterationRecord {
                        iteration: iter,
                        objective: obj,
                        step_size: try_eta,
                    });
                    // Allow growth again next iteration.
                    eta = try_eta + try_eta;
                    accepted = true;
                    break;
                }
                try_eta *= T::cast(0.5);
            }
            if !accepted {
                break;
            }
        } else {
            w = axpy_rows(&w, eta, &dir);
            obj = objective(&k_xx, &w, &k_uu)?;
            if !obj.is_finite() {
                return Err(Error::Numerical(format!(
                    "objective became non-finite at iteration {iter}; \
                     reduce the step size (eta = {eta:?})"
                )));
            }
            trace.push(IterationRecord {
                iteration: iter,
                objective: obj,
                step_size: eta,
            });
        }

        debug_assert!(w.max_row_nnz() <= cfg.b, "row sparsity bound violated");
    }

    Ok(KernelDistillation {
        inducing,
        k_uu,
        weights: w,
        trace,
    })
}

/// Full teacher-to-student pipeline: compress the teacher's kernel, then
/// precompute the fast-inference quantities.
pub fn distill<T: Real>(
    teacher: &ExactGpModel<T>,
    cfg: &DistillConfig<T>,
    seed: u64,
) -> Result<(DistilledModel<T>, Vec<IterationRecord<T>>)> {
    let run = distill_kernel(teacher.data().x(), teacher.spec(), cfg, seed)?;
    let (alpha_tilde, v) = precompute(
        teacher.data(),
        &run.weights,
        &run.k_uu,
        teacher.spec().noise_variance(),
    )?;
    let model = DistilledModel::new(
        run.inducing,
        teacher.spec().clone(),
        run.k_uu,
        alpha_tilde,
        v,
        cfg.b,
        Some(run.weights),
    )?
    .with_scaling(Some(teacher.data().scaling()));
    Ok((model, run.trace))
}

/// Objective-versus-sparsity curve: run the full distillation per `b` and
/// report the final objective. `b_list` must be non-decreasing.
pub fn error_vs_sparsity<T: Real>(
    x: &DenseMatrix<T>,
    spec: &KernelSpec<T>,
    cfg: &DistillConfig<T>,
    b_list: &[usize],
    seed: u64,
) -> Result<Vec<(usize, T)>> {
    if b_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::contract("b_list must be non-decreasing"));
    }
    let mut curve = Vec::with_capacity(b_list.len());
    for &b in b_list {
        let mut cfg_b = cfg.clone();
        cfg_b.b = b;
        let run = distill_kernel(x, spec, &cfg_b, seed)?;
        curve.push((b, run.final_objective()));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_instance(
        rng: &mut StdRng,
        n: usize,
        m: usize,
        d: usize,
    ) -> (DenseMatrix<f64>, InducingSet<f64>, KernelSpec<f64>) {
        let x = DenseMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
        let u = kmeans(&x, m, 123).unwrap();
        let spec = KernelSpec::rbf(1.0, 0.05).unwrap();
        (x, u, spec)
    }

    fn dense_objective_sq(
        k_xx: &DenseMatrix<f64>,
        w_dense: &DenseMatrix<f64>,
        k_uu: &DenseMatrix<f64>,
    ) -> f64 {
        let student = w_dense.matmul(k_uu).matmul(&w_dense.transpose());
        let diff = student.sub(k_xx).unwrap();
        diff.as_slice().iter().map(|v| v * v).sum()
    }

    #[test]
    fn init_full_support_matches_unconstrained_solve() {
        let mut rng = StdRng::seed_from_u64(1);
        let (x, u, spec) = random_instance(&mut rng, 6, 3, 2);
        let k_xu = kernel_matrix(&spec, &x, u.points()).unwrap();
        let k_uu = kernel_matrix(&spec, u.points(), u.points()).unwrap();
        let w = init_weights(&k_xu, &k_uu, &u, &x, 3).unwrap();
        // b = m: every row solves the dense system K_UU w = (K_XU)_i.
        let k_uu_chol = crate::linalg::CholeskyFactor::new(&{
            let mut k = k_uu.clone();
            k.add_diagonal(0.0);
            k
        })
        .unwrap();
        for i in 0..6 {
            let expect = k_uu_chol.solve_vec(k_xu.row(i));
            let dense_row = w.to_dense();
            for j in 0..3 {
                assert!(
                    (dense_row.get(i, j) - expect[j]).abs() < 1e-8,
                    "row {i} col {j}"
                );
            }
        }
    }

    #[test]
    fn init_at_inducing_point_is_one_hot() {
        // Training point coincides with an inducing point; b = 1 gives a
        // single unit weight because the kernel diagonal is 1.
        let x = DenseMatrix::<f64>::from_vec(3, 1, vec![0.0, 5.0, 10.0]).unwrap();
        let u = InducingSet::from_points(x.clone()).unwrap();
        let spec = KernelSpec::rbf(1.0, 0.1).unwrap();
        let k_xu = kernel_matrix(&spec, &x, u.points()).unwrap();
        let k_uu = kernel_matrix(&spec, u.points(), u.points()).unwrap();
        let w = init_weights(&k_xu, &k_uu, &u, &x, 1).unwrap();
        for i in 0..3 {
            assert_eq!(w.support(i), &[i]);
            assert!((w.row_values(i)[0] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn init_rows_match_dense_restricted_least_squares() {
        let mut rng = StdRng::seed_from_u64(3);
        let (x, u, spec) = random_instance(&mut rng, 5, 3, 1);
        let k_xu = kernel_matrix(&spec, &x, u.points()).unwrap();
        let k_uu = kernel_matrix(&spec, u.points(), u.points()).unwrap();
        let b = 2;
        let w = init_weights(&k_xu, &k_uu, &u, &x, b).unwrap();
        for i in 0..5 {
            let support = w.support(i);
            let sys = DenseMatrix::from_fn(3, b, |r, c| k_uu.get(r, support[c]));
            let oracle = least_squares(&sys, k_xu.row(i));
            for (got, want) in w.row_values(i).iter().zip(&oracle) {
                assert!((got - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn objective_identity_support_is_zero() {
        let mut rng = StdRng::seed_from_u64(5);
        let x = DenseMatrix::from_fn(5, 1, |_, _| rng.random_range(-2.0..2.0));
        let spec = KernelSpec::rbf(1.0, 0.1).unwrap();
        let k = kernel_matrix(&spec, &x, &x).unwrap();
        let w = SparseWeights::identity(5);
        let obj = objective(&k, &w, &k).unwrap();
        assert!(obj < 1e-12, "objective {obj}");
    }

    #[test]
    fn objective_zero_weights_is_kxx_norm() {
        let mut rng = StdRng::seed_from_u64(6);
        let x = DenseMatrix::from_fn(4, 1, |_, _| rng.random_range(-2.0..2.0));
        let spec = KernelSpec::rbf(1.0, 0.1).unwrap();
        let k = kernel_matrix(&spec, &x, &x).unwrap();
        let w = SparseWeights::<f64>::new(4, 2, (0..4).map(|_| (vec![0], vec![0.0])).collect())
            .unwrap();
        let k_uu = DenseMatrix::identity(2);
        let obj = objective(&k, &w, &k_uu).unwrap();
        assert!((obj - k.frobenius_norm()).abs() < 1e-12);
    }

    #[test]
    fn objective_matches_dense_evaluation() {
        let mut rng = StdRng::seed_from_u64(7);
        let (x, u, spec) = random_instance(&mut rng, 6, 3, 2);
        let k_xx = kernel_matrix(&spec, &x, &x).unwrap();
        let k_uu = kernel_matrix(&spec, u.points(), u.points()).unwrap();
        let k_xu = kernel_matrix(&spec, &x, u.points()).unwrap();
        let w = init_weights(&k_xu, &k_uu, &u, &x, 2).unwrap();
        let sparse = objective(&k_xx, &w, &k_uu).unwrap();
        let dense = dense_objective_sq(&k_xx, &w.to_dense(), &k_uu).sqrt();
        let rel = (sparse - dense).abs() / dense.max(1e-300);
        assert!(rel < 1e-9, "sparse {sparse} vs dense {dense}");
    }

    #[test]
    fn analytic_gradient_vanishes_at_exact_reconstruction() {
        let mut rng = StdRng::seed_from_u64(8);
        let x = DenseMatrix::from_fn(5, 1, |_, _| rng.random_range(-2.0..2.0));
        let spec = KernelSpec::rbf(1.0, 0.1).unwrap();
        let k = kernel_matrix(&spec, &x, &x).unwrap();
        let w = SparseWeights::<f64>::identity(5);
        let g = gradient(&k, &w, &k, GradientMode::Analytic).unwrap();
        let proj = project_rows(&g, &w).unwrap();
        for i in 0..5 {
            for &v in proj.row_values(i) {
                assert!(v.abs() < 1e-9, "gradient entry {v}");
            }
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..10 {
            let n = rng.random_range(3..8);
            let m = rng.random_range(2..4.min(n));
            let (x, u, spec) = random_instance(&mut rng, n, m, 1);
            let k_xx = kernel_matrix(&spec, &x, &x).unwrap();
            let k_uu = kernel_matrix(&spec, u.points(), u.points()).unwrap();
            let k_xu = kernel_matrix(&spec, &x, u.points()).unwrap();
            let w0 = init_weights(&k_xu, &k_uu, &u, &x, m.min(2)).unwrap();
            // Move off the optimum so the differenced slope is not noise.
            let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
                .map(|i| {
                    let vals = w0
                        .row_values(i)
                        .iter()
                        .enumerate()
                        .map(|(k, &v)| v * (1.0 + 0.3 * ((i + k) as f64).sin()) + 0.05)
                        .collect();
                    (w0.support(i).to_vec(), vals)
                })
                .collect();
            let w = SparseWeights::new(n, m, rows).unwrap();
            let g = gradient(&k_xx, &w, &k_uu, GradientMode::Analytic).unwrap();

            let w_dense = w.to_dense();
            let h = 1e-5;
            for i in 0..n {
                for j in 0..m {
                    let mut wp = w_dense.clone();
                    wp.set(i, j, wp.get(i, j) + h);
                    let fp = dense_objective_sq(&k_xx, &wp, &k_uu);
                    let mut wm = w_dense.clone();
                    wm.set(i, j, wm.get(i, j) - h);
                    let fm = dense_objective_sq(&k_xx, &wm, &k_uu);
                    let fd = (fp - fm) / (2.0 * h);
                    let scale = g.get(i, j).abs().max(fd.abs()).max(1e-6);
                    assert!(
                        (g.get(i, j) - fd).abs() / scale < 1e-5,
                        "entry ({i},{j}): analytic {} vs fd {fd}",
                        g.get(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_modes_differ_by_diagonal_term_and_factor() {
        let mut rng = StdRng::seed_from_u64(10);
        let (x, u, spec) = random_instance(&mut rng, 5, 3, 2);
        let k_xx = kernel_matrix(&spec, &x, &x).unwrap();
        let k_uu = kernel_matrix(&spec, u.points(), u.points()).unwrap();
        let k_xu = kernel_matrix(&spec, &x, u.points()).unwrap();
        let w = init_weights(&k_xu, &k_uu, &u, &x, 2).unwrap();

        let ga = gradient(&k_xx, &w, &k_uu, GradientMode::Analytic).unwrap();
        let gd = gradient(&k_xx, &w, &k_uu, GradientMode::DiagDoubled).unwrap();

        // Reconstruct the analytic form from the doubled-diagonal one:
        // analytic = 4 * (diag-doubled - diag(E) * W K_UU).
        let e = w.residual(&k_xx, &k_uu);
        let p = w.mul_dense(&k_uu);
        let mut correction = DenseMatrix::zeros(5, 3);
        for i in 0..5 {
            let d = e.get(i, i);
            for j in 0..3 {
                correction.set(i, j, d * p.get(i, j));
            }
        }
        let rebuilt = gd.sub(&correction).unwrap().scale(4.0);
        for i in 0..5 {
            for j in 0..3 {
                assert!(
                    (rebuilt.get(i, j) - ga.get(i, j)).abs() < 1e-9,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn projection_properties() {
        let mut rng = StdRng::seed_from_u64(11);
        let w = SparseWeights::new(
            3,
            4,
            vec![
                (vec![0], vec![1.0]),
                (vec![1, 3], vec![0.5, -0.5]),
                (vec![2], vec![2.0]),
            ],
        )
        .unwrap();
        let g = DenseMatrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let p1 = project_rows(&g, &w).unwrap();
        // Projection keeps exactly the support entries.
        for i in 0..3 {
            assert_eq!(p1.support(i), w.support(i));
            for (&j, &v) in p1.support(i).iter().zip(p1.row_values(i)) {
                assert_eq!(v, g.get(i, j));
            }
        }
        // Idempotence through densification.
        let p2 = project_rows(&p1.to_dense(), &w).unwrap();
        assert_eq!(p1, p2);

        // Dense ones with one-entry supports leaves a single 1 per row.
        let ones = DenseMatrix::from_fn(3, 4, |_, _| 1.0);
        let w1 = SparseWeights::new(
            3,
            4,
            vec![
                (vec![2], vec![0.0]),
                (vec![0], vec![0.0]),
                (vec![3], vec![0.0]),
            ],
        )
        .unwrap();
        let p = project_rows(&ones, &w1).unwrap();
        let dense = p.to_dense();
        for i in 0..3 {
            let nnz: Vec<f64> = dense.row(i).iter().copied().filter(|v| *v != 0.0).collect();
            assert_eq!(nnz, vec![1.0]);
        }
    }

    #[test]
    fn distill_exact_case_is_noop() {
        let mut rng = StdRng::seed_from_u64(12);
        let x = DenseMatrix::from_fn(6, 1, |_, _| rng.random_range(-3.0..3.0));
        let spec = KernelSpec::rbf(1.0, 0.1).unwrap();
        let cfg = DistillConfig::new(6, 6);
        let run = distill_kernel(&x, &spec, &cfg, 0).unwrap();
        // m = n: inducing points are the training points, and the full
        // support reproduces K_XX exactly from the start.
        assert!(run.trace[0].objective < 1e-9, "{:?}", run.trace[0]);
        assert!(run.final_objective() < 1e-9);
    }

    #[test]
    fn line_search_trace_is_non_increasing() {
        let mut rng = StdRng::seed_from_u64(13);
        let x = DenseMatrix::from_fn(30, 1, |_, _| rng.random_range(-5.0..5.0));
        let spec = KernelSpec::rbf(0.8, 0.1).unwrap();
        let mut cfg = DistillConfig::new(8, 3);
        cfg.iterations = 40;
        let run = distill_kernel(&x, &spec, &cfg, 1).unwrap();
        assert!(run.trace.len() > 1, "no steps accepted");
        for pair in run.trace.windows(2) {
            assert!(
                pair[1].objective <= pair[0].objective + 1e-12,
                "objective increased: {pair:?}"
            );
        }
    }

    #[test]
    fn distill_is_deterministic() {
        let mut rng = StdRng::seed_from_u64(14);
        let x = DenseMatrix::from_fn(25, 2, |_, _| rng.random_range(-2.0..2.0));
        let spec = KernelSpec::rbf(1.0, 0.1).unwrap();
        let mut cfg = DistillConfig::new(6, 3);
        cfg.iterations = 10;
        let a = distill_kernel(&x, &spec, &cfg, 42).unwrap();
        let b = distill_kernel(&x, &spec, &cfg, 42).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.trace.len(), b.trace.len());
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            assert_eq!(ra.objective, rb.objective);
        }
    }

    #[test]
    fn supports_fixed_across_iterations() {
        let mut rng = StdRng::seed_from_u64(15);
        let x = DenseMatrix::from_fn(20, 1, |_, _| rng.random_range(-4.0..4.0));
        let spec = KernelSpec::rbf(1.0, 0.1).unwrap();
        let mut cfg = DistillConfig::new(5, 2);
        cfg.iterations = 15;
        let run = distill_kernel(&x, &spec, &cfg, 3).unwrap();
        // Re-derive the initialization supports; they must be untouched.
        let k_uu = kernel_matrix(&spec, run.inducing.points(), run.inducing.points()).unwrap();
        let k_xu = kernel_matrix(&spec, &x, run.inducing.points()).unwrap();
        let w0 = init_weights(&k_xu, &k_uu, &run.inducing, &x, 2).unwrap();
        for i in 0..20 {
            assert_eq!(run.weights.support(i), w0.support(i));
            assert!(run.weights.support(i).len() <= 2);
        }
    }

    #[test]
    fn sweep_monotone_at_full_support_and_deterministic() {
        let mut rng = StdRng::seed_from_u64(16);
        let x = DenseMatrix::from_fn(24, 1, |_, _| rng.random_range(-4.0..4.0));
        let spec = KernelSpec::rbf(1.0, 0.1).unwrap();
        let mut cfg = DistillConfig::new(6, 2);
        cfg.iterations = 30;
        let curve = error_vs_sparsity(&x, &spec, &cfg, &[2, 4, 6, 6], 5).unwrap();
        let full = curve.iter().find(|(b, _)| *b == 6).unwrap().1;
        for &(b, err) in &curve {
            assert!(
                full <= err + 1e-9,
                "b=m objective {full} above b={b} objective {err}"
            );
        }
        // Duplicate b entries agree exactly.
        let sixes: Vec<f64> = curve
            .iter()
            .filter(|(b, _)| *b == 6)
            .map(|(_, e)| *e)
            .collect();
        assert_eq!(sixes[0], sixes[1]);

        assert!(error_vs_sparsity(&x, &spec, &cfg, &[4, 2], 5).is_err());
    }
}
