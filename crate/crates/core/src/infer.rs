//! Fast prediction from a compressed kernel: precompute an m-vector and an
//! m x m matrix once, then serve each query from its `b` nearest inducing
//! points in `O(b log m + b^3)`.

use crate::data::{Dataset, TargetScaling};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{cholesky_with_jitter, least_squares, DenseMatrix};
use crate::scalar::Real;
use crate::spatial::{InducingSet, NeighborList};
use crate::distill::SparseWeights;

/// How the sparse test-weight row is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TestWeightSystem {
    /// Restrict the least-squares system to the `b x b` block of `K_UU`
    /// indexed by the query's neighbors (O(b^3)). Default.
    #[default]
    Restricted,
    /// Keep all m columns of the neighbor rows (`b x m` system, O(b^2 m)).
    FullColumns,
}

/// Mean/variance prediction for one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult<T> {
    pub mean: T,
    /// Latent variance, clamped at zero.
    pub variance: T,
    /// Neighbors that formed the sparse support for this query.
    pub support_used: NeighborList<T>,
    /// True iff the raw variance was negative before clamping.
    pub clamp_flag: bool,
}

/// Distilled student model: inducing points, kernel hyperparameters, and the
/// precomputed inference quantities. The training weights are kept when
/// available (they are not part of the persisted inference bundle); the
/// standardization statistics travel with the model so a deployed bundle is
/// self-contained.
#[derive(Debug, Clone)]
pub struct DistilledModel<T> {
    inducing: InducingSet<T>,
    spec: KernelSpec<T>,
    k_uu: DenseMatrix<T>,
    alpha_tilde: Vec<T>,
    v: DenseMatrix<T>,
    b: usize,
    weights: Option<SparseWeights<T>>,
    scaling: Option<TargetScaling<T>>,
    test_system: TestWeightSystem,
}

/// Precompute the inference quantities from the training data and weights:
/// the weight vector `K_UU W^T (W K_UU W^T + noise I)^{-1} y` and the matrix
/// `K_UU W^T (W K_UU W^T + noise I)^{-1} W K_UU` (symmetrized after the
/// solve).
pub fn precompute<T: Real>(
    data: &Dataset<T>,
    w: &SparseWeights<T>,
    k_uu: &DenseMatrix<T>,
    noise_variance: T,
) -> Result<(Vec<T>, DenseMatrix<T>)> {
    if w.n() != data.n() {
        return Err(Error::DimensionMismatch {
            context: "precompute weight rows vs dataset",
            expected: data.n(),
            got: w.n(),
        });
    }
    if k_uu.rows() != w.m() || k_uu.cols() != w.m() {
        return Err(Error::ShapeMismatch(k_uu.rows(), k_uu.cols(), w.m(), w.m()));
    }
    if !(noise_variance.is_finite() && noise_variance > T::zero()) {
        return Err(Error::contract("noise variance must be positive"));
    }

    let p = w.mul_dense(k_uu); // W K_UU, n x m
    // Student train covariance W K_UU W^T + noise I, built row-sparse.
    let n = w.n();
    let mut c = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let p_row = p.row(i);
        let row = c.row_mut(i);
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = w.row_dot(j, p_row);
        }
    }
    // The product above is symmetric only up to roundoff; make it exact so
    // the factorization's symmetry check cannot trip on large instances.
    c.symmetrize();
    c.add_diagonal(noise_variance);

    let (chol, _jitter) = cholesky_with_jitter(&c)?;
    // alpha_tilde = K_UU W^T C^{-1} y = P^T (C^{-1} y).
    let t = chol.solve_vec(data.y());
    let alpha_tilde = {
        let mut out = vec![T::zero(); w.m()];
        for i in 0..n {
            let ti = t[i];
            for (j, o) in out.iter_mut().enumerate() {
                *o += p.get(i, j) * ti;
            }
        }
        out
    };
    // V = P^T C^{-1} P, symmetrized.
    let s = chol.solve_matrix(&p);
    let mut v = p.matmul_transpose_self(&s);
    v.symmetrize();
    Ok((alpha_tilde, v))
}

impl<T: Real> DistilledModel<T> {
    pub fn new(
        inducing: InducingSet<T>,
        spec: KernelSpec<T>,
        k_uu: DenseMatrix<T>,
        alpha_tilde: Vec<T>,
        v: DenseMatrix<T>,
        b: usize,
        weights: Option<SparseWeights<T>>,
    ) -> Result<Self> {
        let m = inducing.len();
        if k_uu.rows() != m || k_uu.cols() != m {
            return Err(Error::ShapeMismatch(k_uu.rows(), k_uu.cols(), m, m));
        }
        if alpha_tilde.len() != m || v.rows() != m || v.cols() != m {
            return Err(Error::contract("inference quantities must be m-sized"));
        }
        if b == 0 || b > m {
            return Err(Error::contract(format!(
                "sparsity must satisfy 1 <= b <= m (b={b}, m={m})"
            )));
        }
        spec.check_dim(inducing.dim())?;
        Ok(DistilledModel {
            inducing,
            spec,
            k_uu,
            alpha_tilde,
            v,
            b,
            weights,
            scaling: None,
            test_system: TestWeightSystem::default(),
        })
    }

    pub fn with_test_system(mut self, system: TestWeightSystem) -> Self {
        self.test_system = system;
        self
    }

    pub fn with_scaling(mut self, scaling: Option<TargetScaling<T>>) -> Self {
        self.scaling = scaling;
        self
    }

    /// Standardization statistics inherited from the teacher, if any.
    pub fn scaling(&self) -> Option<&TargetScaling<T>> {
        self.scaling.as_ref()
    }

    pub fn inducing(&self) -> &InducingSet<T> {
        &self.inducing
    }

    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    pub fn k_uu(&self) -> &DenseMatrix<T> {
        &self.k_uu
    }

    pub fn alpha_tilde(&self) -> &[T] {
        &self.alpha_tilde
    }

    pub fn v_matrix(&self) -> &DenseMatrix<T> {
        &self.v
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn m(&self) -> usize {
        self.inducing.len()
    }

    pub fn dim(&self) -> usize {
        self.inducing.dim()
    }

    /// Training weights, when the model came out of a distillation run
    /// (models loaded from an inference bundle do not carry them).
    pub fn weights(&self) -> Option<&SparseWeights<T>> {
        self.weights.as_ref()
    }

    /// Sparse test-weight row for one query: the `b` nearest inducing points
    /// and the least-squares fit of the kernel row on that support.
    pub fn test_weights(&self, query: &[T]) -> Result<(NeighborList<T>, Vec<T>)> {
        self.test_weights_with(query, self.test_system)
    }

    pub fn test_weights_with(
        &self,
        query: &[T],
        system: TestWeightSystem,
    ) -> Result<(NeighborList<T>, Vec<T>)> {
        if query.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "test query dimension",
                expected: self.dim(),
                got: query.len(),
            });
        }
        let neighbors = self.inducing.knn(query, self.b)?;
        let mut support = neighbors.indices.clone();
        support.sort_unstable();
        let k = support.len();
        let values = match system {
            TestWeightSystem::Restricted => {
                // min_w || w K_UU(J,J) - k(x*, U(J)) ||, a k x k system.
                let sys = DenseMatrix::from_fn(k, k, |r, c| {
                    self.k_uu.get(support[r], support[c])
                });
                let rhs: Vec<T> = support
                    .iter()
                    .map(|&j| self.spec.eval_unchecked(query, self.inducing.point(j)))
                    .collect();
                // K_UU(J,J) is symmetric, so the row convention transposes
                // onto itself.
                least_squares(&sys, &rhs)
            }
            TestWeightSystem::FullColumns => {
                // min_w || w K_UU(J,:) - k(x*, U) ||, a k x m system.
                let m = self.m();
                let sys =
                    DenseMatrix::from_fn(m, k, |r, c| self.k_uu.get(r, support[c]));
                let rhs: Vec<T> = (0..m)
                    .map(|j| self.spec.eval_unchecked(query, self.inducing.point(j)))
                    .collect();
                least_squares(&sys, &rhs)
            }
        };
        Ok((
            NeighborList {
                indices: support,
                distances: neighbors.distances,
            },
            values,
        ))
    }

    /// Mean and clamped latent variance at one query, touching only the
    /// support-indexed entries of the precomputed quantities.
    pub fn predict_point(&self, query: &[T]) -> Result<PredictionResult<T>> {
        let (support, w_star) = self.test_weights(query)?;
        let mut mean = T::zero();
        for (&j, &w) in support.indices.iter().zip(&w_star) {
            mean += w * self.alpha_tilde[j];
        }
        let mut quad = T::zero();
        for (&ji, &wi) in support.indices.iter().zip(&w_star) {
            let v_row = self.v.row(ji);
            let mut s = T::zero();
            for (&jj, &wj) in support.indices.iter().zip(&w_star) {
                s += v_row[jj] * wj;
            }
            quad += wi * s;
        }
        let prior = self.spec.eval_unchecked(query, query);
        let raw = prior - quad;
        let clamp_flag = raw < T::zero();
        Ok(PredictionResult {
            mean,
            variance: if clamp_flag { T::zero() } else { raw },
            support_used: support,
            clamp_flag,
        })
    }

    /// Map [`Self::predict_point`] over the rows of a query matrix.
    pub fn predict_batch(&self, queries: &DenseMatrix<T>) -> Result<Vec<PredictionResult<T>>> {
        if queries.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "batch query dimension",
                expected: self.dim(),
                got: queries.cols(),
            });
        }
        (0..queries.rows())
            .map(|i| self.predict_point(queries.row(i)))
            .collect()
    }
}
