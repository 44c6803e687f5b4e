//! Reference kernel approximations: subset-of-regressors (SoR), FITC, and a
//! 1-D grid-interpolation GP (cubic convolution weights over a regular grid,
//! dense m x m algebra, no structure exploitation).

use crate::data::Dataset;
use crate::distill::SparseWeights;
use crate::error::{Error, Result};
use crate::infer::precompute;
use crate::kernel::{kernel_matrix, kernel_row, KernelSpec};
use crate::linalg::{cholesky_with_jitter, dot, CholeskyFactor, DenseMatrix};
use crate::scalar::Real;
use crate::spatial::InducingSet;

/// Which inducing-point approximation a [`SorFitcModel`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SorFitcVariant {
    /// Pure rank-m approximation `K_xU K_UU^{-1} K_Uz`.
    Sor,
    /// SoR plus an exact diagonal correction on the training covariance.
    Fitc,
}

/// Fitted SoR/FITC model with the m x m factors cached for O(m) mean and
/// O(m^2) variance prediction per point.
#[derive(Debug, Clone)]
pub struct SorFitcModel<T> {
    inducing: InducingSet<T>,
    spec: KernelSpec<T>,
    variant: SorFitcVariant,
    /// Cholesky of (jittered) K_UU, for the Nystrom quadratic form.
    chol_uu: CholeskyFactor<T>,
    /// Cholesky of K_UU + K_UX D^{-1} K_XU.
    chol_sigma_inv: CholeskyFactor<T>,
    /// Weight vector: Sigma K_UX D^{-1} y.
    mean_weights: Vec<T>,
    /// Per-point diagonal correction k(x_i, x_i) - q_ii (FITC; zeros for SoR).
    diag_correction: Vec<T>,
}

impl<T: Real> SorFitcModel<T> {
    pub fn fit(
        data: &Dataset<T>,
        spec: &KernelSpec<T>,
        inducing: InducingSet<T>,
        variant: SorFitcVariant,
    ) -> Result<Self> {
        spec.check_dim(data.dim())?;
        if inducing.dim() != data.dim() {
            return Err(Error::DimensionMismatch {
                context: "inducing point dimension",
                expected: data.dim(),
                got: inducing.dim(),
            });
        }
        let n = data.n();
        let m = inducing.len();
        let noise = spec.noise_variance();

        let k_uu = kernel_matrix(spec, inducing.points(), inducing.points())?;
        let (chol_uu, _) = cholesky_with_jitter(&k_uu)?;
        let k_xu = kernel_matrix(spec, data.x(), inducing.points())?;

        // q_ii = k_iU K_UU^{-1} k_Ui via one forward solve per row.
        let mut diag_correction = vec![T::zero(); n];
        if variant == SorFitcVariant::Fitc {
            for i in 0..n {
                let v = chol_uu.solve_lower(k_xu.row(i));
                let q_ii = dot(&v, &v);
                let c = T::one() - q_ii;
                // Exact kernels keep this >= 0; clamp roundoff.
                diag_correction[i] = if c > T::zero() { c } else { T::zero() };
            }
        }

        // Sigma^{-1} = K_UU + K_UX D^{-1} K_XU with D = diag_correction + noise,
        // assembled as K_UU + A^T A for A = D^{-1/2} K_XU.
        let mut scaled = k_xu.clone();
        let mut y_scaled = vec![T::zero(); n];
        for i in 0..n {
            let d = diag_correction[i] + noise;
            let inv_sqrt = T::one() / d.sqrt();
            for v in scaled.row_mut(i) {
                *v *= inv_sqrt;
            }
            y_scaled[i] = data.y()[i] * inv_sqrt;
        }
        let mut sigma_inv = scaled.matmul_transpose_self(&scaled);
        sigma_inv.symmetrize();
        let sigma_inv = sigma_inv.add(&k_uu)?;
        let (chol_sigma_inv, _) = cholesky_with_jitter(&sigma_inv)?;

        // mean_weights = Sigma K_UX D^{-1} y = Sigma A^T y_scaled.
        let mut rhs = vec![T::zero(); m];
        for i in 0..n {
            let yi = y_scaled[i];
            for (j, r) in rhs.iter_mut().enumerate() {
                *r += scaled.get(i, j) * yi;
            }
        }
        let mean_weights = chol_sigma_inv.solve_vec(&rhs);

        Ok(SorFitcModel {
            inducing,
            spec: spec.clone(),
            variant,
            chol_uu,
            chol_sigma_inv,
            mean_weights,
            diag_correction,
        })
    }

    pub fn variant(&self) -> SorFitcVariant {
        self.variant
    }

    pub fn inducing(&self) -> &InducingSet<T> {
        &self.inducing
    }

    pub fn diag_correction(&self) -> &[T] {
        &self.diag_correction
    }

    /// Mean and latent variance at one query point.
    pub fn predict_point(&self, query: &[T]) -> Result<(T, T)> {
        let k_star = kernel_row(&self.spec, query, self.inducing.points())?;
        let mean = dot(&k_star, &self.mean_weights);
        // k*^T Sigma k* through the factor of Sigma^{-1}.
        let s = self.chol_sigma_inv.solve_lower(&k_star);
        let explained = dot(&s, &s);
        let var = match self.variant {
            SorFitcVariant::Sor => explained,
            SorFitcVariant::Fitc => {
                let v = self.chol_uu.solve_lower(&k_star);
                let q_star = dot(&v, &v);
                let prior = self.spec.eval_unchecked(query, query);
                prior - q_star + explained
            }
        };
        Ok((mean, if var > T::zero() { var } else { T::zero() }))
    }

    pub fn predict(&self, queries: &DenseMatrix<T>) -> Result<(Vec<T>, Vec<T>)> {
        if queries.cols() != self.inducing.dim() {
            return Err(Error::DimensionMismatch {
                context: "prediction query dimension",
                expected: self.inducing.dim(),
                got: queries.cols(),
            });
        }
        let mut means = Vec::with_capacity(queries.rows());
        let mut vars = Vec::with_capacity(queries.rows());
        for i in 0..queries.rows() {
            let (m, v) = self.predict_point(queries.row(i))?;
            means.push(m);
            vars.push(v);
        }
        Ok((means, vars))
    }
}

/// 1-D grid-interpolation GP: a regular grid of inducing points, cubic
/// convolution interpolation weights (Keys kernel, a = -0.5, four non-zeros
/// per row), and dense m x m inference algebra.
#[derive(Debug, Clone)]
pub struct GridInterpModel<T> {
    origin: T,
    spacing: T,
    m: usize,
    spec: KernelSpec<T>,
    k_uu: DenseMatrix<T>,
    weights: SparseWeights<T>,
    alpha_tilde: Vec<T>,
    v: DenseMatrix<T>,
}

/// Regular 1-D grid plus the cubic interpolation weights of a point set:
/// the design half of [`GridInterpModel`], reusable for pure kernel
/// reconstruction without targets.
#[derive(Debug, Clone)]
pub struct GridDesign<T> {
    pub origin: T,
    pub spacing: T,
    pub m: usize,
    pub weights: SparseWeights<T>,
}

impl<T: Real> GridDesign<T> {
    /// Place `grid_size` nodes spanning `[min(x) - 2h, max(x) + 2h]` so every
    /// point in the 1-D column `xs` has four interior bracketing nodes, and
    /// build each point's interpolation row.
    pub fn build(xs: &DenseMatrix<T>, grid_size: usize) -> Result<Self> {
        if xs.cols() != 1 {
            return Err(Error::contract(
                "grid interpolation requires 1-D inputs",
            ));
        }
        if grid_size < 6 {
            return Err(Error::contract(
                "grid interpolation needs at least 6 nodes",
            ));
        }
        let m = grid_size;
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for i in 0..xs.rows() {
            let v = xs.get(i, 0);
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        let range = hi - lo;
        let spacing = if range > T::zero() {
            range / T::cast((m - 5) as f64)
        } else {
            T::one()
        };
        let origin = lo - (spacing + spacing);
        let rows = (0..xs.rows())
            .map(|i| interp_row(xs.get(i, 0), origin, spacing, m))
            .collect();
        Ok(GridDesign {
            origin,
            spacing,
            m,
            weights: SparseWeights::new(xs.rows(), m, rows)?,
        })
    }

    /// The grid nodes as an m x 1 matrix.
    pub fn nodes(&self) -> DenseMatrix<T> {
        DenseMatrix::from_fn(self.m, 1, |i, _| {
            self.origin + self.spacing * T::cast(i as f64)
        })
    }
}

impl<T: Real> GridInterpModel<T> {
    /// Fit on 1-D data with `grid_size` nodes.
    pub fn fit(data: &Dataset<T>, spec: &KernelSpec<T>, grid_size: usize) -> Result<Self> {
        spec.check_dim(1)?;
        let design = GridDesign::build(data.x(), grid_size)?;
        let grid = design.nodes();
        let k_uu = kernel_matrix(spec, &grid, &grid)?;
        let (alpha_tilde, v) = precompute(data, &design.weights, &k_uu, spec.noise_variance())?;

        Ok(GridInterpModel {
            origin: design.origin,
            spacing: design.spacing,
            m: design.m,
            spec: spec.clone(),
            k_uu,
            weights: design.weights,
            alpha_tilde,
            v,
        })
    }

    pub fn grid(&self) -> (T, T, usize) {
        (self.origin, self.spacing, self.m)
    }

    pub fn weights(&self) -> &SparseWeights<T> {
        &self.weights
    }

    pub fn k_uu(&self) -> &DenseMatrix<T> {
        &self.k_uu
    }

    pub fn interpolation_row(&self, x: T) -> (Vec<usize>, Vec<T>) {
        interp_row(x, self.origin, self.spacing, self.m)
    }

    pub fn predict_point(&self, x: T) -> (T, T) {
        let (support, w) = self.interpolation_row(x);
        let mut mean = T::zero();
        for (&j, &wj) in support.iter().zip(&w) {
            mean += wj * self.alpha_tilde[j];
        }
        let mut quad = T::zero();
        for (&ji, &wi) in support.iter().zip(&w) {
            let row = self.v.row(ji);
            let mut s = T::zero();
            for (&jj, &wj) in support.iter().zip(&w) {
                s += row[jj] * wj;
            }
            quad += wi * s;
        }
        let q = [x];
        let prior = self.spec.eval_unchecked(&q, &q);
        let var = prior - quad;
        (mean, if var > T::zero() { var } else { T::zero() })
    }

    pub fn predict(&self, queries: &DenseMatrix<T>) -> Result<(Vec<T>, Vec<T>)> {
        if queries.cols() != 1 {
            return Err(Error::contract("grid interpolation queries must be 1-D"));
        }
        let mut means = Vec::with_capacity(queries.rows());
        let mut vars = Vec::with_capacity(queries.rows());
        for i in 0..queries.rows() {
            let (m, v) = self.predict_point(queries.get(i, 0));
            means.push(m);
            vars.push(v);
        }
        Ok((means, vars))
    }
}

/// Keys cubic convolution kernel with a = -0.5, evaluated at |s|.
fn keys_weight<T: Real>(s: T) -> T {
    let a = T::cast(-0.5);
    let one = T::one();
    let two = T::cast(2.0);
    let three = T::cast(3.0);
    let four = T::cast(4.0);
    let five = T::cast(5.0);
    if s <= one {
        ((a + two) * s - (a + three)) * s * s + one
    } else if s < two {
        a * (((s - five) * s + T::cast(8.0)) * s - four)
    } else {
        T::zero()
    }
}

/// Sparse interpolation row for `x`: the four bracketing grid nodes and
/// their cubic convolution weights. Queries outside the interpolable range
/// clamp onto its boundary (the fractional offset stays in [0, 1], so rows
/// always sum to one). Exact-zero weights are dropped, so node-aligned
/// points produce one-hot rows.
fn interp_row<T: Real>(x: T, origin: T, spacing: T, m: usize) -> (Vec<usize>, Vec<T>) {
    let mut u = (x - origin) / spacing;
    // Valid cells keep i-1 and i+2 in range.
    let max_cell = (m - 3) as isize;
    if u < T::one() {
        u = T::one();
    } else if u > T::cast((m - 2) as f64) {
        u = T::cast((m - 2) as f64);
    }
    let mut cell = u.floor().as_f64() as isize;
    if cell > max_cell {
        cell = max_cell;
    }
    let t = u - T::cast(cell as f64);
    let offsets = [-1isize, 0, 1, 2];
    let raw = [
        keys_weight((T::one() + t).abs()),
        keys_weight(t.abs()),
        keys_weight((T::one() - t).abs()),
        keys_weight((T::cast(2.0) - t).abs()),
    ];
    let mut support = Vec::with_capacity(4);
    let mut values = Vec::with_capacity(4);
    for (off, w) in offsets.into_iter().zip(raw) {
        if w != T::zero() {
            support.push((cell + off) as usize);
            values.push(w);
        }
    }
    (support, values)
}
