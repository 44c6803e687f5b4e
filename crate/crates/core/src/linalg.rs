//! Dense matrices and the small numeric toolbox: Cholesky-based SPD solves,
//! ridge-regularized least squares, and Frobenius norms.
//!
//! Matrices are row-major and owned; everything is generic over [`Real`].
//! The solvers here are direct (no iterative refinement) and sized for
//! desk-scale problems (n up to ~20k).

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Build from a row-major entry buffer. Fails if the entry count does not
    /// match `rows * cols` or any entry is non-finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "DenseMatrix::from_vec",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("matrix entries must be finite"));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::contract("ragged rows"));
        }
        Self::from_vec(r, c, rows.iter().flatten().copied().collect())
    }

    /// n x 1 column from a slice.
    pub fn column(v: &[T]) -> Self {
        DenseMatrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn col_vec(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self * other`, cache-friendly i-k-j loop order.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a_ik) in a_row.iter().enumerate() {
                if a_ik == T::zero() {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a_ik * b;
                }
            }
        }
        out
    }

    /// `self^T * other` without materializing the transpose.
    pub fn matmul_transpose_self(&self, other: &Self) -> Self {
        assert_eq!(
            self.rows, other.rows,
            "matmul_transpose_self: {}x{} vs {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a_ki) in a_row.iter().enumerate() {
                if a_ki == T::zero() {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a_ki * b;
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec dimension");
        (0..self.rows)
            .map(|i| dot(self.row(i), v))
            .collect()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: T) -> Self {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    /// Add `v` to every diagonal entry (square matrices only).
    pub fn add_diagonal(&mut self, v: T) {
        assert_eq!(self.rows, self.cols, "add_diagonal on non-square matrix");
        for i in 0..self.rows {
            self.data[i * self.cols + i] += v;
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self.data[i * self.cols + i]).collect()
    }

    pub fn trace(&self) -> T {
        self.diagonal().into_iter().sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data
            .iter()
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|` (square matrices).
    pub fn max_asymmetry(&self) -> T {
        assert_eq!(self.rows, self.cols);
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let d = (self.get(i, j) - self.get(j, i)).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    /// Symmetrize in place: a <- (a + a^T) / 2.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        let half = T::cast(0.5);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = (self.get(i, j) + self.get(j, i)) * half;
                self.set(i, j, v);
                self.set(j, i, v);
            }
        }
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch(
                self.rows, self.cols, other.rows, other.cols,
            ));
        }
        Ok(())
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Squared Euclidean distance between two points.
#[inline]
pub fn dist_sq<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Frobenius norm of the difference `A - B`.
pub fn fro_diff<T: Real>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<T> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::ShapeMismatch(a.rows(), a.cols(), b.rows(), b.cols()));
    }
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum::<T>()
        .sqrt())
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct CholeskyFactor<T> {
    l: DenseMatrix<T>,
}

impl<T: Real> CholeskyFactor<T> {
    /// Factor `a = L L^T`. Fails with the pivot index when a pivot is
    /// non-positive (matrix not positive definite) and rejects matrices that
    /// are asymmetric beyond `1e-10 * ||a||_F`.
    pub fn new(a: &DenseMatrix<T>) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::ShapeMismatch(a.rows(), a.cols(), a.cols(), a.rows()));
        }
        let scale = a.frobenius_norm();
        let sym_tol = T::cast(1e-10) * scale + T::cast(1e-12);
        if a.max_asymmetry() > sym_tol {
            return Err(Error::contract(format!(
                "matrix is not symmetric within tolerance {sym_tol:?}"
            )));
        }
        let n = a.rows();
        let mut l = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                // Row-row dot keeps both operands contiguous.
                let (head, tail) = l.data.split_at_mut(i * n);
                let row_j = &head[j * n..j * n + j];
                let row_i = &tail[..j];
                let s = dot(row_i, row_j);
                tail[j] = (a.get(i, j) - s) / head[j * n + j];
            }
            let row_i = &l.data[i * n..i * n + i];
            let v = a.get(i, i) - dot(row_i, row_i);
            if v <= T::zero() || !v.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: i,
                    value: v.as_f64(),
                });
            }
            l.data[i * n + i] = v.sqrt();
        }
        Ok(CholeskyFactor { l })
    }

    pub fn lower(&self) -> &DenseMatrix<T> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Sum of log-diagonal entries, i.e. `0.5 * log det(A)`.
    pub fn log_diag_sum(&self) -> T {
        self.l.diagonal().into_iter().map(|d| d.ln()).sum()
    }

    /// Solve `L x = b` (forward substitution).
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solve `L^T x = b` (back substitution).
    pub fn solve_upper(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l.get(k, i) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
        x
    }

    /// Solve `A x = b` for a vector right-hand side.
    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Solve `A X = B` column by column. The factor's transpose is built once
    /// so both substitution sweeps run over contiguous rows.
    pub fn solve_matrix(&self, b: &DenseMatrix<T>) -> DenseMatrix<T> {
        assert_eq!(b.rows(), self.dim(), "solve_matrix dimension");
        let n = self.dim();
        let lt = self.l.transpose();
        let mut out = DenseMatrix::zeros(b.rows(), b.cols());
        let mut x = vec![T::zero(); n];
        for j in 0..b.cols() {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = b.get(i, j);
            }
            for i in 0..n {
                let row = self.l.row(i);
                let s = dot(&row[..i], &x[..i]);
                x[i] = (x[i] - s) / row[i];
            }
            for i in (0..n).rev() {
                let row = lt.row(i);
                let s = dot(&row[i + 1..], &x[i + 1..]);
                x[i] = (x[i] - s) / row[i];
            }
            for (i, &xi) in x.iter().enumerate() {
                out.set(i, j, xi);
            }
        }
        out
    }

    /// Dense inverse via triangular solves against the identity.
    pub fn inverse(&self) -> DenseMatrix<T> {
        self.solve_matrix(&DenseMatrix::identity(self.dim()))
    }
}

/// Solve the SPD system `A X = B` by Cholesky factorization with
/// forward/back substitution.
pub fn spd_solve<T: Real>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if b.rows() != a.rows() {
        return Err(Error::ShapeMismatch(a.rows(), a.cols(), b.rows(), b.cols()));
    }
    Ok(CholeskyFactor::new(a)?.solve_matrix(b))
}

/// Factor `a`, adding escalating jitter to the diagonal when the bare
/// factorization fails: starts at `1e-8 * mean(diag)`, escalates x10 up to
/// `1e-4 * mean(diag)`. Returns the factor and the jitter that was used.
pub fn cholesky_with_jitter<T: Real>(a: &DenseMatrix<T>) -> Result<(CholeskyFactor<T>, T)> {
    match CholeskyFactor::new(a) {
        Ok(f) => return Ok((f, T::zero())),
        Err(Error::NotPositiveDefinite { .. }) => {}
        Err(e) => return Err(e),
    }
    let n = a.rows();
    let mean_diag = a.trace() / T::cast(n as f64);
    let base = if mean_diag > T::zero() {
        mean_diag
    } else {
        T::one()
    };
    let mut rel = T::cast(1e-8);
    let rel_max = T::cast(1e-4);
    loop {
        let jitter = rel * base;
        let mut aj = a.clone();
        aj.add_diagonal(jitter);
        match CholeskyFactor::new(&aj) {
            Ok(f) => return Ok((f, jitter)),
            Err(Error::NotPositiveDefinite { pivot, value }) => {
                if rel >= rel_max {
                    return Err(Error::Numerical(format!(
                        "factorization failed even with jitter {jitter:?} \
                         (pivot {pivot}, value {value})"
                    )));
                }
                rel *= T::cast(10.0);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Least squares `argmin_x ||A x - b||_2` for `A` of shape p x q.
///
/// Three routes, ordered by accuracy:
/// * square symmetric positive-definite systems solve directly through
///   their Cholesky factor (zero-residual minimizer);
/// * overdetermined full-rank systems use Householder QR, which is
///   backward-stable without squaring the condition number;
/// * rank-deficient or underdetermined systems fall back to
///   ridge-regularized normal equations with
///   `lambda = 1e-10 * trace(A^T A) / q`, approximating the minimum-norm
///   solution.
///
/// Never fails: a zero matrix yields the zero solution.
pub fn least_squares<T: Real>(a: &DenseMatrix<T>, b: &[T]) -> Vec<T> {
    assert_eq!(a.rows(), b.len(), "least_squares dimension");
    if a.rows() == a.cols() {
        if let Ok(f) = CholeskyFactor::new(a) {
            return f.solve_vec(b);
        }
    }
    if a.rows() >= a.cols() {
        if let Some(x) = qr_least_squares(a, b) {
            return x;
        }
        // Numerically rank-deficient: minimum-norm solution through a
        // one-sided Jacobi SVD with small-singular-value truncation.
        if let Some(x) = svd_min_norm(a, b) {
            return x;
        }
    }
    ridged_normal_equations(a, b)
}

/// Minimum-norm least squares via one-sided Jacobi SVD (columns of `a` are
/// rotated until mutually orthogonal). Singular values below
/// `eps * max(p, q) * sigma_max` are truncated. Only for p >= q.
fn svd_min_norm<T: Real>(a: &DenseMatrix<T>, b: &[T]) -> Option<Vec<T>> {
    let p = a.rows();
    let q = a.cols();
    // Column-major copy of A; V accumulates the right rotations.
    let mut u = vec![T::zero(); p * q];
    for i in 0..p {
        for (j, &val) in a.row(i).iter().enumerate() {
            u[j * p + i] = val;
        }
    }
    let mut v = DenseMatrix::<T>::identity(q);
    let tol = T::epsilon() * T::cast(p.max(q) as f64);
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..q {
            for j in (i + 1)..q {
                let (mut aii, mut ajj, mut aij) = (T::zero(), T::zero(), T::zero());
                for k in 0..p {
                    let ci = u[i * p + k];
                    let cj = u[j * p + k];
                    aii += ci * ci;
                    ajj += cj * cj;
                    aij += ci * cj;
                }
                if aij.abs() <= tol * (aii * ajj).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (ajj - aii) / (T::cast(2.0) * aij);
                let t = (T::one() / (zeta.abs() + (T::one() + zeta * zeta).sqrt()))
                    * if zeta >= T::zero() { T::one() } else { -T::one() };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for k in 0..p {
                    let ci = u[i * p + k];
                    let cj = u[j * p + k];
                    u[i * p + k] = c * ci - s * cj;
                    u[j * p + k] = s * ci + c * cj;
                }
                for k in 0..q {
                    let vi = v.get(k, i);
                    let vj = v.get(k, j);
                    v.set(k, i, c * vi - s * vj);
                    v.set(k, j, s * vi + c * vj);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigmas: Vec<T> = (0..q)
        .map(|j| u[j * p..(j + 1) * p].iter().map(|&x| x * x).sum::<T>().sqrt())
        .collect();
    let sigma_max = sigmas.iter().fold(T::zero(), |m, &s| if s > m { s } else { m });
    if sigma_max == T::zero() {
        return Some(vec![T::zero(); q]);
    }
    let cutoff = sigma_max * tol;
    // x = V diag(1/sigma) U^T b on the kept directions.
    let mut x = vec![T::zero(); q];
    for j in 0..q {
        if sigmas[j] <= cutoff {
            continue;
        }
        let col = &u[j * p..(j + 1) * p];
        let utb = col.iter().zip(b).map(|(&x_, &y)| x_ * y).sum::<T>() / sigmas[j];
        let coef = utb / sigmas[j];
        for k in 0..q {
            x[k] += v.get(k, j) * coef;
        }
    }
    if x.iter().all(|e| e.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Householder QR solve; `None` when a tiny pivot reveals rank deficiency.
fn qr_least_squares<T: Real>(a: &DenseMatrix<T>, b: &[T]) -> Option<Vec<T>> {
    let p = a.rows();
    let q = a.cols();
    // Column-major working copy keeps the reflector sweeps contiguous.
    let mut r = vec![T::zero(); p * q];
    for i in 0..p {
        for (j, &v) in a.row(i).iter().enumerate() {
            r[j * p + i] = v;
        }
    }
    let mut z = b.to_vec();
    for k in 0..q {
        // Householder vector for column k, rows k..p.
        let col = &r[k * p..(k + 1) * p];
        let norm = col[k..].iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm == T::zero() {
            continue; // zero column; pivot stays zero and trips the rank check
        }
        let alpha = if col[k] >= T::zero() { -norm } else { norm };
        let mut v = vec![T::zero(); p - k];
        v[0] = col[k] - alpha;
        v[1..].copy_from_slice(&col[k + 1..]);
        let vtv = v.iter().map(|&x| x * x).sum::<T>();
        if vtv == T::zero() {
            continue;
        }
        let two = T::cast(2.0);
        r[k * p + k] = alpha;
        for i in k + 1..p {
            r[k * p + i] = T::zero();
        }
        for j in k + 1..q {
            let col_j = &mut r[j * p..(j + 1) * p];
            let dot_vj = v
                .iter()
                .zip(&col_j[k..])
                .map(|(&x, &y)| x * y)
                .sum::<T>();
            let scale = two * dot_vj / vtv;
            for (vi, cj) in v.iter().zip(&mut col_j[k..]) {
                *cj -= scale * *vi;
            }
        }
        let dot_vz = v.iter().zip(&z[k..]).map(|(&x, &y)| x * y).sum::<T>();
        let scale = two * dot_vz / vtv;
        for (vi, zi) in v.iter().zip(&mut z[k..]) {
            *zi -= scale * *vi;
        }
    }
    // Rank check on the R diagonal.
    let mut max_diag = T::zero();
    for k in 0..q {
        let d = r[k * p + k].abs();
        if d > max_diag {
            max_diag = d;
        }
    }
    if max_diag == T::zero() {
        return Some(vec![T::zero(); q]);
    }
    let tol = max_diag * T::epsilon() * T::cast((p.max(q) * 16) as f64);
    for k in 0..q {
        if r[k * p + k].abs() <= tol {
            return None;
        }
    }
    let mut x = vec![T::zero(); q];
    for k in (0..q).rev() {
        let mut s = z[k];
        for j in k + 1..q {
            s -= r[j * p + k] * x[j];
        }
        x[k] = s / r[k * p + k];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

fn ridged_normal_equations<T: Real>(a: &DenseMatrix<T>, b: &[T]) -> Vec<T> {
    let q = a.cols();
    let mut gram = a.matmul_transpose_self(a);
    let rhs: Vec<T> = (0..q)
        .map(|j| (0..a.rows()).map(|i| a.get(i, j) * b[i]).sum())
        .collect();
    let tr = gram.trace();
    if tr <= T::zero() {
        return vec![T::zero(); q];
    }
    let lambda = T::cast(1e-10) * tr / T::cast(q as f64);
    gram.add_diagonal(lambda);
    match CholeskyFactor::new(&gram) {
        Ok(f) => f.solve_vec(&rhs),
        Err(_) => {
            // Severely ill-conditioned even after the ridge; escalate.
            let (f, _) = cholesky_with_jitter(&gram)
                .expect("ridged Gram matrix must factor with jitter");
            f.solve_vec(&rhs)
        }
    }
}
