//! Squared-exponential kernels (shared or per-dimension lengthscales) and
//! kernel-matrix assembly.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Real;

/// Kernel family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// One shared lengthscale: `exp(-0.5 ||x - z||^2 / l^2)`.
    Rbf,
    /// One lengthscale per input dimension:
    /// `exp(-0.5 sum_i (x_i - z_i)^2 / s_i^2)`.
    Ard,
}

/// Kernel hyperparameters: family, lengthscales, and observation noise.
///
/// The kernel has unit amplitude; targets are expected to be standardized.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec<T> {
    family: KernelFamily,
    lengthscales: Vec<T>,
    noise_variance: T,
}

impl<T: Real> KernelSpec<T> {
    pub fn rbf(lengthscale: T, noise_variance: T) -> Result<Self> {
        Self::new(KernelFamily::Rbf, vec![lengthscale], noise_variance)
    }

    pub fn ard(lengthscales: Vec<T>, noise_variance: T) -> Result<Self> {
        Self::new(KernelFamily::Ard, lengthscales, noise_variance)
    }

    pub fn new(family: KernelFamily, lengthscales: Vec<T>, noise_variance: T) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::contract("at least one lengthscale required"));
        }
        if family == KernelFamily::Rbf && lengthscales.len() != 1 {
            return Err(Error::contract(
                "shared-lengthscale kernel takes exactly one lengthscale",
            ));
        }
        if lengthscales.iter().any(|l| !(l.is_finite() && *l > T::zero())) {
            return Err(Error::contract("lengthscales must be strictly positive"));
        }
        if !(noise_variance.is_finite() && noise_variance > T::zero()) {
            return Err(Error::contract("noise variance must be strictly positive"));
        }
        Ok(KernelSpec {
            family,
            lengthscales,
            noise_variance,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn lengthscales(&self) -> &[T] {
        &self.lengthscales
    }

    pub fn noise_variance(&self) -> T {
        self.noise_variance
    }

    /// Dimension this spec accepts: any for `Rbf`, the lengthscale count for `Ard`.
    pub fn check_dim(&self, d: usize) -> Result<()> {
        if self.family == KernelFamily::Ard && self.lengthscales.len() != d {
            return Err(Error::DimensionMismatch {
                context: "kernel lengthscale count vs input dimension",
                expected: self.lengthscales.len(),
                got: d,
            });
        }
        Ok(())
    }

    /// Evaluate `k(x, z)`. Value lies in (0, 1] and equals 1 iff `x == z`.
    pub fn eval(&self, x: &[T], z: &[T]) -> Result<T> {
        if x.len() != z.len() {
            return Err(Error::DimensionMismatch {
                context: "kernel arguments",
                expected: x.len(),
                got: z.len(),
            });
        }
        self.check_dim(x.len())?;
        Ok(self.eval_unchecked(x, z))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[T], z: &[T]) -> T {
        let half = T::cast(0.5);
        let q = match self.family {
            KernelFamily::Rbf => {
                let l = self.lengthscales[0];
                let mut s = T::zero();
                for (&a, &b) in x.iter().zip(z) {
                    let d = a - b;
                    s += d * d;
                }
                s / (l * l)
            }
            KernelFamily::Ard => {
                let mut s = T::zero();
                for ((&a, &b), &l) in x.iter().zip(z).zip(&self.lengthscales) {
                    let d = (a - b) / l;
                    s += d * d;
                }
                s
            }
        };
        (-half * q).exp()
    }
}

/// Assemble the cross-kernel matrix with entries `k(a_i, b_j)`.
///
/// With `a` and `b` the same matrix the result is exactly symmetric with a
/// unit diagonal, because each entry is evaluated through the same
/// argument-symmetric arithmetic.
pub fn kernel_matrix<T: Real>(
    spec: &KernelSpec<T>,
    a: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            context: "kernel_matrix operand dimensions",
            expected: a.cols(),
            got: b.cols(),
        });
    }
    spec.check_dim(a.cols())?;
    let mut out = DenseMatrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let xi = a.row(i);
        let row = out.row_mut(i);
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = spec.eval_unchecked(xi, b.row(j));
        }
    }
    Ok(out)
}

/// Kernel row `[k(x, b_0), ..., k(x, b_{p-1})]` for a single left argument.
pub fn kernel_row<T: Real>(spec: &KernelSpec<T>, x: &[T], b: &DenseMatrix<T>) -> Result<Vec<T>> {
    if x.len() != b.cols() {
        return Err(Error::DimensionMismatch {
            context: "kernel_row operand dimensions",
            expected: b.cols(),
            got: x.len(),
        });
    }
    spec.check_dim(x.len())?;
    Ok((0..b.rows())
        .map(|j| spec.eval_unchecked(x, b.row(j)))
        .collect())
}
