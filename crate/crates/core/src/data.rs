//! Training data container with standardization metadata.
//!
//! Models operate in standardized space (features and targets); the stored
//! means and standard deviations let callers map predictions back to the
//! original units.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Real;

/// Standardization statistics detached from the data they came from, so a
/// deployed model can map raw queries into its training space and
/// predictions back out.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetScaling<T> {
    pub feature_means: Vec<T>,
    pub feature_sds: Vec<T>,
    pub target_mean: T,
    pub target_sd: T,
}

impl<T: Real> TargetScaling<T> {
    pub fn standardize_features(&self, raw: &[T]) -> Result<Vec<T>> {
        if raw.len() != self.feature_means.len() {
            return Err(Error::DimensionMismatch {
                context: "feature standardization",
                expected: self.feature_means.len(),
                got: raw.len(),
            });
        }
        Ok(raw
            .iter()
            .zip(self.feature_means.iter().zip(&self.feature_sds))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect())
    }

    pub fn destandardize_target(&self, standardized: T) -> T {
        standardized * self.target_sd + self.target_mean
    }

    pub fn destandardize_variance(&self, standardized: T) -> T {
        standardized * self.target_sd * self.target_sd
    }
}

/// Input matrix, target vector, and the statistics used to standardize them.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    x: DenseMatrix<T>,
    y: Vec<T>,
    feature_means: Vec<T>,
    feature_sds: Vec<T>,
    target_mean: T,
    target_sd: T,
}

impl<T: Real> Dataset<T> {
    /// Wrap already-scaled data with identity standardization metadata.
    pub fn new(x: DenseMatrix<T>, y: Vec<T>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset target length",
                expected: x.rows(),
                got: y.len(),
            });
        }
        if x.rows() == 0 {
            return Err(Error::contract("dataset must contain at least one row"));
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("dataset entries must be finite"));
        }
        let d = x.cols();
        Ok(Dataset {
            x,
            y,
            feature_means: vec![T::zero(); d],
            feature_sds: vec![T::one(); d],
            target_mean: T::zero(),
            target_sd: T::one(),
        })
    }

    /// Standardize features and targets to zero mean / unit standard
    /// deviation, keeping the statistics for inverse transforms.
    ///
    /// Constant feature columns keep sd 1 (with a warning); a constant
    /// target is an error.
    pub fn standardized(x: DenseMatrix<T>, y: Vec<T>) -> Result<Self> {
        if x.rows() < 2 {
            return Err(Error::contract(
                "standardization needs at least two rows",
            ));
        }
        let stats = Standardization::fit(&x, &y)?;
        stats.apply(x, y)
    }

    /// Standardize with statistics fitted elsewhere (train stats applied to
    /// a test split).
    pub fn standardized_like(x: DenseMatrix<T>, y: Vec<T>, like: &Dataset<T>) -> Result<Self> {
        let stats = Standardization {
            feature_means: like.feature_means.clone(),
            feature_sds: like.feature_sds.clone(),
            target_mean: like.target_mean,
            target_sd: like.target_sd,
        };
        stats.apply(x, y)
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &DenseMatrix<T> {
        &self.x
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn feature_means(&self) -> &[T] {
        &self.feature_means
    }

    pub fn feature_sds(&self) -> &[T] {
        &self.feature_sds
    }

    pub fn target_mean(&self) -> T {
        self.target_mean
    }

    pub fn target_sd(&self) -> T {
        self.target_sd
    }

    /// Rebuild a dataset from parts (deserialization path).
    pub fn from_parts(
        x: DenseMatrix<T>,
        y: Vec<T>,
        feature_means: Vec<T>,
        feature_sds: Vec<T>,
        target_mean: T,
        target_sd: T,
    ) -> Result<Self> {
        let mut ds = Dataset::new(x, y)?;
        if feature_means.len() != ds.dim() || feature_sds.len() != ds.dim() {
            return Err(Error::contract("standardization metadata dimension mismatch"));
        }
        if !(target_sd.is_finite() && target_sd > T::zero())
            || feature_sds.iter().any(|s| !(s.is_finite() && *s > T::zero()))
        {
            return Err(Error::contract("standard deviations must be positive"));
        }
        ds.feature_means = feature_means;
        ds.feature_sds = feature_sds;
        ds.target_mean = target_mean;
        ds.target_sd = target_sd;
        Ok(ds)
    }

    /// Map a raw feature row into the model's standardized space.
    pub fn standardize_features(&self, raw: &[T]) -> Result<Vec<T>> {
        if raw.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "feature standardization",
                expected: self.dim(),
                got: raw.len(),
            });
        }
        Ok(raw
            .iter()
            .zip(self.feature_means.iter().zip(&self.feature_sds))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect())
    }

    /// Map a standardized target prediction back to original units.
    pub fn destandardize_target(&self, standardized: T) -> T {
        standardized * self.target_sd + self.target_mean
    }

    /// Detach the standardization statistics.
    pub fn scaling(&self) -> TargetScaling<T> {
        TargetScaling {
            feature_means: self.feature_means.clone(),
            feature_sds: self.feature_sds.clone(),
            target_mean: self.target_mean,
            target_sd: self.target_sd,
        }
    }

    /// Map a standardized predictive variance back to original units.
    pub fn destandardize_variance(&self, standardized: T) -> T {
        standardized * self.target_sd * self.target_sd
    }
}

struct Standardization<T> {
    feature_means: Vec<T>,
    feature_sds: Vec<T>,
    target_mean: T,
    target_sd: T,
}

impl<T: Real> Standardization<T> {
    fn fit(x: &DenseMatrix<T>, y: &[T]) -> Result<Self> {
        let n = x.rows();
        let d = x.cols();
        let inv_n = T::one() / T::cast(n as f64);
        let mut feature_means = vec![T::zero(); d];
        let mut feature_sds = vec![T::zero(); d];
        for i in 0..n {
            for (j, &v) in x.row(i).iter().enumerate() {
                feature_means[j] += v;
            }
        }
        for mj in feature_means.iter_mut() {
            *mj *= inv_n;
        }
        for i in 0..n {
            for (j, &v) in x.row(i).iter().enumerate() {
                let dlt = v - feature_means[j];
                feature_sds[j] += dlt * dlt;
            }
        }
        for (j, sj) in feature_sds.iter_mut().enumerate() {
            let sd = (*sj * inv_n).sqrt();
            if sd > T::zero() {
                *sj = sd;
            } else {
                log::warn!("feature column {j} is constant; keeping sd = 1");
                *sj = T::one();
            }
        }
        let target_mean = y.iter().copied().sum::<T>() * inv_n;
        let target_var = y
            .iter()
            .map(|&v| {
                let dlt = v - target_mean;
                dlt * dlt
            })
            .sum::<T>()
            * inv_n;
        let target_sd = target_var.sqrt();
        if !(target_sd.is_finite() && target_sd > T::zero()) {
            return Err(Error::contract("target column is constant"));
        }
        Ok(Standardization {
            feature_means,
            feature_sds,
            target_mean,
            target_sd,
        })
    }

    fn apply(&self, x: DenseMatrix<T>, y: Vec<T>) -> Result<Dataset<T>> {
        let mut ds = Dataset::new(x, y)?;
        if ds.dim() != self.feature_means.len() {
            return Err(Error::DimensionMismatch {
                context: "standardization dimension",
                expected: self.feature_means.len(),
                got: ds.dim(),
            });
        }
        for i in 0..ds.x.rows() {
            let row = ds.x.row_mut(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.feature_means[j]) / self.feature_sds[j];
            }
        }
        for v in ds.y.iter_mut() {
            *v = (*v - self.target_mean) / self.target_sd;
        }
        ds.feature_means = self.feature_means.clone();
        ds.feature_sds = self.feature_sds.clone();
        ds.target_mean = self.target_mean;
        ds.target_sd = self.target_sd;
        Ok(ds)
    }
}
