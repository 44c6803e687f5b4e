//! Gaussian-process regression with sparse low-rank kernel compression.
//!
//! The crate trains an exact GP teacher, compresses its kernel matrix into
//! the student form `W K_UU W^T` (k-means inducing points `U`, row-sparse
//! weights `W` with at most `b` entries on nearest-neighbor supports), and
//! serves fast mean/variance predictions from precomputed quantities whose
//! storage is independent of the training-set size. Subset-of-regressors,
//! FITC, and a 1-D grid-interpolation GP are included as reference
//! approximations.
//!
//! All numerics are generic over the scalar type through [`Real`]
//! (`f32`/`f64`); the `*64` aliases below pin the common case.

// Index loops in the numeric kernels mirror the matrix subscripts.
#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod data;
pub mod distill;
pub mod error;
pub mod exact;
pub mod infer;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod scalar;
pub mod spatial;

pub use baselines::{GridDesign, GridInterpModel, SorFitcModel, SorFitcVariant};
pub use data::{Dataset, TargetScaling};
pub use distill::{
    distill, distill_kernel, error_vs_sparsity, gradient, init_weights, objective, project_rows,
    DistillConfig, GradientMode, IterationRecord, KernelDistillation, SparseWeights,
};
pub use error::{Error, Result};
pub use exact::{log_marginal_likelihood, ExactGpModel, TrainOptions};
pub use infer::{precompute, DistilledModel, PredictionResult, TestWeightSystem};
pub use kernel::{kernel_matrix, kernel_row, KernelFamily, KernelSpec};
pub use linalg::{
    cholesky_with_jitter, fro_diff, least_squares, spd_solve, CholeskyFactor, DenseMatrix,
};
pub use scalar::Real;
pub use spatial::{kmeans, kmeans_with_trace, InducingSet, KdTree, KmeansTrace, NeighborList};

/// f64-concrete aliases for the main model types.
pub type Matrix64 = DenseMatrix<f64>;
pub type KernelSpec64 = KernelSpec<f64>;
pub type Dataset64 = Dataset<f64>;
pub type ExactGp64 = ExactGpModel<f64>;
pub type Distilled64 = DistilledModel<f64>;
pub type SparseWeights64 = SparseWeights<f64>;
pub type DistillConfig64 = DistillConfig<f64>;
