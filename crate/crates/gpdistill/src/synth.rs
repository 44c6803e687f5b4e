//! Deterministic synthetic data generators used by the experiments and the
//! offline test suite.

use gpdistill_core::{cholesky_with_jitter, kernel_matrix, DenseMatrix, KernelSpec, Matrix64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::Result;

/// n sorted 1-D inputs drawn from a zero-mean normal with the given
/// standard deviation.
pub fn sorted_normal_inputs(n: usize, sd: f64, seed: u64) -> Matrix64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, sd).expect("valid normal");
    let mut xs: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    DenseMatrix::from_vec(n, 1, xs).expect("finite draws")
}

/// The 1-D toy curve: inputs uniform on [-10, 10] (sorted), targets
/// `sin(x) exp(-x^2 / 50) + eps` with unit-variance Gaussian noise.
pub fn toy1d(n: usize, seed: u64) -> (Matrix64, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let y: Vec<f64> = xs
        .iter()
        .map(|&x| toy1d_truth(x) + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    (DenseMatrix::from_vec(n, 1, xs).expect("finite draws"), y)
}

/// Noise-free value of the toy curve.
pub fn toy1d_truth(x: f64) -> f64 {
    x.sin() * (-x * x / 50.0).exp()
}

/// Draw a regression dataset exactly from a squared-exponential GP:
/// standard-normal inputs, a latent function sampled through the Cholesky
/// factor of the kernel matrix, and additive observation noise.
pub fn rbf_draw(
    n: usize,
    d: usize,
    lengthscale: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<(Matrix64, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DenseMatrix::from_fn(n, d, |_, _| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    });
    let spec = KernelSpec::rbf(lengthscale, 1e-8)?;
    let mut k = kernel_matrix(&spec, &x, &x)?;
    k.add_diagonal(1e-8);
    let (chol, _) = cholesky_with_jitter(&k)?;
    let z: Vec<f64> = (0..n)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let f = chol.lower().matvec(&z);
    let y: Vec<f64> = f
        .iter()
        .map(|&v| v + noise_sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let a = sorted_normal_inputs(50, 5.0, 7);
        let b = sorted_normal_inputs(50, 5.0, 7);
        assert_eq!(a.as_slice(), b.as_slice());
        assert!(a.as_slice().windows(2).all(|w| w[0] <= w[1]));

        let (x1, y1) = toy1d(20, 3);
        let (x2, y2) = toy1d(20, 3);
        assert_eq!(x1.as_slice(), x2.as_slice());
        assert_eq!(y1, y2);

        let (x1, y1) = rbf_draw(15, 3, 2.0, 0.1, 11).unwrap();
        let (x2, y2) = rbf_draw(15, 3, 2.0, 0.1, 11).unwrap();
        assert_eq!(x1.as_slice(), x2.as_slice());
        assert_eq!(y1, y2);
    }
}
