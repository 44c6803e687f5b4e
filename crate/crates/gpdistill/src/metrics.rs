//! Evaluation metrics.

use crate::error::{HarnessError, Result};

/// Standardized mean squared error: mean squared prediction error divided by
/// the population variance of the true targets over the same points.
///
/// Predicting the target mean everywhere scores exactly 1.0.
pub fn smse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(HarnessError::config(format!(
            "smse length mismatch: {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let p = y_true.len();
    if p < 2 {
        return Err(HarnessError::config("smse needs at least two points"));
    }
    let mean = y_true.iter().sum::<f64>() / p as f64;
    let var = y_true.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / p as f64;
    if var == 0.0 {
        return Err(HarnessError::config("smse undefined for constant targets"));
    }
    let mse = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, f)| (y - f) * (y - f))
        .sum::<f64>()
        / p as f64;
    Ok(mse / var)
}

/// Root mean squared difference between two predictive-variance vectors.
pub fn variance_rmse(v_exact: &[f64], v_approx: &[f64]) -> Result<f64> {
    if v_exact.len() != v_approx.len() {
        return Err(HarnessError::config(format!(
            "variance_rmse length mismatch: {} vs {}",
            v_exact.len(),
            v_approx.len()
        )));
    }
    if v_exact.is_empty() {
        return Err(HarnessError::config("variance_rmse needs at least one point"));
    }
    if v_exact.iter().chain(v_approx).any(|v| *v < 0.0) {
        return Err(HarnessError::config("variances must be non-negative"));
    }
    let p = v_exact.len() as f64;
    Ok((v_exact
        .iter()
        .zip(v_approx)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / p)
        .sqrt())
}

/// Plain root mean squared error between two equal-length vectors.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(HarnessError::config("rmse needs equal non-empty vectors"));
    }
    let p = a.len() as f64;
    Ok((a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / p)
        .sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smse_perfect_prediction_is_zero() {
        let y = vec![1.0, 2.0, 3.0];
        assert_eq!(smse(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn smse_mean_predictor_is_exactly_one() {
        let y = vec![3.0, -1.5, 7.25, 0.125, 2.0];
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let pred = vec![mean; y.len()];
        assert_eq!(smse(&y, &pred).unwrap(), 1.0);
    }

    #[test]
    fn smse_rejects_degenerate_inputs() {
        assert!(smse(&[1.0], &[1.0]).is_err());
        assert!(smse(&[2.0, 2.0], &[1.0, 3.0]).is_err());
        assert!(smse(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn variance_rmse_cases() {
        let v = vec![0.1, 0.2, 0.3];
        assert_eq!(variance_rmse(&v, &v).unwrap(), 0.0);
        let shifted: Vec<f64> = v.iter().map(|x| x + 0.05).collect();
        assert!((variance_rmse(&v, &shifted).unwrap() - 0.05).abs() < 1e-12);
        assert!(variance_rmse(&v, &v[..2]).is_err());
        assert!(variance_rmse(&[-0.1, 0.0], &[0.0, 0.0]).is_err());
    }
}
