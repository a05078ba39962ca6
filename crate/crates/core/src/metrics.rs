//! Imputation error metrics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// MAE and RMSE in source-standardized units; R^2 on raw values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
}

/// Scores `predicted` against `truth`. Both are standardized with the source
/// mean and standard deviation before MAE/RMSE; R^2 is affine invariant and
/// computed on the raw values.
pub fn metrics(truth: &DVector<f64>, predicted: &DVector<f64>, source_mean: f64, source_sd: f64) -> Result<Scores> {
    let n = truth.len();
    if predicted.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: predicted.len(),
        });
    }
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 1, got: n });
    }
    if !(source_sd > 0.0) {
        return Err(Error::UndefinedMetric(format!("source sd {source_sd} is not positive")));
    }
    let mean_t = truth.mean();
    let ss_tot: f64 = truth.iter().map(|v| (v - mean_t).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::UndefinedMetric("truth has zero variance; R^2 undefined".into()));
    }
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut ss_res = 0.0;
    for (&y, &yhat) in truth.iter().zip(predicted.iter()) {
        let e = y - yhat;
        ss_res += e * e;
        let ez = (y - source_mean) / source_sd - (yhat - source_mean) / source_sd;
        abs += ez.abs();
        sq += ez * ez;
    }
    let nf = n as f64;
    Ok(Scores {
        mae: abs / nf,
        rmse: (sq / nf).sqrt(),
        r2: 1.0 - ss_res / ss_tot,
    })
}

/// Sample mean and standard deviation (n-1 divisor).
pub fn mean_sd(values: &DVector<f64>) -> (f64, f64) {
    let n = values.len();
    let mean = values.mean();
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
