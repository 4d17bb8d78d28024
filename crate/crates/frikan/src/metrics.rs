//! Fit-quality metrics: coefficient of determination, relative parameter
//! error and Pearson correlation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficient of determination `1 - SSres / SStot`.
///
/// Conventions for degenerate cases: returns 1 when the residual sum is
/// exactly zero (perfect fit, even of a constant), otherwise 0 when the
/// truth has zero variance.
pub fn r_squared(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::invalid(format!(
            "r_squared needs equal nonzero lengths, got {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_res == 0.0 {
        Ok(1.0)
    } else if ss_tot == 0.0 {
        Ok(0.0)
    } else {
        Ok(1.0 - ss_res / ss_tot)
    }
}

/// Absolute relative error `|(pred - truth) / truth|`.
pub fn relative_error(pred: f64, truth: f64) -> Result<f64> {
    if truth == 0.0 {
        return Err(Error::invalid("relative error undefined for truth = 0"));
    }
    Ok(((pred - truth) / truth).abs())
}

/// Pearson correlation coefficient of two equally long, non-constant series.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid(format!(
            "pearson correlation needs equal lengths >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::invalid("pearson correlation undefined for constant input"));
    }
    Ok((cov / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0))
}

/// Summary of one fitting run, serialized into run reports.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitReport {
    /// R² of predictions against the training targets.
    pub r_squared: f64,
    /// R² against a noise-free reference curve, when one is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_squared_vs_clean: Option<f64>,
    /// Per-parameter relative errors against ground truth, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_errors: Option<BTreeMap<String, f64>>,
    /// Pearson correlation of each input channel against the torque.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlations: Option<BTreeMap<String, f64>>,
    /// Echo of the configuration that produced the fit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    /// Wall-clock fitting time in seconds.
    pub timing_seconds: f64,
}
