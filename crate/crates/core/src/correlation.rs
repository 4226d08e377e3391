//! Sample autocorrelation, partial autocorrelation (Durbin-Levinson) and
//! white-noise significance bands.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{stats, UniformSeries};

/// Two-sided 95% normal quantile used for correlogram bands.
pub const SIGNIFICANCE_Z: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrelationError {
    #[error("series has zero variance")]
    DegenerateVariance,
    #[error("max lag {max_lag} must be below half the series length {len}")]
    LagTooLarge { max_lag: usize, len: usize },
    #[error("prediction-error variance became non-positive at lag {0}")]
    NumericalBreakdown(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    Acf,
    Pacf,
}

/// Correlation values indexed by lag `0..=max_lag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSequence {
    pub kind: CorrelationKind,
    pub values: Vec<f64>,
    /// Number of samples the sequence was estimated from.
    pub n: usize,
}

impl CorrelationSequence {
    pub fn max_lag(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// `1.96 / sqrt(n)`.
    pub fn significance_bound(&self) -> f64 {
        significance_bound(self.n)
    }
}

pub fn significance_bound(n: usize) -> f64 {
    SIGNIFICANCE_Z / (n as f64).sqrt()
}

fn check_lag(len: usize, max_lag: usize) -> Result<(), CorrelationError> {
    if 2 * max_lag >= len {
        return Err(CorrelationError::LagTooLarge { max_lag, len });
    }
    Ok(())
}

/// Biased ACF of raw values.
pub fn acf_values(x: &[f64], max_lag: usize) -> Result<Vec<f64>, CorrelationError> {
    check_lag(x.len(), max_lag)?;
    if stats::is_constant(x) {
        return Err(CorrelationError::DegenerateVariance);
    }
    let mean = stats::mean(x);
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|v| v * v).sum();
    if !(denom > 0.0) {
        return Err(CorrelationError::DegenerateVariance);
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    out.push(1.0);
    for k in 1..=max_lag {
        let num: f64 = centered[..centered.len() - k]
            .iter()
            .zip(&centered[k..])
            .map(|(a, b)| a * b)
            .sum();
        out.push(num / denom);
    }
    Ok(out)
}

/// Biased sample autocorrelation
/// `r_k = Σ (x_t - x̄)(x_{t+k} - x̄) / Σ (x_t - x̄)^2`, with `r_0 = 1`.
pub fn acf(series: &UniformSeries, max_lag: usize) -> Result<CorrelationSequence, CorrelationError> {
    Ok(CorrelationSequence {
        kind: CorrelationKind::Acf,
        values: acf_values(series.values(), max_lag)?,
        n: series.len(),
    })
}

/// Reflection coefficients of an autocorrelation sequence via the
/// Durbin-Levinson recursion. Output index 0 is defined as 1.
pub fn durbin_levinson(r: &[f64]) -> Result<Vec<f64>, CorrelationError> {
    let max_lag = r.len().saturating_sub(1);
    let mut out = vec![1.0];
    let mut phi: Vec<f64> = Vec::with_capacity(max_lag);
    let mut err = r[0];
    for k in 1..=max_lag {
        let acc: f64 = phi.iter().enumerate().map(|(j, p)| p * r[k - 1 - j]).sum();
        let kappa = (r[k] - acc) / err;
        let prev = phi.clone();
        for j in 0..phi.len() {
            phi[j] = prev[j] - kappa * prev[prev.len() - 1 - j];
        }
        phi.push(kappa);
        err *= 1.0 - kappa * kappa;
        if !(err > 0.0) && k < max_lag {
            return Err(CorrelationError::NumericalBreakdown(k));
        }
        out.push(kappa);
    }
    Ok(out)
}

/// Partial autocorrelation from the sample ACF.
pub fn pacf(series: &UniformSeries, max_lag: usize) -> Result<CorrelationSequence, CorrelationError> {
    let r = acf_values(series.values(), max_lag)?;
    Ok(CorrelationSequence {
        kind: CorrelationKind::Pacf,
        values: durbin_levinson(&r)?,
        n: series.len(),
    })
}

/// Smallest lag `k >= 1` with `|values[k]| < 1.96/sqrt(n)`, or
/// `max_lag + 1` when every lag is significant. Meaningful for `n >= 30`.
pub fn first_insignificant_lag(corr: &CorrelationSequence) -> usize {
    let bound = corr.significance_bound();
    corr.values
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, v)| v.abs() < bound)
        .map(|(k, _)| k)
        .unwrap_or(corr.max_lag() + 1)
}
