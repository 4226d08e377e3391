//! Fixed-rate sample series shared by every analysis stage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Physical unit carried by a [`UniformSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Adc,
    Ppm,
}

/// Per-sample provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityFlag {
    Measured,
    Interpolated,
    /// Calibrated value came out below zero; kept as-is.
    NegativeClampedCandidate,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error("series must contain at least one sample")]
    Empty,
    #[error("sample rate must be finite and positive, got {0}")]
    InvalidRate(f64),
    #[error("flag count {flags} does not match value count {values}")]
    FlagLengthMismatch { values: usize, flags: usize },
}

/// Samples on a regular time grid: sample `k` sits at `start_t + k / rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSeries {
    start_t: f64,
    rate_hz: f64,
    values: Vec<f64>,
    unit: Unit,
    flags: Vec<QualityFlag>,
}

impl UniformSeries {
    /// Builds a series with every sample flagged as measured.
    pub fn new(start_t: f64, rate_hz: f64, values: Vec<f64>, unit: Unit) -> Result<Self, SeriesError> {
        let flags = vec![QualityFlag::Measured; values.len()];
        Self::with_flags(start_t, rate_hz, values, unit, flags)
    }

    pub fn with_flags(
        start_t: f64,
        rate_hz: f64,
        values: Vec<f64>,
        unit: Unit,
        flags: Vec<QualityFlag>,
    ) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(SeriesError::InvalidRate(rate_hz));
        }
        if flags.len() != values.len() {
            return Err(SeriesError::FlagLengthMismatch {
                values: values.len(),
                flags: flags.len(),
            });
        }
        Ok(Self {
            start_t,
            rate_hz,
            values,
            unit,
            flags,
        })
    }

    /// Convenience constructor for ppm data starting at t = 0.
    pub fn ppm(values: Vec<f64>, rate_hz: f64) -> Result<Self, SeriesError> {
        Self::new(0.0, rate_hz, values, Unit::Ppm)
    }

    pub fn start_t(&self) -> f64 {
        self.start_t
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn flags(&self) -> &[QualityFlag] {
        &self.flags
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Timestamp of sample `k` in epoch seconds.
    pub fn time_of(&self, k: usize) -> f64 {
        self.start_t + k as f64 / self.rate_hz
    }

    /// Duration covered by the series, in seconds.
    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.rate_hz
    }

    /// Contiguous sub-range `[from, to)` with its own start time.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self, SeriesError> {
        Self::with_flags(
            self.time_of(from),
            self.rate_hz,
            self.values[from..to].to_vec(),
            self.unit,
            self.flags[from..to].to_vec(),
        )
    }

    /// Same grid, flags and metadata, new values.
    pub fn map_values<F: FnMut(f64) -> f64>(&self, f: F) -> Self {
        Self {
            start_t: self.start_t,
            rate_hz: self.rate_hz,
            values: self.values.iter().copied().map(f).collect(),
            unit: self.unit,
            flags: self.flags.clone(),
        }
    }

    /// Like [`map_values`](Self::map_values) but also passes the sample index.
    pub fn map_values_indexed<F: FnMut(usize, f64) -> f64>(&self, mut f: F) -> Self {
        Self {
            values: self.values.iter().enumerate().map(|(k, &v)| f(k, v)).collect(),
            ..self.clone()
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Small numeric helpers shared across modules.
pub(crate) mod stats {
    pub fn mean(x: &[f64]) -> f64 {
        x.iter().sum::<f64>() / x.len() as f64
    }

    /// Population (1/n) variance, two-pass.
    pub fn pop_variance(x: &[f64]) -> f64 {
        let m = mean(x);
        x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
    }

    /// Sample (1/(n-1)) standard deviation; zero for n < 2.
    pub fn sample_std(x: &[f64]) -> f64 {
        if x.len() < 2 {
            return 0.0;
        }
        let m = mean(x);
        (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
    }

    pub fn median(x: &[f64]) -> f64 {
        let mut v = x.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    pub fn is_constant(x: &[f64]) -> bool {
        x.windows(2).all(|w| w[0] == w[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_bad_rate() {
        assert_eq!(UniformSeries::ppm(vec![], 1.0), Err(SeriesError::Empty));
        assert!(matches!(
            UniformSeries::ppm(vec![1.0], 0.0),
            Err(SeriesError::InvalidRate(_))
        ));
        assert!(UniformSeries::ppm(vec![1.0], f64::NAN).is_err());
    }

    #[test]
    fn grid_times() {
        let s = UniformSeries::new(100.0, 0.2, vec![0.0; 4], Unit::Ppm).unwrap();
        assert_eq!(s.time_of(3), 115.0);
        assert_eq!(s.duration_s(), 20.0);
        let sub = s.slice(1, 3).unwrap();
        assert_eq!(sub.start_t(), 105.0);
        assert_eq!(sub.len(), 2);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(stats::median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(stats::median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
