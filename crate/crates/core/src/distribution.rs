//! Distributional analysis: histograms, lognormal maximum-likelihood fits,
//! Kolmogorov-Smirnov goodness of fit, the averaging-time study and
//! stratified sampling budgets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::resample::{self, ResampleError};
use crate::series::{stats, UniformSeries};
use crate::synth::{standard_normal, stream_rng};

/// Coefficient of the two-sided 5% Kolmogorov-Smirnov critical value,
/// `D_crit = 1.36 / sqrt(n)`.
pub const KS_CRITICAL_COEFF_5PCT: f64 = 1.36;

/// Minimum number of block means per averaging window.
pub const MIN_BLOCKS: usize = 30;

/// Caveat attached to every asymptotic KS p-value computed here.
pub const KS_CAVEAT: &str = "params-estimated";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("series is empty")]
    EmptySeries,
    #[error("histogram range is degenerate (min = max) and no explicit range was given")]
    DegenerateRange,
    #[error("invalid histogram range [{0}, {1}]")]
    InvalidRange(f64, f64),
    #[error("histogram needs at least one bin")]
    ZeroBins,
    #[error("non-positive value at index {0}")]
    NonPositiveValue(usize),
    #[error("lognormal fit is degenerate (sigma = 0)")]
    DegenerateFit,
    #[error("window of {0} s leaves fewer than {MIN_BLOCKS} blocks")]
    TooFewBlocks(u64),
    #[error("window of {0} s is not a whole number of samples")]
    InvalidWindow(u64),
    #[error("all strata have zero standard deviation")]
    AllZeroSigma,
    #[error("invalid stratum sigma {0}")]
    InvalidSigma(f64),
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error(transparent)]
    Resample(#[from] ResampleError),
}

/// Equal-width histogram. Bins are right-open except the last, which is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Index of the most populated bin (earliest on ties).
    pub fn modal_bin(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }
}

/// Histogram of raw values; see [`histogram`].
pub fn histogram_of(values: &[f64], n_bins: usize, range: Option<(f64, f64)>) -> Result<Histogram, DistributionError> {
    if values.is_empty() {
        return Err(DistributionError::EmptySeries);
    }
    if n_bins == 0 {
        return Err(DistributionError::ZeroBins);
    }
    let (lo, hi) = match range {
        Some((lo, hi)) => {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(DistributionError::InvalidRange(lo, hi));
            }
            (lo, hi)
        }
        None => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                return Err(DistributionError::DegenerateRange);
            }
            (lo, hi)
        }
    };
    let width = (hi - lo) / n_bins as f64;
    let mut edges: Vec<f64> = (0..=n_bins).map(|i| lo + i as f64 * width).collect();
    edges[n_bins] = hi;

    let mut counts = vec![0u64; n_bins];
    for &x in values {
        if !(lo..=hi).contains(&x) {
            continue;
        }
        let mut i = (((x - lo) / width) as usize).min(n_bins - 1);
        // Settle rounding at bin boundaries against the stored edges.
        while i > 0 && x < edges[i] {
            i -= 1;
        }
        while i + 1 < n_bins && x >= edges[i + 1] {
            i += 1;
        }
        counts[i] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Equal-width histogram over `range`, or over `[min, max]` of the data.
pub fn histogram(series: &UniformSeries, n_bins: usize, range: Option<(f64, f64)>) -> Result<Histogram, DistributionError> {
    histogram_of(series.values(), n_bins, range)
}

/// Maximum-likelihood lognormal parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalFit {
    /// Mean of the log values.
    pub mu: f64,
    /// Population standard deviation of the log values.
    pub sigma: f64,
    pub n: usize,
    pub degenerate: bool,
}

impl LogNormalFit {
    /// Fitted CDF at `x > 0`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        Normal::new(self.mu, self.sigma)
            .map(|d| d.cdf(x.ln()))
            .unwrap_or(f64::NAN)
    }

    pub fn median(&self) -> f64 {
        self.mu.exp()
    }
}

/// Lognormal fit of raw values; see [`fit_lognormal`].
pub fn fit_lognormal_values(values: &[f64]) -> Result<LogNormalFit, DistributionError> {
    if values.is_empty() {
        return Err(DistributionError::EmptySeries);
    }
    if let Some(i) = values.iter().position(|&v| !(v > 0.0)) {
        return Err(DistributionError::NonPositiveValue(i));
    }
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mu = stats::mean(&logs);
    let sigma = stats::pop_variance(&logs).sqrt();
    Ok(LogNormalFit {
        mu,
        sigma,
        n: values.len(),
        degenerate: sigma == 0.0,
    })
}

/// `mu` = mean of ln(x), `sigma` = population standard deviation of ln(x).
pub fn fit_lognormal(series: &UniformSeries) -> Result<LogNormalFit, DistributionError> {
    fit_lognormal_values(series.values())
}

/// Kolmogorov-Smirnov statistic against a fitted lognormal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    #[serde(rename = "d")]
    pub d_stat: f64,
    /// Asymptotic Kolmogorov p-value. Optimistic: the parameters under test
    /// were estimated from the same sample.
    #[serde(rename = "p")]
    pub p_asymptotic: f64,
    pub caveat: String,
}

impl KsResult {
    /// `D < 1.36/sqrt(n)`.
    pub fn passes_5pct(&self, n: usize) -> bool {
        self.d_stat < ks_critical_5pct(n)
    }
}

pub fn ks_critical_5pct(n: usize) -> f64 {
    KS_CRITICAL_COEFF_5PCT / (n as f64).sqrt()
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form converges fast for small lambda.
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|j| {
                let k = (2 * j - 1) as f64;
                (-k * k * c).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|j| {
                let j = j as f64;
                let sign = if j as u64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * j * j * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn ks_statistic(values: &[f64], fit: &LogNormalFit) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = fit.cdf(x);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// KS test of raw values; see [`ks_lognormal`].
pub fn ks_lognormal_values(values: &[f64], fit: &LogNormalFit) -> Result<KsResult, DistributionError> {
    if fit.degenerate || !(fit.sigma > 0.0) {
        return Err(DistributionError::DegenerateFit);
    }
    if values.is_empty() {
        return Err(DistributionError::EmptySeries);
    }
    if let Some(i) = values.iter().position(|&v| !(v > 0.0)) {
        return Err(DistributionError::NonPositiveValue(i));
    }
    let d = ks_statistic(values, fit);
    let sqrt_n = (values.len() as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    Ok(KsResult {
        d_stat: d,
        p_asymptotic: kolmogorov_sf(lambda),
        caveat: KS_CAVEAT.to_string(),
    })
}

/// Two-sided KS distance between the empirical CDF and the fitted lognormal.
pub fn ks_lognormal(series: &UniformSeries, fit: &LogNormalFit) -> Result<KsResult, DistributionError> {
    ks_lognormal_values(series.values(), fit)
}

/// Parametric-bootstrap p-value for the KS statistic with estimated
/// parameters: each resample draws `n` iid values from the fitted lognormal,
/// refits, and recomputes D. Returns the fraction of resamples with
/// `D* >= D`.
pub fn ks_bootstrap_pvalue(
    series: &UniformSeries,
    fit: &LogNormalFit,
    resamples: usize,
    seed: u64,
) -> Result<f64, DistributionError> {
    let observed = ks_lognormal(series, fit)?.d_stat;
    let n = series.len();
    let exceed: usize = (0..resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b);
            let draw: Vec<f64> = (0..n)
                .map(|_| (fit.mu + fit.sigma * standard_normal(&mut rng)).exp())
                .collect();
            let refit = fit_lognormal_values(&draw)?;
            if refit.degenerate {
                return Ok(1);
            }
            Ok(usize::from(ks_statistic(&draw, &refit) >= observed))
        })
        .collect::<Result<Vec<usize>, DistributionError>>()?
        .into_iter()
        .sum();
    Ok(exceed as f64 / resamples.max(1) as f64)
}

/// One row of the averaging-time study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFit {
    pub window_s: u64,
    pub n_blocks: usize,
    pub fit: LogNormalFit,
    pub ks: KsResult,
    pub passes_5pct: bool,
}

/// Block-averages the series at each window length and tests the block
/// means for lognormality. Results follow the input order.
pub fn averaging_invariance(series: &UniformSeries, window_lengths_s: &[u64]) -> Result<Vec<WindowFit>, DistributionError> {
    window_lengths_s
        .par_iter()
        .map(|&window_s| {
            let k_f = window_s as f64 * series.rate_hz();
            let k = k_f.round();
            if k < 1.0 || (k - k_f).abs() > 1e-9 {
                return Err(DistributionError::InvalidWindow(window_s));
            }
            let k = k as usize;
            if series.len() / k < MIN_BLOCKS {
                return Err(DistributionError::TooFewBlocks(window_s));
            }
            let blocks = resample::block_average(series, k)?;
            let fit = fit_lognormal(&blocks)?;
            let ks = ks_lognormal(&blocks, &fit)?;
            Ok(WindowFit {
                window_s,
                n_blocks: blocks.len(),
                passes_5pct: ks.passes_5pct(blocks.len()),
                fit,
                ks,
            })
        })
        .collect()
}

/// How the total sampling budget is determined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    /// Split a fixed number of samples across strata (Neyman allocation).
    FixedTotal(u64),
    /// Per-stratum size for a confidence half-width `h` at normal quantile `z`.
    TargetHalfwidth { h: f64, z: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub name: String,
    pub n: u64,
}

/// Samples per stratum. `FixedTotal` allocates proportionally to sigma
/// (equal stratum sizes), rounding by largest remainder so the total is
/// exact; `TargetHalfwidth` uses `ceil((z·sigma/h)^2)`.
pub fn sampling_budget(strata: &[(String, f64)], mode: BudgetMode) -> Result<Vec<Allocation>, DistributionError> {
    if let Some(&(_, s)) = strata.iter().find(|(_, s)| !(s.is_finite() && *s >= 0.0)) {
        return Err(DistributionError::InvalidSigma(s));
    }
    let total_sigma: f64 = strata.iter().map(|(_, s)| s).sum();
    if total_sigma == 0.0 {
        return Err(DistributionError::AllZeroSigma);
    }
    match mode {
        BudgetMode::FixedTotal(total) => {
            if total < strata.len() as u64 {
                return Err(DistributionError::InvalidBudget(format!(
                    "total {total} is smaller than the {} strata",
                    strata.len()
                )));
            }
            let quotas: Vec<f64> = strata
                .iter()
                .map(|(_, s)| total as f64 * s / total_sigma)
                .collect();
            let mut alloc: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
            let assigned: u64 = alloc.iter().sum();
            let mut order: Vec<usize> = (0..strata.len()).collect();
            order.sort_by(|&a, &b| {
                let ra = quotas[a] - quotas[a].floor();
                let rb = quotas[b] - quotas[b].floor();
                rb.total_cmp(&ra).then(a.cmp(&b))
            });
            for &i in order.iter().take(total.saturating_sub(assigned) as usize) {
                alloc[i] += 1;
            }
            Ok(strata
                .iter()
                .zip(alloc)
                .map(|((name, _), n)| Allocation { name: name.clone(), n })
                .collect())
        }
        BudgetMode::TargetHalfwidth { h, z } => {
            if !(h.is_finite() && h > 0.0 && z.is_finite() && z > 0.0) {
                return Err(DistributionError::InvalidBudget(format!("h = {h}, z = {z}")));
            }
            Ok(strata
                .iter()
                .map(|(name, s)| Allocation {
                    name: name.clone(),
                    n: ((z * s / h).powi(2)).ceil() as u64,
                })
                .collect())
        }
    }
}
