//! Delayed residual maps.
//!
//! An AR(m) model is fit by least squares, and each current value `x_t` is
//! paired with the next residual `r_{t+1}`. The pairs are grouped by `x_t`
//! and the mean residual per group estimates the lag-one nonlinearity left
//! over by the linear model: a flat map means linear dynamics suffice.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::armodel::{self, ArError, ArModel};
use crate::series::{stats, UniformSeries};

pub const DEFAULT_BINS: usize = 7;
/// Minimum number of pairs in every bin.
pub const MIN_COUNT: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DrmError {
    #[error("{pairs} residual pairs cannot fill {bins} bins of at least {min} each")]
    InsufficientData { pairs: usize, bins: usize, min: usize },
    #[error("series has zero variance")]
    DegenerateVariance,
    #[error("need at least one bin")]
    ZeroBins,
    #[error(transparent)]
    Ar(ArError),
}

impl From<ArError> for DrmError {
    fn from(e: ArError) -> Self {
        match e {
            ArError::DegenerateVariance => DrmError::DegenerateVariance,
            other => DrmError::Ar(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    /// Rank-based groups of (nearly) equal size.
    #[default]
    EqualCount,
    /// Equal-width intervals over `[min x, max x]`.
    EqualWidth,
}

impl std::str::FromStr for Binning {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equal_count" | "equal-count" => Ok(Self::EqualCount),
            "equal_width" | "equal-width" => Ok(Self::EqualWidth),
            other => Err(format!("unknown binning {other:?}")),
        }
    }
}

/// Per-bin summary of the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrmBin {
    pub center: f64,
    pub mean_r: f64,
    pub stderr: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrmResult {
    pub bins: Vec<DrmBin>,
    pub binning: Binning,
    /// Pairs that fell in equal-width bins below the minimum count and were
    /// left out. Always zero for equal-count binning.
    pub dropped_pairs: usize,
    pub model: ArModel,
}

impl DrmResult {
    pub fn bin_centers(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.center).collect()
    }

    pub fn mean_residual(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.mean_r).collect()
    }

    pub fn stderr(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.stderr).collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.bins.iter().map(|b| b.count).collect()
    }

    /// True when every bin's mean residual lies within `k` standard errors of zero.
    pub fn is_flat(&self, k: f64) -> bool {
        self.bins.iter().all(|b| b.mean_r.abs() < k * b.stderr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrmOptions {
    pub n_bins: usize,
    pub binning: Binning,
    pub min_count: usize,
}

impl Default for DrmOptions {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_BINS,
            binning: Binning::EqualCount,
            min_count: MIN_COUNT,
        }
    }
}

fn summarize(pairs: &[(f64, f64)]) -> DrmBin {
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let rs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    DrmBin {
        center: stats::mean(&xs),
        mean_r: stats::mean(&rs),
        stderr: stats::sample_std(&rs) / (rs.len() as f64).sqrt(),
        count: rs.len(),
    }
}

/// Delayed residual map with the default 7 equal-count bins.
pub fn compute_drm(series: &UniformSeries, m: usize) -> Result<DrmResult, DrmError> {
    compute_drm_with(series, m, DrmOptions::default())
}

pub fn compute_drm_with(series: &UniformSeries, m: usize, opts: DrmOptions) -> Result<DrmResult, DrmError> {
    if opts.n_bins == 0 {
        return Err(DrmError::ZeroBins);
    }
    let x = series.values();
    let pairs_available = x.len().saturating_sub(m);
    if pairs_available < opts.n_bins * opts.min_count {
        return Err(DrmError::InsufficientData {
            pairs: pairs_available,
            bins: opts.n_bins,
            min: opts.min_count,
        });
    }
    let model = armodel::fit_ar(series, m)?;
    let resid = armodel::residuals(series, &model)?;
    // Residual j belongs to x[m + j]; its predecessor is x[m + j - 1].
    let mut pairs: Vec<(f64, f64)> = resid
        .values()
        .iter()
        .enumerate()
        .map(|(j, &r)| (x[m + j - 1], r))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n = pairs.len();
    let (bins, dropped) = match opts.binning {
        Binning::EqualCount => {
            let base = n / opts.n_bins;
            let extra = n % opts.n_bins;
            let mut bins = Vec::with_capacity(opts.n_bins);
            let mut start = 0;
            for b in 0..opts.n_bins {
                let size = base + usize::from(b < extra);
                bins.push(summarize(&pairs[start..start + size]));
                start += size;
            }
            (bins, 0)
        }
        Binning::EqualWidth => {
            let lo = pairs[0].0;
            let hi = pairs[n - 1].0;
            let width = (hi - lo) / opts.n_bins as f64;
            let mut groups: Vec<Vec<(f64, f64)>> = vec![Vec::new(); opts.n_bins];
            for &p in &pairs {
                let i = if width > 0.0 {
                    (((p.0 - lo) / width) as usize).min(opts.n_bins - 1)
                } else {
                    0
                };
                groups[i].push(p);
            }
            let mut dropped = 0;
            let bins = groups
                .iter()
                .filter_map(|g| {
                    if g.len() >= opts.min_count {
                        Some(summarize(g))
                    } else {
                        dropped += g.len();
                        None
                    }
                })
                .collect();
            (bins, dropped)
        }
    };
    Ok(DrmResult {
        bins,
        binning: opts.binning,
        dropped_pairs: dropped,
        model,
    })
}
