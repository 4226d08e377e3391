//! Periodograms, 1/f slope fits and sliding-window dominant-frequency tracks.
//!
//! Power is normalized so that, for a rectangular window, the positive
//! frequency bins sum to the population variance of the mean-removed input.
//! Hann-windowed spectra are divided by the window's mean square, which keeps
//! the same scale on average.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{stats, UniformSeries};

/// Shortest series accepted by [`periodogram`].
pub const MIN_PERIODOGRAM_LEN: usize = 16;
/// Shortest tracking window, in samples.
pub const MIN_TRACK_WINDOW: usize = 64;
/// Minimum bins in a 1/f fitting band.
pub const MIN_BAND_BINS: usize = 8;

/// Lowest frequency searched for a dominant peak by default (10 min period).
pub const DEFAULT_F_MIN_HZ: f64 = 1.0 / 600.0;
/// Default peak-to-median power ratio required to report a dominant peak.
pub const DEFAULT_MIN_PROMINENCE: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("series of length {len} is below the minimum of {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("band [{f_lo}, {f_hi}] Hz holds {bins} bins, need at least {MIN_BAND_BINS}")]
    BandTooNarrow { f_lo: f64, f_hi: f64, bins: usize },
    #[error("zero power at {0} Hz inside the fitting band")]
    ZeroPowerInBand(f64),
    #[error("window of {window} samples exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("window of {window} samples is below the minimum of {MIN_TRACK_WINDOW}")]
    WindowTooShort { window: usize },
    #[error("step must be at least one sample")]
    ZeroStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowFn {
    Rect,
    #[default]
    Hann,
}

impl std::str::FromStr for WindowFn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rect" => Ok(Self::Rect),
            "hann" => Ok(Self::Hann),
            other => Err(format!("unknown window {other:?} (expected rect|hann)")),
        }
    }
}

/// One-sided power spectrum, DC excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub window_fn: WindowFn,
}

impl Spectrum {
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Frequency spacing between bins.
    pub fn resolution(&self) -> f64 {
        self.freqs[0]
    }
}

fn window_weights(n: usize, window_fn: WindowFn) -> Vec<f64> {
    match window_fn {
        WindowFn::Rect => vec![1.0; n],
        // Periodic Hann.
        WindowFn::Hann => (0..n)
            .map(|j| 0.5 * (1.0 - (2.0 * PI * j as f64 / n as f64).cos()))
            .collect(),
    }
}

/// Periodogram of raw samples taken at `rate_hz`.
pub fn periodogram_values(x: &[f64], rate_hz: f64, window_fn: WindowFn) -> Result<Spectrum, SpectralError> {
    let n = x.len();
    if n < MIN_PERIODOGRAM_LEN {
        return Err(SpectralError::SeriesTooShort { len: n, min: MIN_PERIODOGRAM_LEN });
    }
    let mean = stats::mean(x);
    let w = window_weights(n, window_fn);
    let w_ms = w.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .zip(&w)
        .map(|(v, wj)| Complex::new((v - mean) * wj, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let half = n / 2;
    let norm = 1.0 / (n as f64 * n as f64 * w_ms);
    let mut freqs = Vec::with_capacity(half);
    let mut power = Vec::with_capacity(half);
    for (k, c) in buf.iter().enumerate().take(half + 1).skip(1) {
        let two_sided = if 2 * k == n { 1.0 } else { 2.0 };
        freqs.push(k as f64 * rate_hz / n as f64);
        power.push(two_sided * c.norm_sqr() * norm);
    }
    Ok(Spectrum { freqs, power, window_fn })
}

/// Mean-removed, optionally Hann-tapered periodogram over bins `1..=n/2`.
pub fn periodogram(series: &UniformSeries, window_fn: WindowFn) -> Result<Spectrum, SpectralError> {
    periodogram_values(series.values(), series.rate_hz(), window_fn)
}

/// Averaged periodogram over half-overlapping segments of `segment_len`.
pub fn welch(series: &UniformSeries, segment_len: usize, window_fn: WindowFn) -> Result<Spectrum, SpectralError> {
    let x = series.values();
    if segment_len < MIN_PERIODOGRAM_LEN {
        return Err(SpectralError::SeriesTooShort { len: segment_len, min: MIN_PERIODOGRAM_LEN });
    }
    if segment_len > x.len() {
        return Err(SpectralError::WindowTooLarge { window: segment_len, len: x.len() });
    }
    let step = (segment_len / 2).max(1);
    let starts: Vec<usize> = (0..=x.len() - segment_len).step_by(step).collect();
    let spectra = starts
        .iter()
        .map(|&s| periodogram_values(&x[s..s + segment_len], series.rate_hz(), window_fn))
        .collect::<Result<Vec<_>, _>>()?;
    let mut power = vec![0.0; spectra[0].power.len()];
    for sp in &spectra {
        for (acc, p) in power.iter_mut().zip(&sp.power) {
            *acc += p;
        }
    }
    for p in &mut power {
        *p /= spectra.len() as f64;
    }
    Ok(Spectrum {
        freqs: spectra[0].freqs.clone(),
        power,
        window_fn,
    })
}

/// Log-log line fitted to a band of the spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub band: [f64; 2],
    pub n_bins: usize,
}

/// OLS of `log10(power)` on `log10(freq)` over bins with `f_lo <= f <= f_hi`.
pub fn fit_one_over_f(spec: &Spectrum, band: (f64, f64)) -> Result<PowerLawFit, SpectralError> {
    let (f_lo, f_hi) = band;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&f, &p) in spec.freqs.iter().zip(&spec.power) {
        if f < f_lo || f > f_hi {
            continue;
        }
        if !(p > 0.0) {
            return Err(SpectralError::ZeroPowerInBand(f));
        }
        xs.push(f.log10());
        ys.push(p.log10());
    }
    if xs.len() < MIN_BAND_BINS {
        return Err(SpectralError::BandTooNarrow { f_lo, f_hi, bins: xs.len() });
    }
    let mx = stats::mean(&xs);
    let my = stats::mean(&ys);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(PowerLawFit {
        slope,
        intercept: my - slope * mx,
        band: [f_lo, f_hi],
        n_bins: xs.len(),
    })
}

/// Strongest spectral line above a frequency floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominantPeak {
    pub freq: f64,
    pub period: f64,
    /// Peak power over the median power of the searched band.
    pub prominence: f64,
}

/// Highest-power bin with `freq >= f_min`, reported only if its power is at
/// least `min_prominence` times the band median. Ties go to the lower
/// frequency.
pub fn dominant_frequency(spec: &Spectrum, f_min: f64, min_prominence: f64) -> Option<DominantPeak> {
    let start = spec.freqs.partition_point(|&f| f < f_min);
    let band = &spec.power[start..];
    if band.is_empty() {
        return None;
    }
    let mut best = 0;
    for (i, &p) in band.iter().enumerate() {
        if p > band[best] {
            best = i;
        }
    }
    let peak = band[best];
    if !(peak > 0.0) {
        return None;
    }
    let median = stats::median(band);
    let prominence = if median > 0.0 { peak / median } else { f64::INFINITY };
    if prominence < min_prominence || prominence < 1.0 {
        return None;
    }
    let freq = spec.freqs[start + best];
    Some(DominantPeak {
        freq,
        period: 1.0 / freq,
        prominence,
    })
}

/// Parameters of a sliding-window dominant-frequency track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackOptions {
    pub window_s: f64,
    pub step_s: f64,
    pub f_min: f64,
    pub min_prominence: f64,
    pub window_fn: WindowFn,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            window_s: 3600.0,
            step_s: 1800.0,
            f_min: DEFAULT_F_MIN_HZ,
            min_prominence: DEFAULT_MIN_PROMINENCE,
            window_fn: WindowFn::Hann,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    /// Start time of the window, epoch seconds.
    pub t: f64,
    pub peak: Option<DominantPeak>,
}

/// Periodogram and dominant peak for each window, in time order.
pub fn dominant_track(series: &UniformSeries, opts: &TrackOptions) -> Result<Vec<TrackRecord>, SpectralError> {
    let rate = series.rate_hz();
    let window = (opts.window_s * rate).round() as usize;
    let step = (opts.step_s * rate).round() as usize;
    if window < MIN_TRACK_WINDOW {
        return Err(SpectralError::WindowTooShort { window });
    }
    if step == 0 {
        return Err(SpectralError::ZeroStep);
    }
    let len = series.len();
    if window > len {
        return Err(SpectralError::WindowTooLarge { window, len });
    }
    let starts: Vec<usize> = (0..=len - window).step_by(step).collect();
    let x = series.values();
    starts
        .par_iter()
        .map(|&s| {
            let spec = periodogram_values(&x[s..s + window], rate, opts.window_fn)?;
            Ok(TrackRecord {
                t: series.time_of(s),
                peak: dominant_frequency(&spec, opts.f_min, opts.min_prominence),
            })
        })
        .collect()
}
