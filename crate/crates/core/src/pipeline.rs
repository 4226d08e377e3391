//! End-to-end analysis: read a log, put it on a grid, and run every
//! diagnostic on each contiguous segment.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::armodel::{self, ArModel};
use crate::correlation;
use crate::distribution::{self, Histogram, KsResult, LogNormalFit, WindowFit};
use crate::drm::{self, Binning, DrmBin, DrmOptions};
use crate::ingest::{self, CalibrationCurve, InputData, Sample};
use crate::resample::{self, DecimateMode};
use crate::series::{QualityFlag, UniformSeries, Unit};
use crate::spectral::{self, DominantPeak, PowerLawFit, TrackOptions, WindowFn};

pub const TOOL_NAME: &str = "hfpoll";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    /// Stable machine-readable error class.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Config(_) => "E_CONFIG",
            Self::Data(_) => "E_DATA",
            Self::Io { .. } => "E_IO",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Io { .. } => 4,
        }
    }
}

/// Time filter applied before regularization, written `from..to`.
///
/// Clock times (`16:00..17:00`) select that span of every UTC day and may
/// wrap past midnight; integers select an absolute epoch range. Both are
/// half-open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TimeWindow {
    Epoch { from: i64, to: i64 },
    TimeOfDay { from_s: i64, to_s: i64 },
}

const DAY_S: i64 = 86_400;

fn parse_clock(s: &str) -> Option<i64> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return None;
    }
    let nums: Vec<i64> = parts.iter().map(|p| p.parse().ok()).collect::<Option<_>>()?;
    let (h, m, sec) = (nums[0], nums[1], nums.get(2).copied().unwrap_or(0));
    if !(0..=24).contains(&h) || !(0..60).contains(&m) || !(0..60).contains(&sec) {
        return None;
    }
    let total = h * 3600 + m * 60 + sec;
    (total <= DAY_S).then_some(total)
}

fn format_clock(s: i64) -> String {
    if s % 60 == 0 {
        format!("{:02}:{:02}", s / 3600, (s % 3600) / 60)
    } else {
        format!("{:02}:{:02}:{:02}", s / 3600, (s % 3600) / 60, s % 60)
    }
}

impl TimeWindow {
    pub fn contains(&self, t: i64) -> bool {
        match *self {
            Self::Epoch { from, to } => from <= t && t < to,
            Self::TimeOfDay { from_s, to_s } => {
                let tod = t.rem_euclid(DAY_S);
                if from_s <= to_s {
                    from_s <= tod && tod < to_s
                } else {
                    tod >= from_s || tod < to_s
                }
            }
        }
    }
}

impl FromStr for TimeWindow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("invalid window {s:?} (expected HH:MM..HH:MM or EPOCH..EPOCH)");
        let (a, b) = s.split_once("..").ok_or_else(bad)?;
        let (a, b) = (a.trim(), b.trim());
        if a.contains(':') || b.contains(':') {
            let from_s = parse_clock(a).ok_or_else(bad)?;
            let to_s = parse_clock(b).ok_or_else(bad)?;
            if from_s == to_s {
                return Err(bad());
            }
            return Ok(Self::TimeOfDay { from_s, to_s });
        }
        let from: i64 = a.parse().map_err(|_| bad())?;
        let to: i64 = b.parse().map_err(|_| bad())?;
        if to <= from {
            return Err(bad());
        }
        Ok(Self::Epoch { from, to })
    }
}

impl TryFrom<String> for TimeWindow {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<TimeWindow> for String {
    fn from(w: TimeWindow) -> Self {
        w.to_string()
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Epoch { from, to } => write!(f, "{from}..{to}"),
            Self::TimeOfDay { from_s, to_s } => write!(f, "{}..{}", format_clock(from_s), format_clock(to_s)),
        }
    }
}

/// Everything that controls an analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub calib: Option<PathBuf>,
    pub rate_hz: f64,
    pub max_gap_s: i64,
    pub decimate_factor: usize,
    pub decimate_mode: DecimateMode,
    pub ar_order: usize,
    pub drm_bins: usize,
    pub psd_window_s: f64,
    pub psd_step_s: f64,
    pub f_min: f64,
    pub min_prominence: f64,
    pub window_fn: WindowFn,
    /// Segment length (samples) for a Welch-averaged PSD; single periodogram when absent.
    pub welch_segment: Option<usize>,
    pub hist_bins: usize,
    pub averaging_windows_s: Vec<u64>,
    pub max_lag: usize,
    pub windows: Vec<TimeWindow>,
    /// Seed for the parametric-bootstrap KS p-value; no bootstrap when absent.
    pub bootstrap_seed: Option<u64>,
    pub bootstrap_resamples: usize,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            calib: None,
            rate_hz: 1.0,
            max_gap_s: ingest::DEFAULT_MAX_GAP_S,
            decimate_factor: 10,
            decimate_mode: DecimateMode::Extremes,
            ar_order: 1,
            drm_bins: drm::DEFAULT_BINS,
            psd_window_s: 3600.0,
            psd_step_s: 1800.0,
            f_min: spectral::DEFAULT_F_MIN_HZ,
            min_prominence: spectral::DEFAULT_MIN_PROMINENCE,
            window_fn: WindowFn::Hann,
            welch_segment: None,
            hist_bins: 50,
            averaging_windows_s: vec![10, 60],
            max_lag: 40,
            windows: Vec::new(),
            bootstrap_seed: None,
            bootstrap_resamples: 200,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let positive = [
            ("rate_hz", self.rate_hz),
            ("psd_window_s", self.psd_window_s),
            ("psd_step_s", self.psd_step_s),
            ("f_min", self.f_min),
            ("min_prominence", self.min_prominence),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PipelineError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("decimate_factor", self.decimate_factor),
            ("ar_order", self.ar_order),
            ("drm_bins", self.drm_bins),
            ("hist_bins", self.hist_bins),
            ("max_lag", self.max_lag),
            ("bootstrap_resamples", self.bootstrap_resamples),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(PipelineError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.max_gap_s <= 0 {
            return Err(PipelineError::Config(format!("max_gap_s must be positive, got {}", self.max_gap_s)));
        }
        if self.averaging_windows_s.contains(&0) {
            return Err(PipelineError::Config("averaging windows must be positive".into()));
        }
        Ok(())
    }
}

/// Either a computed result or the reason it is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Fragment<T> {
    Skipped { skipped: String },
    Data(T),
}

impl<T> Fragment<T> {
    pub fn skipped(reason: impl Into<String>) -> Self {
        Self::Skipped { skipped: reason.into() }
    }

    fn from_result<E: fmt::Display>(step: &str, r: Result<T, E>) -> Self {
        match r {
            Ok(v) => Self::Data(v),
            Err(e) => Self::skipped(format!("{step}: {e}")),
        }
    }

    pub fn data(&self) -> Option<&T> {
        match self {
            Self::Data(v) => Some(v),
            Self::Skipped { .. } => None,
        }
    }

    pub fn skip_reason(&self) -> Option<&str> {
        match self {
            Self::Skipped { skipped } => Some(skipped),
            Self::Data(_) => None,
        }
    }
}

/// Plain series payload, enough to redraw a time-series plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesData {
    pub start_t: f64,
    pub rate_hz: f64,
    pub unit: Unit,
    pub values: Vec<f64>,
}

impl From<&UniformSeries> for SeriesData {
    fn from(s: &UniformSeries) -> Self {
        Self {
            start_t: s.start_t(),
            rate_hz: s.rate_hz(),
            unit: s.unit(),
            values: s.values().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionFragment {
    pub fit: LogNormalFit,
    pub ks: KsResult,
    /// Bootstrap p-value for `ks`, present when a seed was configured.
    pub ks_bootstrap_p: Option<f64>,
    pub histogram: Histogram,
    /// Non-positive samples left out of the fit.
    pub excluded_nonpositive: usize,
    pub averaging: Vec<Fragment<WindowFit>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationFragment {
    pub acf: Vec<f64>,
    pub pacf: Vec<f64>,
    pub sig_bound: f64,
    pub first_insig_lag: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrmFragment {
    pub bins: Vec<DrmBin>,
    pub binning: Binning,
    pub dropped_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFragment {
    pub window_fn: WindowFn,
    pub welch_segment: Option<usize>,
    pub psd: Psd,
    pub one_over_f: Fragment<PowerLawFit>,
    pub dominant: Option<DominantPeak>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrackPoint {
    Peak { t: f64, freq: f64, period: f64, prominence: f64 },
    Empty { t: f64, peak: () },
}

impl TrackPoint {
    pub fn t(&self) -> f64 {
        match *self {
            Self::Peak { t, .. } | Self::Empty { t, .. } => t,
        }
    }

    pub fn freq(&self) -> Option<f64> {
        match *self {
            Self::Peak { freq, .. } => Some(freq),
            Self::Empty { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub index: usize,
    /// Time filter the segment came from, if any.
    pub window: Option<String>,
    pub start_t: f64,
    pub n_samples: usize,
    pub n_interpolated: usize,
    pub n_negative: usize,
    pub series: SeriesData,
    pub decimated: Fragment<SeriesData>,
    pub distribution: Fragment<DistributionFragment>,
    pub correlation: Fragment<CorrelationFragment>,
    pub ar: Fragment<ArModel>,
    pub drm: Fragment<DrmFragment>,
    pub spectral: Fragment<SpectralFragment>,
    pub track: Fragment<Vec<TrackPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub input_sha256: String,
    pub n_records: usize,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: Meta,
    pub segments: Vec<SegmentReport>,
}

impl Report {
    /// Canonical JSON text: fields in declaration order, shortest
    /// round-trip floats, trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Data(format!("report: {e}")))
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

/// Reads, calibrates and time-filters the input log.
pub fn load_samples(config: &PipelineConfig) -> Result<(Vec<Sample>, Unit, String), PipelineError> {
    let bytes = std::fs::read(&config.input).map_err(|e| PipelineError::io(&config.input, e))?;
    let digest = hex_digest(&bytes);
    let text = String::from_utf8(bytes).map_err(|_| PipelineError::Data("input is not UTF-8".into()))?;
    let data = ingest::parse_input(&text).map_err(|e| PipelineError::Data(format!("ingest: {e}")))?;
    let samples = match (data, &config.calib) {
        (InputData::Raw(records), Some(path)) => {
            let curve = CalibrationCurve::from_json(&read_text(path)?)
                .map_err(|e| PipelineError::Config(format!("calibration: {e}")))?;
            ingest::apply_calibration(&records, &curve, None)
                .map_err(|e| PipelineError::Data(format!("calibration: {e}")))?
        }
        (InputData::Raw(_), None) => {
            return Err(PipelineError::Config("raw ADC input needs a calibration file".into()));
        }
        (InputData::Ppm(_), Some(_)) => {
            return Err(PipelineError::Config("input is already in ppm; drop the calibration file".into()));
        }
        (InputData::Ppm(samples), None) => samples,
    };
    Ok((samples, Unit::Ppm, digest))
}

/// Regularized segments, each tagged with the time filter it came from.
pub fn segments(config: &PipelineConfig, samples: &[Sample], unit: Unit) -> Result<Vec<(Option<String>, UniformSeries)>, PipelineError> {
    let groups: Vec<(Option<String>, Vec<Sample>)> = if config.windows.is_empty() {
        vec![(None, samples.to_vec())]
    } else {
        config
            .windows
            .iter()
            .map(|w| {
                let kept = samples.iter().filter(|s| w.contains(s.t)).copied().collect();
                (Some(w.to_string()), kept)
            })
            .collect()
    };
    let mut out = Vec::new();
    for (label, group) in groups {
        if group.is_empty() {
            continue;
        }
        let segs = ingest::regularize(&group, config.rate_hz, config.max_gap_s, unit)
            .map_err(|e| PipelineError::Data(format!("regularize: {e}")))?;
        out.extend(segs.into_iter().map(|s| (label.clone(), s)));
    }
    if out.is_empty() {
        return Err(PipelineError::Data("no samples left after time filtering".into()));
    }
    Ok(out)
}

fn distribution_fragment(series: &UniformSeries, config: &PipelineConfig) -> Fragment<DistributionFragment> {
    let positive: Vec<f64> = series.values().iter().copied().filter(|&v| v > 0.0).collect();
    let excluded = series.len() - positive.len();
    if positive.is_empty() {
        return Fragment::skipped(format!("non-positive values: {excluded}"));
    }
    let result = (|| -> Result<DistributionFragment, distribution::DistributionError> {
        let fit = distribution::fit_lognormal_values(&positive)?;
        let ks = distribution::ks_lognormal_values(&positive, &fit)?;
        let ks_bootstrap_p = match config.bootstrap_seed {
            Some(seed) => {
                let kept = UniformSeries::new(series.start_t(), series.rate_hz(), positive.clone(), series.unit())
                    .map_err(resample::ResampleError::from)?;
                Some(distribution::ks_bootstrap_pvalue(&kept, &fit, config.bootstrap_resamples, seed)?)
            }
            None => None,
        };
        let histogram = distribution::histogram_of(&positive, config.hist_bins, None)?;
        let averaging = config
            .averaging_windows_s
            .iter()
            .map(|&w| {
                let r = distribution::averaging_invariance(series, &[w]).map(|mut v| v.remove(0));
                Fragment::from_result(&format!("averaging {w} s"), r)
            })
            .collect();
        Ok(DistributionFragment {
            fit,
            ks,
            ks_bootstrap_p,
            histogram,
            excluded_nonpositive: excluded,
            averaging,
        })
    })();
    Fragment::from_result("distribution", result)
}

fn correlation_fragment(series: &UniformSeries, config: &PipelineConfig) -> Fragment<CorrelationFragment> {
    let max_lag = config.max_lag.min(series.len().saturating_sub(1) / 2);
    let result = (|| {
        let acf = correlation::acf(series, max_lag)?;
        let pacf = correlation::pacf(series, max_lag)?;
        Ok::<_, correlation::CorrelationError>(CorrelationFragment {
            sig_bound: acf.significance_bound(),
            first_insig_lag: correlation::first_insignificant_lag(&acf),
            acf: acf.values,
            pacf: pacf.values,
        })
    })();
    Fragment::from_result("correlation", result)
}

fn spectral_fragment(series: &UniformSeries, config: &PipelineConfig) -> Fragment<SpectralFragment> {
    let spec = match config.welch_segment {
        Some(len) => spectral::welch(series, len, config.window_fn),
        None => spectral::periodogram(series, config.window_fn),
    };
    let result = spec.map(|spec| {
        let band = (spec.freqs[0], *spec.freqs.last().unwrap());
        SpectralFragment {
            window_fn: spec.window_fn,
            welch_segment: config.welch_segment,
            one_over_f: Fragment::from_result("one_over_f", spectral::fit_one_over_f(&spec, band)),
            dominant: spectral::dominant_frequency(&spec, config.f_min, config.min_prominence),
            psd: Psd {
                freqs: spec.freqs,
                power: spec.power,
            },
        }
    });
    Fragment::from_result("spectral", result)
}

fn track_fragment(series: &UniformSeries, config: &PipelineConfig) -> Fragment<Vec<TrackPoint>> {
    let opts = TrackOptions {
        window_s: config.psd_window_s,
        step_s: config.psd_step_s,
        f_min: config.f_min,
        min_prominence: config.min_prominence,
        window_fn: config.window_fn,
    };
    let result = spectral::dominant_track(series, &opts).map(|recs| {
        recs.into_iter()
            .map(|r| match r.peak {
                Some(p) => TrackPoint::Peak {
                    t: r.t,
                    freq: p.freq,
                    period: p.period,
                    prominence: p.prominence,
                },
                None => TrackPoint::Empty { t: r.t, peak: () },
            })
            .collect()
    });
    Fragment::from_result("track", result)
}

fn analyze_segment(index: usize, window: Option<String>, series: &UniformSeries, config: &PipelineConfig) -> SegmentReport {
    let count = |f: QualityFlag| series.flags().iter().filter(|&&x| x == f).count();
    let decimated = resample::decimate(series, config.decimate_factor, config.decimate_mode);

    let (correlation, ar, drm, spectral, track) = match &decimated {
        Ok(d) => {
            let ar = Fragment::from_result("ar", armodel::fit_ar(d, config.ar_order));
            let opts = DrmOptions {
                n_bins: config.drm_bins,
                ..DrmOptions::default()
            };
            let drm = Fragment::from_result(
                "drm",
                drm::compute_drm_with(d, config.ar_order, opts).map(|r| DrmFragment {
                    bins: r.bins,
                    binning: r.binning,
                    dropped_pairs: r.dropped_pairs,
                }),
            );
            (
                correlation_fragment(d, config),
                ar,
                drm,
                spectral_fragment(d, config),
                track_fragment(d, config),
            )
        }
        Err(e) => {
            let reason = format!("decimate: {e}");
            (
                Fragment::skipped(reason.clone()),
                Fragment::skipped(reason.clone()),
                Fragment::skipped(reason.clone()),
                Fragment::skipped(reason.clone()),
                Fragment::skipped(reason),
            )
        }
    };

    SegmentReport {
        index,
        window,
        start_t: series.start_t(),
        n_samples: series.len(),
        n_interpolated: count(QualityFlag::Interpolated),
        n_negative: count(QualityFlag::NegativeClampedCandidate),
        series: series.into(),
        decimated: Fragment::from_result("decimate", decimated.as_ref().map(SeriesData::from)),
        distribution: distribution_fragment(series, config),
        correlation,
        ar,
        drm,
        spectral,
        track,
    }
}

/// Runs the full analysis described by `config`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Report, PipelineError> {
    config.validate()?;
    let (samples, unit, digest) = load_samples(config)?;
    let segs = segments(config, &samples, unit)?;
    let segments = segs
        .par_iter()
        .enumerate()
        .map(|(i, (label, s))| analyze_segment(i, label.clone(), s, config))
        .collect();
    Ok(Report {
        meta: Meta {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            input_sha256: digest,
            n_records: samples.len(),
            config: config.clone(),
        },
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{SynthKind, SynthSpec};

    fn write_fixture(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn lognormal_csv(n: usize, seed: u64) -> String {
        let spec = SynthSpec::new(SynthKind::LognormalAr1 { phi: 0.77, mu: 1.0, sigma_log: 0.5 }, n, 1.0, seed);
        ingest::series_to_csv(&spec.generate().unwrap(), "ppm").unwrap()
    }

    #[test]
    fn digest_known_answer() {
        assert_eq!(
            hex_digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn window_parsing() {
        let w: TimeWindow = "16:00..17:00".parse().unwrap();
        assert_eq!(w, TimeWindow::TimeOfDay { from_s: 57_600, to_s: 61_200 });
        assert!(w.contains(57_600 + DAY_S * 3));
        assert!(!w.contains(61_200));
        let night: TimeWindow = "23:30..00:30".parse().unwrap();
        assert!(night.contains(0));
        assert!(night.contains(23 * 3600 + 1800));
        assert!(!night.contains(12 * 3600));
        let e: TimeWindow = "100..200".parse().unwrap();
        assert!(e.contains(100) && e.contains(199) && !e.contains(200));
        for bad in ["", "1..1", "5..2", "25:00..01:00", "10:00", "a..b"] {
            assert!(bad.parse::<TimeWindow>().is_err(), "{bad}");
        }
        assert_eq!(night.to_string(), "23:30..00:30");
        assert_eq!("03:00:30..04:00".parse::<TimeWindow>().unwrap().to_string(), "03:00:30..04:00");
    }

    #[test]
    fn report_has_every_fragment() {
        let dir = tempfile::tempdir().unwrap();
        let input = write_fixture(dir.path(), "in.csv", &lognormal_csv(3600, 1));
        let report = run_pipeline(&PipelineConfig::new(&input)).unwrap();
        assert_eq!(report.segments.len(), 1);
        let seg = &report.segments[0];
        assert!(seg.distribution.data().is_some());
        assert!(seg.correlation.data().is_some());
        assert!(seg.ar.data().is_some());
        assert!(seg.drm.data().is_some());
        assert!(seg.spectral.data().is_some());
        assert_eq!(seg.track.data().unwrap().len(), 1);
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        for key in ["distribution", "correlation", "ar", "drm", "spectral", "track"] {
            assert!(json["segments"][0].get(key).is_some(), "{key}");
        }
        assert_eq!(json["segments"][0]["distribution"]["ks"]["caveat"], "params-estimated");
        assert_eq!(json["segments"][0]["drm"]["binning"], "equal_count");
    }

    #[test]
    fn bootstrap_p_follows_the_seed() {
        let dir = tempfile::tempdir().unwrap();
        let input = write_fixture(dir.path(), "in.csv", &lognormal_csv(1200, 4));
        let mut cfg = PipelineConfig::new(&input);
        let p = |cfg: &PipelineConfig| run_pipeline(cfg).unwrap().segments[0].distribution.data().unwrap().ks_bootstrap_p;
        assert_eq!(p(&cfg), None);
        cfg.bootstrap_seed = Some(11);
        cfg.bootstrap_resamples = 50;
        let a = p(&cfg).unwrap();
        assert!((0.0..=1.0).contains(&a));
        assert_eq!(p(&cfg), Some(a));
    }

    #[test]
    fn welch_psd_is_shorter() {
        let dir = tempfile::tempdir().unwrap();
        let input = write_fixture(dir.path(), "in.csv", &lognormal_csv(3600, 6));
        let mut cfg = PipelineConfig::new(&input);
        cfg.welch_segment = Some(64);
        let report = run_pipeline(&cfg).unwrap();
        let sp = report.segments[0].spectral.data().unwrap();
        assert_eq!(sp.psd.freqs.len(), 32);
        assert_eq!(sp.welch_segment, Some(64));
    }

    #[test]
    fn report_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let input = write_fixture(dir.path(), "in.csv", &lognormal_csv(3600, 2));
        let report = run_pipeline(&PipelineConfig::new(&input)).unwrap();
        let text = report.to_json();
        let back = Report::from_json(&text).unwrap();
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn all_negative_input_skips_distribution() {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("epoch_s,ppm\n");
        for t in 0..600 {
            csv.push_str(&format!("{t},{}\n", -1.0 - (t % 7) as f64));
        }
        let input = write_fixture(dir.path(), "neg.csv", &csv);
        let report = run_pipeline(&PipelineConfig::new(&input)).unwrap();
        let seg = &report.segments[0];
        assert_eq!(seg.distribution.skip_reason(), Some("non-positive values: 600"));
        assert_eq!(seg.n_negative, 600);
        assert!(seg.ar.data().is_some());
    }

    #[test]
    fn short_segment_marks_fragments_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let input = write_fixture(dir.path(), "short.csv", &lognormal_csv(120, 3));
        let report = run_pipeline(&PipelineConfig::new(&input)).unwrap();
        let seg = &report.segments[0];
        assert!(seg.drm.skip_reason().unwrap().starts_with("drm: "));
        assert!(seg.track.skip_reason().unwrap().starts_with("track: "));
        assert!(seg.ar.data().is_some());
    }

    #[test]
    fn gaps_and_windows_split_segments() {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("epoch_s,ppm\n");
        for t in (0..1000).chain(2000..3000) {
            csv.push_str(&format!("{t},{}\n", 1.0 + (t % 5) as f64));
        }
        let input = write_fixture(dir.path(), "gap.csv", &csv);
        let report = run_pipeline(&PipelineConfig::new(&input)).unwrap();
        assert_eq!(report.segments.len(), 2);
        assert_eq!(report.segments[1].start_t, 2000.0);

        let mut config = PipelineConfig::new(&input);
        config.windows = vec!["0..500".parse().unwrap(), "2500..2600".parse().unwrap()];
        let report = run_pipeline(&config).unwrap();
        let labels: Vec<_> = report.segments.iter().map(|s| s.window.clone().unwrap()).collect();
        assert_eq!(labels, ["0..500", "2500..2600"]);
        assert_eq!(report.segments[1].n_samples, 100);

        config.windows = vec!["5000..6000".parse().unwrap()];
        assert!(matches!(run_pipeline(&config), Err(PipelineError::Data(_))));
    }

    #[test]
    fn error_classes() {
        let dir = tempfile::tempdir().unwrap();
        let missing = PipelineConfig::new(dir.path().join("nope.csv"));
        let e = run_pipeline(&missing).unwrap_err();
        assert_eq!((e.code(), e.exit_code()), ("E_IO", 4));

        let bad = write_fixture(dir.path(), "bad.csv", "time,value\n1,2\n");
        let e = run_pipeline(&PipelineConfig::new(&bad)).unwrap_err();
        assert_eq!((e.code(), e.exit_code()), ("E_DATA", 3));

        let mut cfg = PipelineConfig::new(&bad);
        cfg.rate_hz = 0.0;
        let e = run_pipeline(&cfg).unwrap_err();
        assert_eq!((e.code(), e.exit_code()), ("E_CONFIG", 2));

        let raw = write_fixture(dir.path(), "raw.csv", "epoch_s,adc\n0,100\n1,200\n");
        let e = run_pipeline(&PipelineConfig::new(&raw)).unwrap_err();
        assert_eq!(e.code(), "E_CONFIG");
    }

    #[test]
    fn raw_input_is_calibrated() {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("epoch_s,adc\n");
        for t in 0..400 {
            csv.push_str(&format!("{t},{}\n", 1000 + (t * 37) % 200));
        }
        let input = write_fixture(dir.path(), "raw.csv", &csv);
        let calib = write_fixture(
            dir.path(),
            "c.json",
            r#"{"device_id": "d1", "coeffs": [0.0, 0.01], "temp_coeff": null}"#,
        );
        let mut cfg = PipelineConfig::new(&input);
        cfg.calib = Some(calib);
        let report = run_pipeline(&cfg).unwrap();
        assert_eq!(report.segments[0].series.values[0], 10.0);
        assert_eq!(report.segments[0].series.unit, Unit::Ppm);
        assert_eq!(report.meta.input_sha256.len(), 64);
    }
}
