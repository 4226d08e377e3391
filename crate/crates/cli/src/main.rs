use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hfpoll::ingest;
use hfpoll::pipeline::{self, PipelineConfig, PipelineError, Report, TimeWindow};
use hfpoll::resample::DecimateMode;
use hfpoll::spectral::WindowFn;
use hfpoll::synth::{SynthKind, SynthSpec};
use hfpoll::{emit_report, Format};

#[derive(Parser, Debug)]
#[command(name = "hfpoll", version, about = "Statistics for high-frequency pollution sensor logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate and regularize a log, writing one ppm CSV per segment
    Ingest(IngestArgs),
    /// Run every analysis and write the report
    Analyze(AnalyzeArgs),
    /// Generate a seeded synthetic series as `epoch_s,ppm` CSV
    Synth(SynthArgs),
    /// Re-render a saved report.json
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// CSV log with header `epoch_s,adc` or `epoch_s,ppm`
    #[arg(long)]
    input: PathBuf,

    /// Calibration curve JSON, required for ADC input
    #[arg(long)]
    calib: Option<PathBuf>,

    /// Sampling rate of the grid, Hz
    #[arg(long, default_value_t = 1.0)]
    rate: f64,

    /// Longest gap (seconds) bridged by interpolation
    #[arg(long, default_value_t = ingest::DEFAULT_MAX_GAP_S)]
    max_gap: i64,

    /// Time filter `HH:MM..HH:MM` (UTC, daily) or `EPOCH..EPOCH`; repeatable
    #[arg(long = "window")]
    windows: Vec<String>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Decimation factor applied before the dynamics analyses
    #[arg(long, default_value_t = 10)]
    decimate: usize,

    /// extremes | mean
    #[arg(long, default_value = "extremes")]
    decimate_mode: String,

    #[arg(long, default_value_t = 1)]
    ar_order: usize,

    #[arg(long, default_value_t = hfpoll::drm::DEFAULT_BINS)]
    drm_bins: usize,

    /// Dominant-frequency window length, seconds
    #[arg(long, default_value_t = 3600.0)]
    psd_window: f64,

    /// Dominant-frequency window step, seconds
    #[arg(long, default_value_t = 1800.0)]
    psd_step: f64,

    /// Lowest frequency searched for a dominant peak, Hz
    #[arg(long, default_value_t = 0.001667)]
    f_min: f64,

    /// Peak-to-median power ratio needed to report a peak
    #[arg(long, default_value_t = hfpoll::spectral::DEFAULT_MIN_PROMINENCE)]
    min_prominence: f64,

    /// rect | hann
    #[arg(long, default_value = "hann")]
    taper: String,

    /// Average periodograms over half-overlapping segments of this many samples
    #[arg(long)]
    welch: Option<usize>,

    #[arg(long, default_value_t = 50)]
    hist_bins: usize,

    /// Block-averaging windows for the lognormality study, seconds
    #[arg(long, value_delimiter = ',', default_value = "10,60")]
    averaging: Vec<u64>,

    #[arg(long, default_value_t = 40)]
    max_lag: usize,

    /// Seed for a parametric-bootstrap KS p-value; skipped when omitted
    #[arg(long)]
    seed: Option<u64>,

    /// Bootstrap resamples used with --seed
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,

    /// Comma-separated subset of json, csv, svg
    #[arg(long, value_delimiter = ',', default_value = "json")]
    format: Vec<String>,

    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Ar1,
    LognormalAr1,
    SineMix,
    OneOverF,
    ThresholdAr,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// JSON generator spec; overrides the individual flags
    #[arg(long)]
    spec: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "lognormal-ar1")]
    kind: Kind,

    /// Background process for `sine-mix`
    #[arg(long, value_enum, default_value = "lognormal-ar1")]
    background: Kind,

    #[arg(long, default_value_t = 3600)]
    n: usize,

    #[arg(long, default_value_t = 1.0)]
    rate: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Epoch time of the first sample
    #[arg(long, default_value_t = 0)]
    start: i64,

    #[arg(long, default_value_t = 0.77)]
    phi: f64,

    #[arg(long, default_value_t = 1.0)]
    sigma: f64,

    #[arg(long, default_value_t = 1.0)]
    mu: f64,

    #[arg(long, default_value_t = 0.5)]
    sigma_log: f64,

    /// Sinusoid period for `sine-mix`, seconds
    #[arg(long, default_value_t = 90.0)]
    period: f64,

    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,

    #[arg(long, default_value_t = 0.9)]
    phi_low: f64,

    #[arg(long, default_value_t = 0.3)]
    phi_high: f64,

    /// Threshold quantile for `threshold-ar`
    #[arg(long, default_value_t = 0.7)]
    quantile: f64,

    /// Output CSV path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// A report.json written by `analyze`
    #[arg(long)]
    input: PathBuf,

    #[arg(long, value_delimiter = ',', default_value = "svg")]
    format: Vec<String>,

    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

fn parse_formats(names: &[String]) -> Result<Vec<Format>, PipelineError> {
    let mut out: Vec<Format> = Vec::new();
    for n in names {
        let f: Format = n.trim().parse()?;
        if !out.contains(&f) {
            out.push(f);
        }
    }
    Ok(out)
}

fn base_config(a: &InputArgs) -> Result<PipelineConfig, PipelineError> {
    let mut config = PipelineConfig::new(&a.input);
    config.calib = a.calib.clone();
    config.rate_hz = a.rate;
    config.max_gap_s = a.max_gap;
    config.windows = a
        .windows
        .iter()
        .map(|w| w.parse::<TimeWindow>())
        .collect::<Result<_, _>>()
        .map_err(config_err)?;
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn run_ingest(a: &IngestArgs) -> Result<(), PipelineError> {
    let config = base_config(&a.input)?;
    config.validate()?;
    let (samples, unit, _) = pipeline::load_samples(&config)?;
    let segments = pipeline::segments(&config, &samples, unit)?;
    create_dir(&a.out)?;
    for (i, (_, series)) in segments.iter().enumerate() {
        let csv = ingest::series_to_csv(series, "ppm").map_err(|e| PipelineError::Data(e.to_string()))?;
        let path = a.out.join(format!("seg{i}.csv"));
        write(&path, &csv)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run_analyze(a: &AnalyzeArgs) -> Result<(), PipelineError> {
    let formats = parse_formats(&a.format)?;
    let mut config = base_config(&a.input)?;
    config.decimate_factor = a.decimate;
    config.decimate_mode = a.decimate_mode.parse::<DecimateMode>().map_err(config_err)?;
    config.ar_order = a.ar_order;
    config.drm_bins = a.drm_bins;
    config.psd_window_s = a.psd_window;
    config.psd_step_s = a.psd_step;
    config.f_min = a.f_min;
    config.min_prominence = a.min_prominence;
    config.window_fn = a.taper.parse::<WindowFn>().map_err(config_err)?;
    config.welch_segment = a.welch;
    config.hist_bins = a.hist_bins;
    config.averaging_windows_s = a.averaging.clone();
    config.max_lag = a.max_lag;
    config.bootstrap_seed = a.seed;
    config.bootstrap_resamples = a.bootstrap;
    let report = pipeline::run_pipeline(&config)?;
    emit_all(&report, &formats, &a.out)
}

fn emit_all(report: &Report, formats: &[Format], out: &Path) -> Result<(), PipelineError> {
    for &f in formats {
        for path in emit_report(report, f, out)? {
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn kind_of(k: Kind, a: &SynthArgs) -> Result<SynthKind, PipelineError> {
    Ok(match k {
        Kind::Ar1 => SynthKind::Ar1 { phi: a.phi, sigma: a.sigma },
        Kind::LognormalAr1 => SynthKind::LognormalAr1 {
            phi: a.phi,
            mu: a.mu,
            sigma_log: a.sigma_log,
        },
        Kind::OneOverF => SynthKind::OneOverF,
        Kind::ThresholdAr => SynthKind::ThresholdAr {
            phi_low: a.phi_low,
            phi_high: a.phi_high,
            quantile_q: a.quantile,
            sigma: a.sigma,
        },
        Kind::SineMix => {
            if matches!(a.background, Kind::SineMix) {
                return Err(config_err("sine-mix background cannot itself be sine-mix"));
            }
            SynthKind::SineMix {
                period_s: a.period,
                amplitude: a.amplitude,
                background: Box::new(kind_of(a.background, a)?),
            }
        }
    })
}

fn run_synth(a: &SynthArgs) -> Result<(), PipelineError> {
    let spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
            serde_json::from_str::<SynthSpec>(&text).map_err(|e| config_err(format!("spec: {e}")))?
        }
        None => SynthSpec {
            start_t: a.start,
            ..SynthSpec::new(kind_of(a.kind, a)?, a.n, a.rate, a.seed)
        },
    };
    let series = spec.generate().map_err(|e| config_err(format!("synth: {e}")))?;
    let csv = ingest::series_to_csv(&series, "ppm").map_err(|e| config_err(format!("synth: {e}")))?;
    match &a.out {
        Some(path) => write(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn run_report(a: &ReportArgs) -> Result<(), PipelineError> {
    let formats = parse_formats(&a.format)?;
    let text = std::fs::read_to_string(&a.input).map_err(|e| PipelineError::io(&a.input, e))?;
    let report = Report::from_json(&text)?;
    emit_all(&report, &formats, &a.out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("E_CONFIG: {}", line.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Ingest(a) => run_ingest(a),
        Command::Analyze(a) => run_analyze(a),
        Command::Synth(a) => run_synth(a),
        Command::Report(a) => run_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("{}: {msg}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
