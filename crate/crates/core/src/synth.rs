//! Seeded synthetic signals used as ground truth for the analysis routines.
//!
//! Randomness comes from ChaCha8 keyed with `seed_from_u64(seed)`; distinct
//! purposes inside one generator draw from distinct ChaCha stream ids, so a
//! `(params, seed)` pair always produces the same bits. Gaussian variates use
//! the inverse normal CDF (Wichura's AS 241) applied to a 53-bit uniform in
//! (0, 1), which keeps the mapping from RNG words to samples deterministic.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{SeriesError, UniformSeries, Unit};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("autoregressive coefficient {0} is not stationary (|phi| must be < 1)")]
    NonStationaryPhi(f64),
    #[error("period {period_s} s is below the Nyquist limit for {rate_hz} Hz")]
    SubNyquistPeriod { period_s: f64, rate_hz: f64 },
    #[error("series length {n} is below the minimum of {min}")]
    SeriesTooShort { n: usize, min: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Minimum length accepted by [`gen_one_over_f`].
pub const ONE_OVER_F_MIN_LEN: usize = 64;

/// Deterministic random source for generator `seed`, substream `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw strictly inside (0, 1) with 53 bits of resolution.
pub fn uniform_open(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw by inversion.
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    inverse_normal_cdf(uniform_open(rng))
}

/// Quantile function of the standard normal distribution (AS 241, PPND16;
/// relative accuracy about 1e-16). `p` must lie in (0, 1).
#[allow(clippy::excessive_precision)]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const SPLIT1: f64 = 0.425;
    const SPLIT2: f64 = 5.0;
    const CONST1: f64 = 0.180625;
    const CONST2: f64 = 1.6;

    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    let q = p - 0.5;
    if q.abs() <= SPLIT1 {
        let r = CONST1 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let val = if r <= SPLIT2 {
        let r = r - CONST2;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - SPLIT2;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

fn check_phi(phi: f64) -> Result<(), SynthError> {
    if phi.is_finite() && phi.abs() < 1.0 {
        Ok(())
    } else {
        Err(SynthError::NonStationaryPhi(phi))
    }
}

fn check_len(n: usize, min: usize) -> Result<(), SynthError> {
    if n < min {
        Err(SynthError::SeriesTooShort { n, min })
    } else {
        Ok(())
    }
}

fn ar1_values(phi: f64, sigma: f64, n: usize, seed: u64) -> Result<Vec<f64>, SynthError> {
    check_phi(phi)?;
    check_len(n, 1)?;
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(SynthError::InvalidParameter(format!("sigma = {sigma}")));
    }
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::with_capacity(n);
    let mut x = sigma / (1.0 - phi * phi).sqrt() * standard_normal(&mut rng);
    out.push(x);
    for _ in 1..n {
        x = phi * x + sigma * standard_normal(&mut rng);
        out.push(x);
    }
    Ok(out)
}

/// Gaussian AR(1) started from its stationary distribution, at 1 Hz.
pub fn gen_ar1(phi: f64, sigma: f64, n: usize, seed: u64) -> Result<UniformSeries, SynthError> {
    Ok(UniformSeries::ppm(ar1_values(phi, sigma, n, seed)?, 1.0)?)
}

fn lognormal_ar1_values(phi: f64, mu: f64, sigma_log: f64, n: usize, seed: u64) -> Result<Vec<f64>, SynthError> {
    if !(sigma_log.is_finite() && sigma_log > 0.0) {
        return Err(SynthError::InvalidParameter(format!("sigma_log = {sigma_log}")));
    }
    let scale = sigma_log * (1.0 - phi * phi).sqrt();
    Ok(ar1_values(phi, 1.0, n, seed)?
        .into_iter()
        .map(|z| (mu + scale * z).exp())
        .collect())
}

/// `exp(mu + z_t)` with `z_t` a stationary AR(1) of standard deviation
/// `sigma_log`, at 1 Hz.
pub fn gen_lognormal_ar1(
    phi: f64,
    mu: f64,
    sigma_log: f64,
    n: usize,
    seed: u64,
) -> Result<UniformSeries, SynthError> {
    Ok(UniformSeries::ppm(lognormal_ar1_values(phi, mu, sigma_log, n, seed)?, 1.0)?)
}

/// Adds `amplitude * sin(2π t / period_s)` to a generated background.
pub fn gen_sine_mix(period_s: f64, amplitude: f64, background: &SynthSpec) -> Result<UniformSeries, SynthError> {
    let rate = background.rate_hz;
    if !(period_s.is_finite() && period_s > 2.0 / rate) {
        return Err(SynthError::SubNyquistPeriod { period_s, rate_hz: rate });
    }
    let bg = background.generate()?;
    Ok(bg.map_values_indexed(|k, v| v + amplitude * (2.0 * PI * (k as f64 / rate) / period_s).sin()))
}

fn one_over_f_values(n: usize, rate_hz: f64, seed: u64) -> Result<Vec<f64>, SynthError> {
    check_len(n, ONE_OVER_F_MIN_LEN)?;
    let mut rng = stream_rng(seed, 0);
    let mut spectrum = vec![Complex::new(0.0, 0.0); n];
    for k in 1..=n / 2 {
        let f = k as f64 * rate_hz / n as f64;
        let amp = 1.0 / f.sqrt();
        let phase = 2.0 * PI * uniform_open(&mut rng);
        if 2 * k == n {
            // Nyquist bin must be real.
            spectrum[k] = Complex::new(amp * phase.cos(), 0.0);
        } else {
            spectrum[k] = Complex::from_polar(amp, phase);
            spectrum[n - k] = spectrum[k].conj();
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    let mut out: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    let mean = out.iter().sum::<f64>() / n as f64;
    let std = (out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    for v in &mut out {
        *v /= std;
    }
    Ok(out)
}

/// Pink noise by spectral synthesis: random phases, amplitude ∝ 1/√f, DC
/// zeroed, scaled to unit population variance.
pub fn gen_one_over_f(n: usize, rate_hz: f64, seed: u64) -> Result<UniformSeries, SynthError> {
    Ok(UniformSeries::ppm(one_over_f_values(n, rate_hz, seed)?, rate_hz)?)
}

/// Linear-interpolated sample quantile of a sorted slice.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn threshold_ar_values(
    phi_low: f64,
    phi_high: f64,
    quantile_q: f64,
    sigma: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, SynthError> {
    check_phi(phi_low)?;
    check_phi(phi_high)?;
    check_len(n, 1)?;
    if !(quantile_q > 0.0 && quantile_q < 1.0) {
        return Err(SynthError::InvalidParameter(format!("quantile_q = {quantile_q}")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(SynthError::InvalidParameter(format!("sigma = {sigma}")));
    }
    let warmup = (n / 10).clamp(1, 1000);
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::with_capacity(n);
    let mut sorted: Vec<f64> = Vec::with_capacity(warmup);
    let mut fixed: Option<f64> = None;

    let mut x = sigma / (1.0 - phi_low * phi_low).sqrt() * standard_normal(&mut rng);
    out.push(x);
    for t in 1..n {
        let prev = out[t - 1];
        let threshold = match fixed {
            Some(c) => c,
            None => {
                let pos = sorted.partition_point(|v| *v < prev);
                sorted.insert(pos, prev);
                let c = sorted_quantile(&sorted, quantile_q);
                if sorted.len() >= warmup {
                    fixed = Some(c);
                }
                c
            }
        };
        let phi = if prev <= threshold { phi_low } else { phi_high };
        x = phi * prev + sigma * standard_normal(&mut rng);
        out.push(x);
    }
    Ok(out)
}

/// Two-regime threshold autoregression at 1 Hz: `phi_low` applies when the
/// current value is at or below the running `quantile_q` quantile of the
/// path, `phi_high` above it. The threshold freezes after a warm-up of
/// `min(n/10, 1000)` samples.
pub fn gen_threshold_ar(
    phi_low: f64,
    phi_high: f64,
    quantile_q: f64,
    sigma: f64,
    n: usize,
    seed: u64,
) -> Result<UniformSeries, SynthError> {
    Ok(UniformSeries::ppm(
        threshold_ar_values(phi_low, phi_high, quantile_q, sigma, n, seed)?,
        1.0,
    )?)
}

/// Generator family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    Ar1 {
        phi: f64,
        sigma: f64,
    },
    LognormalAr1 {
        phi: f64,
        mu: f64,
        sigma_log: f64,
    },
    /// Sinusoid over a background generated with the outer length, rate and seed.
    SineMix {
        period_s: f64,
        amplitude: f64,
        background: Box<SynthKind>,
    },
    OneOverF,
    ThresholdAr {
        phi_low: f64,
        phi_high: f64,
        quantile_q: f64,
        sigma: f64,
    },
}

/// Complete, serializable description of a synthetic series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(flatten)]
    pub kind: SynthKind,
    pub n: usize,
    pub rate_hz: f64,
    pub seed: u64,
    #[serde(default)]
    pub start_t: i64,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, n: usize, rate_hz: f64, seed: u64) -> Self {
        Self {
            kind,
            n,
            rate_hz,
            seed,
            start_t: 0,
        }
    }

    pub fn generate(&self) -> Result<UniformSeries, SynthError> {
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(SeriesError::InvalidRate(self.rate_hz).into());
        }
        let values = match &self.kind {
            SynthKind::Ar1 { phi, sigma } => ar1_values(*phi, *sigma, self.n, self.seed)?,
            SynthKind::LognormalAr1 { phi, mu, sigma_log } => {
                lognormal_ar1_values(*phi, *mu, *sigma_log, self.n, self.seed)?
            }
            SynthKind::SineMix {
                period_s,
                amplitude,
                background,
            } => {
                let bg = SynthSpec {
                    kind: (**background).clone(),
                    ..self.clone()
                };
                gen_sine_mix(*period_s, *amplitude, &bg)?.into_values()
            }
            SynthKind::OneOverF => one_over_f_values(self.n, self.rate_hz, self.seed)?,
            SynthKind::ThresholdAr {
                phi_low,
                phi_high,
                quantile_q,
                sigma,
            } => threshold_ar_values(*phi_low, *phi_high, *quantile_q, *sigma, self.n, self.seed)?,
        };
        Ok(UniformSeries::new(self.start_t as f64, self.rate_hz, values, Unit::Ppm)?)
    }
}
