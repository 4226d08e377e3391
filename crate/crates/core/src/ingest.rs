//! Sensor log parsing, ADC→ppm calibration and gap regularization.
//!
//! Raw logs are two-column CSV files (`epoch_s,adc`) of 12-bit readings taken
//! at 1 Hz. Pre-calibrated logs use `epoch_s,ppm`. Regularization places the
//! samples on a fixed grid, linearly bridges short dropouts and splits the
//! record at long outages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{QualityFlag, SeriesError, UniformSeries, Unit};

/// Largest value a 12-bit converter can report.
pub const ADC_MAX: u16 = 4095;

/// Highest polynomial degree accepted in a calibration curve.
pub const MAX_CURVE_DEGREE: usize = 5;

pub const DEFAULT_MAX_GAP_S: i64 = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("missing or unrecognized header (expected `epoch_s,adc` or `epoch_s,ppm`), found {0:?}")]
    BadHeader(String),
    #[error("malformed line {0}")]
    MalformedLine(u64),
    #[error("ADC value out of 12-bit range on line {0}")]
    AdcOutOfRange(u64),
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(i64),
    #[error("temperature series length {temps} does not match {records} records")]
    LengthMismatch { records: usize, temps: usize },
    #[error("invalid calibration curve: {0}")]
    InvalidCurve(String),
    #[error("no records to regularize")]
    EmptyInput,
    #[error("records are not strictly increasing at t = {0}")]
    NotSorted(i64),
    #[error("timestamp {0} does not fall on the {1} Hz sample grid")]
    OffGrid(i64, f64),
    #[error("timestamp {0} is not a whole number of seconds")]
    NonIntegralTimestamp(f64),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// One line of a raw sensor log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub t: i64,
    pub adc: u16,
}

/// A timestamped value (ppm or counts) with its provenance flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: i64,
    pub value: f64,
    pub flag: QualityFlag,
}

impl Sample {
    pub fn measured(t: i64, value: f64) -> Self {
        Self {
            t,
            value,
            flag: QualityFlag::Measured,
        }
    }
}

/// Parsed contents of an input log, by header kind.
#[derive(Debug, Clone, PartialEq)]
pub enum InputData {
    Raw(Vec<RawRecord>),
    Ppm(Vec<Sample>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum HeaderKind {
    Adc,
    Ppm,
}

fn header_kind(text: &str) -> Result<HeaderKind, IngestError> {
    let first = text.lines().next().unwrap_or("").trim();
    let cols: Vec<&str> = first.split(',').map(str::trim).collect();
    match cols.as_slice() {
        ["epoch_s", "adc"] => Ok(HeaderKind::Adc),
        ["epoch_s", "ppm"] => Ok(HeaderKind::Ppm),
        _ => Err(IngestError::BadHeader(first.to_string())),
    }
}

/// Iterates data lines as `(line_no, t, value_text)`.
fn data_rows(text: &str) -> Vec<Result<(u64, i64, String), IngestError>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                IngestError::MalformedLine(line)
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != 2 {
                return Err(IngestError::MalformedLine(line));
            }
            let t: i64 = rec[0].parse().map_err(|_| IngestError::MalformedLine(line))?;
            Ok((line, t, rec[1].to_string()))
        })
        .collect()
}

fn sort_unique<T, K: Fn(&T) -> i64>(mut items: Vec<T>, key: K) -> Result<Vec<T>, IngestError> {
    items.sort_by_key(|r| key(r));
    if let Some(w) = items.windows(2).find(|w| key(&w[0]) == key(&w[1])) {
        return Err(IngestError::DuplicateTimestamp(key(&w[0])));
    }
    Ok(items)
}

/// Parses an `epoch_s,adc` log into records sorted by time.
pub fn parse_records(csv_text: &str) -> Result<Vec<RawRecord>, IngestError> {
    if header_kind(csv_text)? != HeaderKind::Adc {
        return Err(IngestError::BadHeader(
            csv_text.lines().next().unwrap_or("").to_string(),
        ));
    }
    let mut out = Vec::new();
    for row in data_rows(csv_text) {
        let (line, t, raw) = row?;
        let adc: i64 = raw.parse().map_err(|_| IngestError::MalformedLine(line))?;
        if !(0..=ADC_MAX as i64).contains(&adc) {
            return Err(IngestError::AdcOutOfRange(line));
        }
        out.push(RawRecord { t, adc: adc as u16 });
    }
    sort_unique(out, |r| r.t)
}

/// Parses an `epoch_s,ppm` log. Negative values are kept and flagged.
pub fn parse_ppm_records(csv_text: &str) -> Result<Vec<Sample>, IngestError> {
    if header_kind(csv_text)? != HeaderKind::Ppm {
        return Err(IngestError::BadHeader(
            csv_text.lines().next().unwrap_or("").to_string(),
        ));
    }
    let mut out = Vec::new();
    for row in data_rows(csv_text) {
        let (line, t, raw) = row?;
        let value: f64 = raw.parse().map_err(|_| IngestError::MalformedLine(line))?;
        if !value.is_finite() {
            return Err(IngestError::MalformedLine(line));
        }
        let flag = if value < 0.0 {
            QualityFlag::NegativeClampedCandidate
        } else {
            QualityFlag::Measured
        };
        out.push(Sample { t, value, flag });
    }
    sort_unique(out, |s| s.t)
}

/// Dispatches on the header line.
pub fn parse_input(csv_text: &str) -> Result<InputData, IngestError> {
    match header_kind(csv_text)? {
        HeaderKind::Adc => parse_records(csv_text).map(InputData::Raw),
        HeaderKind::Ppm => parse_ppm_records(csv_text).map(InputData::Ppm),
    }
}

/// Inverse of [`parse_records`].
pub fn serialize_records(records: &[RawRecord]) -> String {
    let mut out = String::from("epoch_s,adc\n");
    for r in records {
        out.push_str(&format!("{},{}\n", r.t, r.adc));
    }
    out
}

/// Writes a series as `epoch_s,<column>` CSV. Every sample time must be a
/// whole number of seconds.
pub fn series_to_csv(series: &UniformSeries, column: &str) -> Result<String, IngestError> {
    let mut out = format!("epoch_s,{column}\n");
    for (k, v) in series.values().iter().enumerate() {
        let t = series.time_of(k);
        if t.fract() != 0.0 {
            return Err(IngestError::NonIntegralTimestamp(t));
        }
        out.push_str(&format!("{},{}\n", t as i64, v));
    }
    Ok(out)
}

/// Per-device polynomial mapping from ADC counts to ppm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub device_id: String,
    pub coeffs: Vec<f64>,
    #[serde(default)]
    pub temp_coeff: Option<f64>,
}

impl CalibrationCurve {
    pub fn new(device_id: impl Into<String>, coeffs: Vec<f64>, temp_coeff: Option<f64>) -> Result<Self, IngestError> {
        let curve = Self {
            device_id: device_id.into(),
            coeffs,
            temp_coeff,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let curve: Self =
            serde_json::from_str(text).map_err(|e| IngestError::InvalidCurve(e.to_string()))?;
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.coeffs.is_empty() {
            return Err(IngestError::InvalidCurve("no coefficients".into()));
        }
        if self.coeffs.len() - 1 > MAX_CURVE_DEGREE {
            return Err(IngestError::InvalidCurve(format!(
                "degree {} exceeds {MAX_CURVE_DEGREE}",
                self.coeffs.len() - 1
            )));
        }
        if self.coeffs.iter().chain(self.temp_coeff.iter()).any(|c| !c.is_finite()) {
            return Err(IngestError::InvalidCurve("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Evaluates the polynomial at `adc` (Horner), without temperature term.
    pub fn eval(&self, adc: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * adc + c)
    }
}

/// Reference temperature for the optional temperature correction, °C.
pub const REFERENCE_TEMP_C: f64 = 25.0;

/// Converts raw counts to ppm. Negative results are kept and flagged.
pub fn apply_calibration(
    records: &[RawRecord],
    curve: &CalibrationCurve,
    temp_c: Option<&[f64]>,
) -> Result<Vec<Sample>, IngestError> {
    curve.validate()?;
    if let Some(temps) = temp_c {
        if temps.len() != records.len() {
            return Err(IngestError::LengthMismatch {
                records: records.len(),
                temps: temps.len(),
            });
        }
    }
    Ok(records
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let mut ppm = curve.eval(r.adc as f64);
            if let (Some(temps), Some(tc)) = (temp_c, curve.temp_coeff) {
                ppm += tc * (temps[k] - REFERENCE_TEMP_C);
            }
            let flag = if ppm < 0.0 {
                QualityFlag::NegativeClampedCandidate
            } else {
                QualityFlag::Measured
            };
            Sample { t: r.t, value: ppm, flag }
        })
        .collect())
}

/// Raw records as unconverted count samples.
pub fn records_as_samples(records: &[RawRecord]) -> Vec<Sample> {
    records.iter().map(|r| Sample::measured(r.t, r.adc as f64)).collect()
}

/// Places sorted samples on a `rate_hz` grid. Gaps of at most `max_gap_s`
/// seconds are filled by linear interpolation; longer gaps start a new
/// segment.
pub fn regularize(
    records: &[Sample],
    rate_hz: f64,
    max_gap_s: i64,
    unit: Unit,
) -> Result<Vec<UniformSeries>, IngestError> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(SeriesError::InvalidRate(rate_hz).into());
    }
    let first = records.first().ok_or(IngestError::EmptyInput)?;

    let mut segments = Vec::new();
    let mut start = first.t;
    let mut values = vec![first.value];
    let mut flags = vec![first.flag];

    for pair in records.windows(2) {
        let (prev, next) = (pair[0], pair[1]);
        if next.t <= prev.t {
            return Err(IngestError::NotSorted(next.t));
        }
        let gap = next.t - prev.t;
        if gap > max_gap_s {
            segments.push(UniformSeries::with_flags(
                start as f64,
                rate_hz,
                std::mem::take(&mut values),
                unit,
                std::mem::take(&mut flags),
            )?);
            start = next.t;
            values.push(next.value);
            flags.push(next.flag);
            continue;
        }
        let steps_f = gap as f64 * rate_hz;
        let steps = steps_f.round();
        if steps < 1.0 || (steps_f - steps).abs() > 1e-9 {
            return Err(IngestError::OffGrid(next.t, rate_hz));
        }
        let steps = steps as usize;
        for j in 1..steps {
            let frac = j as f64 / steps as f64;
            values.push(prev.value + (next.value - prev.value) * frac);
            flags.push(QualityFlag::Interpolated);
        }
        values.push(next.value);
        flags.push(next.flag);
    }
    segments.push(UniformSeries::with_flags(start as f64, rate_hz, values, unit, flags)?);
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn samples(ts: &[i64], vs: &[f64]) -> Vec<Sample> {
        ts.iter().zip(vs).map(|(&t, &v)| Sample::measured(t, v)).collect()
    }

    #[test]
    fn parses_basic_log() {
        let recs = parse_records("epoch_s,adc\n100,2048\n101,2050").unwrap();
        assert_eq!(
            recs,
            vec![RawRecord { t: 100, adc: 2048 }, RawRecord { t: 101, adc: 2050 }]
        );
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_records("epoch_s,adc\n").unwrap().is_empty());
        assert!(parse_records("epoch_s,adc").unwrap().is_empty());
    }

    #[test]
    fn adc_range_is_twelve_bit() {
        assert_eq!(
            parse_records("epoch_s,adc\n100,4096\n"),
            Err(IngestError::AdcOutOfRange(2))
        );
        assert_eq!(
            parse_records("epoch_s,adc\n99,1\n100,-1\n"),
            Err(IngestError::AdcOutOfRange(3))
        );
        assert!(parse_records("epoch_s,adc\n100,4095\n101,0\n").is_ok());
    }

    #[test]
    fn malformed_and_duplicates() {
        assert_eq!(
            parse_records("epoch_s,adc\n100,2048\n101\n"),
            Err(IngestError::MalformedLine(3))
        );
        assert_eq!(
            parse_records("epoch_s,adc\n100,abc\n"),
            Err(IngestError::MalformedLine(2))
        );
        assert_eq!(
            parse_records("epoch_s,adc\n100,1\n101,2\n100,3\n"),
            Err(IngestError::DuplicateTimestamp(100))
        );
        assert!(matches!(parse_records("t,adc\n1,2\n"), Err(IngestError::BadHeader(_))));
        assert!(matches!(parse_records(""), Err(IngestError::BadHeader(_))));
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let recs = parse_records("epoch_s,adc\n102,3\n100,1\n101,2\n").unwrap();
        let ts: Vec<i64> = recs.iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![100, 101, 102]);
    }

    #[test]
    fn parse_input_dispatch() {
        match parse_input("epoch_s,ppm\n1,2.5\n2,-0.5\n").unwrap() {
            InputData::Ppm(s) => {
                assert_eq!(s[0].value, 2.5);
                assert_eq!(s[1].flag, QualityFlag::NegativeClampedCandidate);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_input("epoch_s,adc\n1,2\n").unwrap(),
            InputData::Raw(_)
        ));
    }

    #[test]
    fn calibration_arithmetic() {
        let rec = |adc| [RawRecord { t: 0, adc }];
        let linear = CalibrationCurve::new("d", vec![0.0, 0.01], None).unwrap();
        let out = apply_calibration(&rec(2048), &linear, None).unwrap();
        assert!((out[0].value - 20.48).abs() < 1e-12);
        assert_eq!(out[0].flag, QualityFlag::Measured);

        let identity = CalibrationCurve::new("d", vec![0.0, 1.0], None).unwrap();
        assert_eq!(apply_calibration(&rec(100), &identity, None).unwrap()[0].value, 100.0);

        let offset = CalibrationCurve::new("d", vec![-5.0, 0.01], None).unwrap();
        let out = apply_calibration(&rec(100), &offset, None).unwrap();
        assert!((out[0].value + 4.0).abs() < 1e-12);
        assert_eq!(out[0].flag, QualityFlag::NegativeClampedCandidate);
    }

    #[test]
    fn temperature_term() {
        let curve = CalibrationCurve::new("d", vec![0.0, 1.0], Some(0.5)).unwrap();
        let recs = [RawRecord { t: 0, adc: 10 }, RawRecord { t: 1, adc: 10 }];
        let out = apply_calibration(&recs, &curve, Some(&[25.0, 29.0])).unwrap();
        assert_eq!(out[0].value, 10.0);
        assert_eq!(out[1].value, 12.0);
        assert_eq!(
            apply_calibration(&recs, &curve, Some(&[25.0])),
            Err(IngestError::LengthMismatch { records: 2, temps: 1 })
        );
    }

    #[test]
    fn curve_json_and_validation() {
        let c = CalibrationCurve::from_json(r#"{"device_id":"n7","coeffs":[1,2],"temp_coeff":null}"#)
            .unwrap();
        assert_eq!(c.coeffs, vec![1.0, 2.0]);
        assert_eq!(c.temp_coeff, None);
        assert!(CalibrationCurve::from_json(r#"{"device_id":"n7","coeffs":[]}"#).is_err());
        assert!(CalibrationCurve::new("x", vec![0.0; 7], None).is_err());
        assert!(CalibrationCurve::new("x", vec![0.0; 6], None).is_ok());
    }

    #[test]
    fn regularize_no_gaps() {
        let segs = regularize(&samples(&[0, 1, 2], &[1.0, 2.0, 3.0]), 1.0, 5, Unit::Ppm).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn regularize_interpolates_short_gap() {
        let segs = regularize(&samples(&[0, 1, 4], &[0.0, 1.0, 4.0]), 1.0, 5, Unit::Ppm).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].values(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        let interp: Vec<usize> = segs[0]
            .flags()
            .iter()
            .enumerate()
            .filter(|(_, f)| **f == QualityFlag::Interpolated)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(interp, vec![2, 3]);
    }

    #[test]
    fn regularize_splits_long_gap() {
        let segs = regularize(&samples(&[0, 1, 20], &[1.0, 2.0, 3.0]), 1.0, 5, Unit::Ppm).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].values(), &[1.0, 2.0]);
        assert_eq!(segs[1].values(), &[3.0]);
        assert_eq!(segs[1].start_t(), 20.0);
    }

    #[test]
    fn regularize_errors() {
        assert_eq!(regularize(&[], 1.0, 5, Unit::Ppm), Err(IngestError::EmptyInput));
        assert_eq!(
            regularize(&samples(&[0, 5, 7], &[0.0; 3]), 0.2, 10, Unit::Ppm),
            Err(IngestError::OffGrid(7, 0.2))
        );
        assert_eq!(
            regularize(&samples(&[3, 2], &[0.0; 2]), 1.0, 5, Unit::Ppm),
            Err(IngestError::NotSorted(2))
        );
    }

    #[test]
    fn regularize_at_lower_rate() {
        let segs = regularize(&samples(&[0, 5, 15], &[0.0, 5.0, 15.0]), 0.2, 10, Unit::Ppm).unwrap();
        assert_eq!(segs[0].values(), &[0.0, 5.0, 10.0, 15.0]);
        assert_eq!(segs[0].time_of(3), 15.0);
    }

    #[test]
    fn series_csv_round_trip() {
        let s = UniformSeries::new(10.0, 1.0, vec![1.5, -2.0, 3.25], Unit::Ppm).unwrap();
        let text = series_to_csv(&s, "ppm").unwrap();
        let back = parse_ppm_records(&text).unwrap();
        assert_eq!(back.iter().map(|s| s.value).collect::<Vec<_>>(), s.values());
        assert_eq!(back[2].t, 12);
        let frac = UniformSeries::new(0.0, 3.0, vec![1.0, 2.0], Unit::Ppm).unwrap();
        assert!(matches!(
            series_to_csv(&frac, "ppm"),
            Err(IngestError::NonIntegralTimestamp(_))
        ));
    }

    fn arb_records() -> impl Strategy<Value = Vec<RawRecord>> {
        proptest::collection::btree_map(-1_000_000i64..1_000_000, 0u16..=ADC_MAX, 0..60)
            .prop_map(|m| m.into_iter().map(|(t, adc)| RawRecord { t, adc }).collect())
    }

    fn arb_gappy() -> impl Strategy<Value = (Vec<Sample>, i64)> {
        (
            proptest::collection::vec((1i64..12, -50.0f64..50.0), 1..80),
            1i64..8,
        )
            .prop_map(|(steps, max_gap)| {
                let mut t = 0;
                let recs = steps
                    .into_iter()
                    .map(|(dt, v)| {
                        t += dt;
                        Sample::measured(t, v)
                    })
                    .collect();
                (recs, max_gap)
            })
    }

    proptest! {
        #[test]
        fn parse_serialize_identity(recs in arb_records()) {
            prop_assert_eq!(parse_records(&serialize_records(&recs)).unwrap(), recs);
        }

        #[test]
        fn identity_curve_is_noop(recs in arb_records()) {
            let id = CalibrationCurve::new("id", vec![0.0, 1.0], None).unwrap();
            let out = apply_calibration(&recs, &id, None).unwrap();
            for (r, s) in recs.iter().zip(&out) {
                prop_assert_eq!(s.value, r.adc as f64);
            }
        }

        #[test]
        fn interpolation_count_and_measured_values((recs, max_gap) in arb_gappy()) {
            let segs = regularize(&recs, 1.0, max_gap, Unit::Ppm).unwrap();
            let expected: i64 = recs
                .windows(2)
                .map(|w| w[1].t - w[0].t)
                .filter(|&g| g <= max_gap)
                .map(|g| g - 1)
                .sum();
            let mut interp = 0i64;
            let mut measured = Vec::new();
            for s in &segs {
                for (k, f) in s.flags().iter().enumerate() {
                    match f {
                        QualityFlag::Interpolated => interp += 1,
                        _ => measured.push((s.time_of(k) as i64, s.values()[k])),
                    }
                }
            }
            prop_assert_eq!(interp, expected);
            let input: Vec<(i64, f64)> = recs.iter().map(|s| (s.t, s.value)).collect();
            prop_assert_eq!(measured, input);
        }
    }
}
