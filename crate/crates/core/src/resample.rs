//! Rate reduction and smoothing: block means, extreme-preserving
//! decimation and a centered moving average.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{stats, QualityFlag, SeriesError, UniformSeries};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResampleError {
    #[error("block size must be at least 1")]
    ZeroFactor,
    #[error("block size {k} exceeds series length {len}")]
    BlockTooLarge { k: usize, len: usize },
    #[error("window {w} exceeds series length {len}")]
    WindowTooLarge { w: usize, len: usize },
    #[error("moving-average window must be odd, got {0}")]
    EvenWindow(usize),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// How a decimation block is reduced to one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecimateMode {
    /// Keep the sample farthest from the block mean.
    #[default]
    Extremes,
    /// Replace the block by its mean.
    Mean,
}

impl std::str::FromStr for DecimateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "extremes" => Ok(Self::Extremes),
            "mean" => Ok(Self::Mean),
            other => Err(format!("unknown decimate mode {other:?} (expected extremes|mean)")),
        }
    }
}

fn check_block(series: &UniformSeries, k: usize) -> Result<(), ResampleError> {
    if k == 0 {
        return Err(ResampleError::ZeroFactor);
    }
    if k > series.len() {
        return Err(ResampleError::BlockTooLarge { k, len: series.len() });
    }
    Ok(())
}

fn block_flag(flags: &[QualityFlag], value: f64) -> QualityFlag {
    if let [single] = flags {
        *single
    } else if value < 0.0 {
        QualityFlag::NegativeClampedCandidate
    } else if flags.iter().any(|f| *f != QualityFlag::Measured) {
        QualityFlag::Interpolated
    } else {
        QualityFlag::Measured
    }
}

/// Non-overlapping block means; the trailing partial block is dropped.
pub fn block_average(series: &UniformSeries, k: usize) -> Result<UniformSeries, ResampleError> {
    check_block(series, k)?;
    let (values, flags): (Vec<f64>, Vec<QualityFlag>) = series
        .values()
        .chunks_exact(k)
        .zip(series.flags().chunks_exact(k))
        .map(|(block, fl)| {
            let m = stats::mean(block);
            (m, block_flag(fl, m))
        })
        .unzip();
    Ok(UniformSeries::with_flags(
        series.start_t(),
        series.rate_hz() / k as f64,
        values,
        series.unit(),
        flags,
    )?)
}

/// Index within `block` of the sample with the largest absolute deviation
/// from the block mean; ties resolve to the earliest index.
fn extreme_index(block: &[f64]) -> usize {
    let m = stats::mean(block);
    let mut best = 0;
    let mut best_dev = (block[0] - m).abs();
    for (i, v) in block.iter().enumerate().skip(1) {
        let dev = (v - m).abs();
        if dev > best_dev {
            best = i;
            best_dev = dev;
        }
    }
    best
}

/// Keeps, from each block of `k` samples, the one deviating most from the
/// block mean. Output values are a subset of the input values.
pub fn decimate_extremes(series: &UniformSeries, k: usize) -> Result<UniformSeries, ResampleError> {
    check_block(series, k)?;
    let (values, flags): (Vec<f64>, Vec<QualityFlag>) = series
        .values()
        .chunks_exact(k)
        .zip(series.flags().chunks_exact(k))
        .map(|(block, fl)| {
            let i = extreme_index(block);
            (block[i], fl[i])
        })
        .unzip();
    Ok(UniformSeries::with_flags(
        series.start_t(),
        series.rate_hz() / k as f64,
        values,
        series.unit(),
        flags,
    )?)
}

/// Dispatches on `mode`.
pub fn decimate(series: &UniformSeries, k: usize, mode: DecimateMode) -> Result<UniformSeries, ResampleError> {
    match mode {
        DecimateMode::Extremes => decimate_extremes(series, k),
        DecimateMode::Mean => block_average(series, k),
    }
}

/// Centered moving average over an odd window `w`. The output loses
/// `(w-1)/2` samples at each end and starts at the first full window's center.
pub fn moving_average(series: &UniformSeries, w: usize) -> Result<UniformSeries, ResampleError> {
    if w.is_multiple_of(2) {
        return Err(ResampleError::EvenWindow(w));
    }
    let len = series.len();
    if w > len {
        return Err(ResampleError::WindowTooLarge { w, len });
    }
    let x = series.values();
    let half = (w - 1) / 2;
    let mut values = Vec::with_capacity(len - w + 1);
    let mut flags = Vec::with_capacity(len - w + 1);
    for start in 0..=len - w {
        let m = stats::mean(&x[start..start + w]);
        values.push(m);
        flags.push(block_flag(&series.flags()[start..start + w], m));
    }
    Ok(UniformSeries::with_flags(
        series.time_of(half),
        series.rate_hz(),
        values,
        series.unit(),
        flags,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gen_ar1;
    use proptest::prelude::*;

    fn s(v: &[f64]) -> UniformSeries {
        UniformSeries::ppm(v.to_vec(), 1.0).unwrap()
    }

    #[test]
    fn block_average_basic() {
        let out = block_average(&s(&[1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        assert_eq!(out.values(), &[1.5, 3.5]);
        assert_eq!(out.rate_hz(), 0.5);
        let out = block_average(&s(&[1.0, 2.0, 3.0, 4.0, 5.0]), 2).unwrap();
        assert_eq!(out.values(), &[1.5, 3.5]);
    }

    #[test]
    fn block_average_constant_and_errors() {
        let c = s(&[7.25; 30]);
        for k in [1, 2, 3, 7, 30] {
            assert!(block_average(&c, k).unwrap().values().iter().all(|&v| v == 7.25));
        }
        assert_eq!(block_average(&c, 0), Err(ResampleError::ZeroFactor));
        assert_eq!(
            block_average(&c, 31),
            Err(ResampleError::BlockTooLarge { k: 31, len: 30 })
        );
    }

    #[test]
    fn block_average_shrinks_variance_on_fixture() {
        let x = gen_ar1(0.3, 1.0, 5000, 77).unwrap();
        let before = stats::pop_variance(x.values());
        for k in [2, 5, 10] {
            let after = stats::pop_variance(block_average(&x, k).unwrap().values());
            assert!(after <= before);
        }
    }

    #[test]
    fn extremes_rule() {
        assert_eq!(decimate_extremes(&s(&[1.0, 1.0, 9.0]), 3).unwrap().values(), &[9.0]);
        assert_eq!(decimate_extremes(&s(&[-9.0, 1.0, 1.0]), 3).unwrap().values(), &[-9.0]);
        assert_eq!(decimate_extremes(&s(&[4.0, 4.0, 4.0]), 3).unwrap().values(), &[4.0]);
        // Tie between 0 and 2 around mean 1: earliest wins.
        let out = decimate_extremes(&s(&[0.0, 2.0, 1.0, 1.0]), 2).unwrap();
        assert_eq!(out.values(), &[0.0, 1.0]);
        assert_eq!(out.rate_hz(), 0.5);
    }

    #[test]
    fn decimate_keeps_flag_of_chosen_sample() {
        let series = UniformSeries::with_flags(
            0.0,
            1.0,
            vec![1.0, 1.0, 9.0],
            crate::series::Unit::Ppm,
            vec![QualityFlag::Measured, QualityFlag::Measured, QualityFlag::Interpolated],
        )
        .unwrap();
        assert_eq!(decimate_extremes(&series, 3).unwrap().flags(), &[QualityFlag::Interpolated]);
    }

    #[test]
    fn moving_average_cases() {
        assert_eq!(moving_average(&s(&[1.0, 2.0, 3.0]), 3).unwrap().values(), &[2.0]);
        let x = s(&[3.0, -1.0, 4.0, 1.5]);
        assert_eq!(moving_average(&x, 1).unwrap(), x);
        let c = moving_average(&s(&[2.0; 10]), 5).unwrap();
        assert_eq!(c.values(), &[2.0; 6]);
        assert_eq!(c.start_t(), 2.0);
        assert_eq!(moving_average(&x, 2), Err(ResampleError::EvenWindow(2)));
        assert_eq!(
            moving_average(&x, 5),
            Err(ResampleError::WindowTooLarge { w: 5, len: 4 })
        );
    }

    proptest! {
        #[test]
        fn extremes_are_members_of_their_block(
            v in proptest::collection::vec(-1e3f64..1e3, 1..200),
            k in 1usize..12,
        ) {
            prop_assume!(k <= v.len());
            let out = decimate_extremes(&s(&v), k).unwrap();
            prop_assert_eq!(out.len(), v.len() / k);
            for (j, x) in out.values().iter().enumerate() {
                prop_assert!(v[j * k..(j + 1) * k].contains(x));
            }
        }

        #[test]
        fn nested_block_means_compose(
            v in proptest::collection::vec(-1e3f64..1e3, 1..8),
            k1 in 1usize..6,
            k2 in 1usize..6,
            reps in 1usize..5,
        ) {
            // Length divisible by k1*k2.
            let n = k1 * k2 * reps;
            let x: Vec<f64> = (0..n).map(|i| v[i % v.len()] + i as f64).collect();
            let twice = block_average(&block_average(&s(&x), k1).unwrap(), k2).unwrap();
            let once = block_average(&s(&x), k1 * k2).unwrap();
            prop_assert_eq!(twice.len(), once.len());
            for (a, b) in twice.values().iter().zip(once.values()) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
            prop_assert!((twice.rate_hz() - once.rate_hz()).abs() < 1e-15);
        }

        #[test]
        fn block_means_never_increase_variance(
            v in proptest::collection::vec(-1e3f64..1e3, 2..300),
            k in 1usize..10,
        ) {
            prop_assume!(k <= v.len());
            let used = v.len() / k * k;
            let before = stats::pop_variance(&v[..used]);
            let after = stats::pop_variance(block_average(&s(&v), k).unwrap().values());
            prop_assert!(after <= before * (1.0 + 1e-12) + 1e-9);
        }
    }
}
