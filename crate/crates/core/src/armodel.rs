//! Least-squares autoregressive fits, residuals and one-step prediction.
//!
//! The model is `x_t = a0 + Σ_{i=1..m} a_i x_{t-i} + r_t`, with coefficients
//! chosen to minimize `Σ r_t²` over every `t` that has a full lag history.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{stats, SeriesError, UniformSeries};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArError {
    #[error("AR order must be at least 1")]
    ZeroOrder,
    #[error("series of length {len} is too short for an AR({order}) fit")]
    SeriesTooShort { len: usize, order: usize },
    #[error("series has zero variance")]
    DegenerateVariance,
    #[error("lagged regressors are collinear")]
    SingularDesign,
    #[error("history of length {len} is shorter than the model order {order}")]
    HistoryTooShort { len: usize, order: usize },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Fitted AR(m) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub order: usize,
    pub a0: f64,
    /// `a_1..a_m`, lag 1 first.
    pub coeffs: Vec<f64>,
    /// Mean squared in-sample residual.
    pub noise_var: f64,
    /// Number of equations in the fit (`len - m`).
    pub n_fit: usize,
}

/// Relative pivot size below which the design is treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Ordinary least squares of `x_t` on `(1, x_{t-1}, …, x_{t-m})`.
pub fn fit_ar(series: &UniformSeries, m: usize) -> Result<ArModel, ArError> {
    fit_ar_values(series.values(), m)
}

pub fn fit_ar_values(x: &[f64], m: usize) -> Result<ArModel, ArError> {
    if m == 0 {
        return Err(ArError::ZeroOrder);
    }
    // At least one more equation than unknowns.
    if x.len() < 2 * m + 2 {
        return Err(ArError::SeriesTooShort { len: x.len(), order: m });
    }
    if stats::is_constant(x) {
        return Err(ArError::DegenerateVariance);
    }
    let rows = x.len() - m;
    let design = DMatrix::from_fn(rows, m + 1, |r, c| if c == 0 { 1.0 } else { x[m + r - c] });
    let target = DVector::from_iterator(rows, x[m..].iter().copied());

    let qr = design.qr();
    let r = qr.r();
    let scale = (0..=m).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..=m).any(|i| r[(i, i)].abs() <= RANK_TOL * scale) {
        return Err(ArError::SingularDesign);
    }
    let qty = qr.q().transpose() * &target;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(ArError::SingularDesign)?;

    let a0 = beta[0];
    let coeffs: Vec<f64> = beta.iter().skip(1).copied().collect();
    let resid = residual_values(x, a0, &coeffs);
    let noise_var = resid.iter().map(|v| v * v).sum::<f64>() / resid.len() as f64;
    Ok(ArModel {
        order: m,
        a0,
        coeffs,
        noise_var,
        n_fit: rows,
    })
}

fn residual_values(x: &[f64], a0: f64, coeffs: &[f64]) -> Vec<f64> {
    let m = coeffs.len();
    (m..x.len())
        .map(|t| {
            let pred: f64 = a0 + coeffs.iter().enumerate().map(|(i, a)| a * x[t - 1 - i]).sum::<f64>();
            x[t] - pred
        })
        .collect()
}

/// In-sample residuals `r_t` for `t = m..n-1` (0-based). Output sample `j`
/// corresponds to input sample `m + j`.
pub fn residuals(series: &UniformSeries, model: &ArModel) -> Result<UniformSeries, ArError> {
    let m = model.order;
    if series.len() <= m {
        return Err(ArError::SeriesTooShort { len: series.len(), order: m });
    }
    Ok(UniformSeries::new(
        series.time_of(m),
        series.rate_hz(),
        residual_values(series.values(), model.a0, &model.coeffs),
        series.unit(),
    )?)
}

/// `a0 + Σ a_i · history[last - i + 1]`.
pub fn predict_one_step(model: &ArModel, history: &[f64]) -> Result<f64, ArError> {
    let m = model.order;
    if history.len() < m {
        return Err(ArError::HistoryTooShort { len: history.len(), order: m });
    }
    let last = history.len() - 1;
    Ok(model.a0
        + model
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| a * history[last - i])
            .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::{acf_values, durbin_levinson};
    use crate::synth::gen_ar1;
    use proptest::prelude::*;

    fn s(v: Vec<f64>) -> UniformSeries {
        UniformSeries::ppm(v, 1.0).unwrap()
    }

    #[test]
    fn geometric_series_is_exact() {
        let x = s(vec![1.0, 0.5, 0.25, 0.125]);
        let model = fit_ar(&x, 1).unwrap();
        assert!(model.a0.abs() < 1e-12);
        assert!((model.coeffs[0] - 0.5).abs() < 1e-12);
        assert!(model.noise_var < 1e-24);
        let r = residuals(&x, &model).unwrap();
        assert!(r.values().iter().all(|v| v.abs() < 1e-12));
        assert_eq!(r.len(), 3);
        assert_eq!(r.start_t(), 1.0);
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let x = gen_ar1(0.77, 1.0, 100_000, 5).unwrap();
        let model = fit_ar(&x, 1).unwrap();
        assert!((model.coeffs[0] - 0.77).abs() < 0.02);
        assert!((model.noise_var - 1.0).abs() < 0.02);
        assert_eq!(model.n_fit, 99_999);
    }

    #[test]
    fn agrees_with_yule_walker() {
        let x = gen_ar1(0.6, 1.0, 50_000, 9).unwrap();
        let ols = fit_ar(&x, 1).unwrap();
        let yw = durbin_levinson(&acf_values(x.values(), 1).unwrap()).unwrap()[1];
        assert!((ols.coeffs[0] - yw).abs() < 1e-3);
    }

    #[test]
    fn errors() {
        assert_eq!(fit_ar(&s(vec![3.0; 50]), 1), Err(ArError::DegenerateVariance));
        assert_eq!(fit_ar(&s(vec![1.0, 2.0, 3.0]), 1), Err(ArError::SeriesTooShort { len: 3, order: 1 }));
        assert_eq!(fit_ar(&s(vec![1.0, 2.0, 3.0]), 0), Err(ArError::ZeroOrder));
        // Period-2 signal: x_{t-2} duplicates x_t's pattern, so lags 1 and 2 are collinear with the intercept.
        let alt: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(fit_ar(&s(alt), 2), Err(ArError::SingularDesign));
    }

    #[test]
    fn white_noise_residual_variance() {
        let x = gen_ar1(0.0, 1.0, 20_000, 31).unwrap();
        let model = fit_ar(&x, 1).unwrap();
        let r = residuals(&x, &model).unwrap();
        let ratio = stats::pop_variance(r.values()) / stats::pop_variance(x.values());
        assert!((ratio - 1.0).abs() < 0.02, "ratio {ratio}");
    }

    #[test]
    fn prediction() {
        let model = ArModel { order: 1, a0: 1.0, coeffs: vec![0.5], noise_var: 0.0, n_fit: 0 };
        assert_eq!(predict_one_step(&model, &[7.0, 4.0]).unwrap(), 3.0);
        let zero = ArModel { order: 3, a0: 2.5, coeffs: vec![0.0; 3], noise_var: 0.0, n_fit: 0 };
        assert_eq!(predict_one_step(&zero, &[1.0, 2.0, 3.0]).unwrap(), 2.5);
        assert_eq!(
            predict_one_step(&zero, &[1.0]),
            Err(ArError::HistoryTooShort { len: 1, order: 3 })
        );
        let two = ArModel { order: 2, a0: 0.0, coeffs: vec![1.0, 10.0], noise_var: 0.0, n_fit: 0 };
        // history[last] pairs with a1, history[last-1] with a2.
        assert_eq!(predict_one_step(&two, &[9.0, 2.0, 3.0]).unwrap(), 3.0 + 20.0);
    }

    #[test]
    fn one_step_error_matches_noise_var() {
        let x = gen_ar1(0.77, 1.0, 50_000, 6).unwrap();
        let v = x.values();
        let model = fit_ar(&x, 1).unwrap();
        let mse = (1..v.len())
            .map(|t| {
                let e = v[t] - predict_one_step(&model, &v[..t]).unwrap();
                e * e
            })
            .sum::<f64>()
            / (v.len() - 1) as f64;
        assert!((mse / model.noise_var - 1.0).abs() < 0.05);
    }

    #[test]
    fn residuals_of_ar1_are_white() {
        for seed in 0..5 {
            let x = gen_ar1(0.77, 1.0, 10_000, seed).unwrap();
            let r = residuals(&x, &fit_ar(&x, 1).unwrap()).unwrap();
            let refit = fit_ar(&r, 1).unwrap();
            assert!(refit.coeffs[0].abs() < 1.96 / (r.len() as f64).sqrt());
        }
    }

    proptest! {
        #[test]
        fn residuals_sum_to_zero_and_beat_the_mean(
            v in proptest::collection::vec(-100.0f64..100.0, 12..200),
            m in 1usize..4,
        ) {
            prop_assume!(!stats::is_constant(&v));
            let x = s(v.clone());
            match fit_ar(&x, m) {
                Ok(model) => {
                    let r = residuals(&x, &model).unwrap();
                    let scale = v.iter().map(|a| a.abs()).fold(0.0, f64::max);
                    prop_assert!(r.values().iter().sum::<f64>().abs() < 1e-8 * scale * r.len() as f64);
                    prop_assert!(model.noise_var <= stats::pop_variance(&v[m..]) * (1.0 + 1e-9) + 1e-12);
                }
                Err(ArError::SingularDesign) => {}
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
    }
}
