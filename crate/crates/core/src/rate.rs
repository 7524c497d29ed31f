//! Empirical convergence-rate estimation from recorded traces.

use crate::diag::Trace;
use crate::error::{Error, Result};

/// Fit model selection.
///
/// - `Linear`: least squares of log(gap) against k; the fitted value is the
///   per-iteration rate (slope exponentiated).
/// - `Sublinear`: fits k * gap to a constant; the fitted value is that
///   constant.
/// - `Quadratic`: least squares of log log(envelope / gap) against k; the
///   fitted value is the exponentiated slope (about 2 for a quadratic
///   order), using the supplied envelope prefactor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateModel {
    Linear,
    Sublinear,
    Quadratic { envelope: f64 },
}

#[derive(Clone, Debug)]
pub struct RateFit {
    pub model: RateModel,
    /// Inclusive iteration window the fit used after truncation.
    pub window: (usize, usize),
    pub value: f64,
    /// Maximum relative residual for linear/sublinear fits; maximum absolute
    /// residual in log-log space for the quadratic fit.
    pub residual: f64,
    /// True when converged-past-precision points were dropped from the window.
    pub truncated: bool,
}

fn least_squares_slope(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    (slope, intercept)
}

/// Fits the selected model to `v_gap_inf` over the inclusive iteration window
/// `[k_lo, k_hi]`. Gaps below 1e-14 (converged past double precision) are
/// dropped and the fit is marked truncated.
pub fn estimate_rate(trace: &Trace, model: RateModel, window: (usize, usize)) -> Result<RateFit> {
    let (k_lo, k_hi) = window;
    if k_lo > k_hi {
        return Err(Error::Config(format!("empty rate window [{k_lo}, {k_hi}]")));
    }
    let mut pts: Vec<(usize, f64)> = Vec::new();
    let mut truncated = false;
    for rec in &trace.records {
        if rec.k < k_lo || rec.k > k_hi {
            continue;
        }
        if rec.v_gap_inf < 1e-14 {
            truncated = true;
            continue;
        }
        pts.push((rec.k, rec.v_gap_inf));
    }
    if pts.len() < 2 {
        return Err(Error::Config(
            "rate window holds fewer than two usable gaps".into(),
        ));
    }
    let used = (pts.first().unwrap().0, pts.last().unwrap().0);
    match model {
        RateModel::Linear => {
            let logs: Vec<(f64, f64)> = pts.iter().map(|&(k, g)| (k as f64, g.ln())).collect();
            let (slope, intercept) = least_squares_slope(&logs);
            let mut residual = 0.0f64;
            for &(k, g) in &pts {
                let fit = (intercept + slope * k as f64).exp();
                residual = residual.max((fit / g - 1.0).abs());
            }
            Ok(RateFit {
                model,
                window: used,
                value: slope.exp(),
                residual,
                truncated,
            })
        }
        RateModel::Sublinear => {
            let prods: Vec<f64> = pts
                .iter()
                .filter(|&&(k, _)| k > 0)
                .map(|&(k, g)| k as f64 * g)
                .collect();
            if prods.is_empty() {
                return Err(Error::Config(
                    "sublinear fit needs iterations k >= 1".into(),
                ));
            }
            let value = prods.iter().sum::<f64>() / prods.len() as f64;
            let residual = prods
                .iter()
                .fold(0.0f64, |m, &p| m.max((p / value - 1.0).abs()));
            Ok(RateFit {
                model,
                window: used,
                value,
                residual,
                truncated,
            })
        }
        RateModel::Quadratic { envelope } => {
            if envelope <= 0.0 {
                return Err(Error::Config(
                    "quadratic fit needs a positive envelope".into(),
                ));
            }
            // Only attempted once errors are below the envelope.
            let logs: Vec<(f64, f64)> = pts
                .iter()
                .filter(|&&(_, g)| envelope / g > 1.0 && (envelope / g).ln() > 1e-12)
                .map(|&(k, g)| (k as f64, (envelope / g).ln().ln()))
                .collect();
            if logs.len() < 2 {
                return Err(Error::Config(
                    "quadratic fit needs two gaps below the envelope".into(),
                ));
            }
            let (slope, intercept) = least_squares_slope(&logs);
            let mut residual = 0.0f64;
            for &(x, y) in &logs {
                residual = residual.max((intercept + slope * x - y).abs());
            }
            Ok(RateFit {
                model,
                window: used,
                value: slope.exp(),
                residual,
                truncated,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diag::{IterationRecord, Trace};

    fn synthetic_trace(gaps: &[f64]) -> Trace {
        let records = gaps
            .iter()
            .enumerate()
            .map(|(k, &g)| IterationRecord {
                k,
                eta_k: None,
                v_gap_inf: g,
                v_gap_rho: g,
                l_k_kp1: None,
                b_max: None,
                kl_to_opt: None,
                slacks: Default::default(),
            })
            .collect();
        Trace::synthetic(records)
    }

    #[test]
    fn exact_geometric_series_fits_linear_rate() {
        let t = synthetic_trace(&[1.0, 0.5, 0.25, 0.125]);
        let fit = estimate_rate(&t, RateModel::Linear, (0, 3)).unwrap();
        assert!((fit.value - 0.5).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert!(!fit.truncated);
    }

    #[test]
    fn one_over_k_series_fits_sublinear_constant() {
        let gaps: Vec<f64> = (0..101)
            .map(|k| if k == 0 { 2.0 } else { 1.0 / k as f64 })
            .collect();
        let t = synthetic_trace(&gaps);
        let fit = estimate_rate(&t, RateModel::Sublinear, (1, 100)).unwrap();
        assert!((fit.value - 1.0).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn quadratic_series_fits_slope_two() {
        // gap_k = E * r^(2^k) has log log(E/gap) = k log 2 + const.
        let envelope = 2.0;
        let r: f64 = 0.5;
        let gaps: Vec<f64> = (0..6).map(|k| envelope * r.powf(2f64.powi(k))).collect();
        let t = synthetic_trace(&gaps);
        let fit = estimate_rate(&t, RateModel::Quadratic { envelope }, (0, 5)).unwrap();
        assert!((fit.value - 2.0).abs() < 1e-9);
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn tiny_gaps_are_truncated() {
        let t = synthetic_trace(&[1.0, 0.5, 0.25, 1e-16, 1e-17]);
        let fit = estimate_rate(&t, RateModel::Linear, (0, 4)).unwrap();
        assert!(fit.truncated);
        assert_eq!(fit.window, (0, 2));
        assert!((fit.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_windows_error() {
        let t = synthetic_trace(&[1.0, 0.5]);
        assert!(estimate_rate(&t, RateModel::Linear, (3, 5)).is_err());
        assert!(estimate_rate(&t, RateModel::Linear, (1, 0)).is_err());
    }
}
