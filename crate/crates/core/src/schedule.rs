//! Step-size schedules and the entropy step-size threshold.

use crate::error::{Error, Result};

/// Step-size rule producing eta_k from the iteration index and, for the
/// adaptive rule, the current weighted advantages.
#[derive(Clone, Debug, PartialEq)]
pub enum StepSchedule {
    Constant {
        eta: f64,
    },
    /// Geometrically increasing rule, used with projected policy gradient:
    /// eta_k = ((2 + 5|A|)/mu_tilde) * ((1-gamma)/c3) * (1 + (1-gamma)/c3)^(k+1),
    /// taken with equality.
    PpgIncreasing {
        c3: f64,
    },
    /// Adaptive rule for softmax PG: eta_k = c / min_{s in S^k} max_a |pi A|,
    /// where S^k is the set of states whose weighted advantage row has a
    /// strictly positive maximum. Taken with equality.
    PgAdaptive {
        c_adapt: f64,
    },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant { eta } => eta > 0.0 && eta.is_finite(),
            StepSchedule::PpgIncreasing { c3 } => c3 > 0.0 && c3.is_finite(),
            StepSchedule::PgAdaptive { c_adapt } => c_adapt > 0.0 && c_adapt.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "schedule parameter must be positive and finite: {self:?}"
            )))
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            StepSchedule::Constant { eta } => format!("constant eta={eta}"),
            StepSchedule::PpgIncreasing { c3 } => format!("ppg-increasing c3={c3}"),
            StepSchedule::PgAdaptive { c_adapt } => format!("pg-adaptive c={c_adapt}"),
        }
    }
}

/// Per-iteration inputs a schedule may consult.
#[derive(Clone, Copy, Debug)]
pub struct StepInfo<'a> {
    pub n_actions: usize,
    pub gamma: f64,
    /// min_s mu(s) of the optimization measure.
    pub mu_tilde: f64,
    /// pi^k(a|s) A^k(s,a) rows, required by the adaptive rule.
    pub weighted_adv: Option<&'a [f64]>,
}

/// Computes eta_k. `Ok(None)` is the converged signal of the adaptive rule:
/// S^k is empty, every weighted advantage is zero and the policy is optimal.
pub fn schedule_eta(schedule: &StepSchedule, k: usize, info: &StepInfo) -> Result<Option<f64>> {
    schedule.validate()?;
    match *schedule {
        StepSchedule::Constant { eta } => Ok(Some(eta)),
        StepSchedule::PpgIncreasing { c3 } => {
            if info.mu_tilde <= 0.0 {
                return Err(Error::Config(
                    "ppg-increasing schedule needs min_s mu(s) > 0".into(),
                ));
            }
            let ratio = (1.0 - info.gamma) / c3;
            let eta = (2.0 + 5.0 * info.n_actions as f64) / info.mu_tilde
                * ratio
                * (1.0 + ratio).powi(k as i32 + 1);
            Ok(Some(eta))
        }
        StepSchedule::PgAdaptive { c_adapt } => {
            let rows = info.weighted_adv.ok_or_else(|| {
                Error::Config("pg-adaptive schedule needs the weighted advantages".into())
            })?;
            let m = info.n_actions;
            let mut min_scale = f64::INFINITY;
            for row in rows.chunks(m) {
                let max_pos = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                // S^k membership is exact positivity, no tolerance.
                if max_pos > 0.0 {
                    let max_abs = row.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
                    min_scale = min_scale.min(max_abs);
                }
            }
            if min_scale.is_infinite() {
                Ok(None)
            } else {
                Ok(Some(c_adapt / min_scale))
            }
        }
    }
}

/// The step-size threshold for entropy softmax PG: the unique positive root of
/// exp(-2x(1 + tau log|A|)/(1-gamma)^2) - tau x / (2(1-gamma)) = 0, located by
/// bracketed bisection to |f(beta)| <= 1e-12. The bracket is capped at 1e9;
/// the cap itself is returned when tau is small enough that the root exceeds it.
pub fn beta_threshold(tau: f64, gamma: f64, n_actions: usize) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::TauNonPositive(tau));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    if n_actions < 2 {
        return Err(Error::Dimension("beta_threshold needs |A| >= 2".into()));
    }
    let alpha = (1.0 + tau * (n_actions as f64).ln()) / ((1.0 - gamma) * (1.0 - gamma));
    let f = |x: f64| (-2.0 * x * alpha).exp() - tau * x / (2.0 * (1.0 - gamma));
    const CAP: f64 = 1e9;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi >= CAP {
            return Ok(CAP);
        }
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fm = f(mid);
        if fm.abs() <= 1e-12 {
            break;
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let next = 0.5 * (lo + hi);
        if next == mid {
            break;
        }
        mid = next;
    }
    Ok(mid)
}
