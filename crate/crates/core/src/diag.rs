//! Per-iteration verification of the identities and improvement bounds each
//! method satisfies, trace records, KL utilities, and the covariance
//! property checks.
//!
//! Every inequality is recorded as a signed slack, oriented so that a
//! nonnegative value means the bound held at that iteration. Identities are
//! recorded as minus the largest absolute residual. The pass threshold is
//! [`PASS_TOL`]: a slack at or above `-PASS_TOL` absorbs solver round-off.

use std::collections::BTreeMap;

use crate::algo::{Method, MethodState};
use crate::error::{Error, Result};
use crate::eval::{visitation, OptimalitySummary};
use crate::mdp::{DistributionOverStates, TabularMdp};
use crate::policy::Policy;
use crate::rng::SplitMix64;
use crate::schedule::{beta_threshold, StepSchedule};
pub use crate::util::kl;

/// Absolute tolerance on signed slacks: a check passes when its minimum
/// slack is at least `-PASS_TOL`.
pub const PASS_TOL: f64 = 1e-9;

/// Named per-iteration (or trace-level) verification checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Check {
    /// Projected-PG improvement lower bound through max_a A^k.
    PpgImprovement,
    /// Finite termination: below the gap threshold the next iterate is optimal.
    PpgTermination,
    /// Softmax-PG improvement identity (pairwise covariance form).
    PgIdentity,
    /// Softmax-PG improvement lower bound through max |pi A|.
    PgLower,
    /// Softmax-PG improvement upper bound through max |pi A|^2.
    PgUpper,
    /// Constant-step sublinear bound k (V*(rho)-V^k(rho)) <= constant.
    PgSublinear,
    /// NPG improvement lower bound I (any iterate).
    NpgLowerI,
    /// NPG improvement lower bound II (near-optimal phase).
    NpgLowerII,
    /// NPG per-iteration linear factor from the two-phase constants.
    NpgRateProduct,
    /// NPG identity: improvement = (KL(next||prev) + KL(prev||next))/eta.
    NpgKlIdentity,
    /// NPG identity against a fixed optimal policy.
    NpgOptKlIdentity,
    /// Entropy-PG improvement lower bound, valid for eta below the beta threshold.
    EntropyPgLower,
    /// Entropy-NPG identity with the (eta tau + 1)/eta weighting.
    EntropyNpgIdentity,
    /// Entropy-NPG two-sided local sandwich with measured ratio deviations.
    EntropyNpgSandwich,
    /// Soft-PI per-step quadratic contraction.
    SoftPiQuadratic,
    /// Soft-PI doubly exponential envelope from the quadratic phase.
    SoftPiEnvelope,
    /// Linear recursion: gap contraction from the per-state improvement ratio.
    LinearRecursion,
    /// Sandwich between L_k^* and the optimal-visitation-weighted max advantage.
    LstarSandwich,
    /// d_rho^pi(s) >= (1-gamma) rho(s) elementwise.
    VisitationLower,
    /// V^{k+1}(s) >= V^k(s) elementwise.
    Monotone,
}

pub const ALL_CHECKS: [Check; 20] = [
    Check::PpgImprovement,
    Check::PpgTermination,
    Check::PgIdentity,
    Check::PgLower,
    Check::PgUpper,
    Check::PgSublinear,
    Check::NpgLowerI,
    Check::NpgLowerII,
    Check::NpgRateProduct,
    Check::NpgKlIdentity,
    Check::NpgOptKlIdentity,
    Check::EntropyPgLower,
    Check::EntropyNpgIdentity,
    Check::EntropyNpgSandwich,
    Check::SoftPiQuadratic,
    Check::SoftPiEnvelope,
    Check::LinearRecursion,
    Check::LstarSandwich,
    Check::VisitationLower,
    Check::Monotone,
];

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::PpgImprovement => "ppg-improvement",
            Check::PpgTermination => "ppg-termination",
            Check::PgIdentity => "pg-identity",
            Check::PgLower => "pg-lower",
            Check::PgUpper => "pg-upper",
            Check::PgSublinear => "pg-sublinear",
            Check::NpgLowerI => "npg-lower-i",
            Check::NpgLowerII => "npg-lower-ii",
            Check::NpgRateProduct => "npg-rate-product",
            Check::NpgKlIdentity => "npg-kl-identity",
            Check::NpgOptKlIdentity => "npg-opt-kl-identity",
            Check::EntropyPgLower => "entropy-pg-lower",
            Check::EntropyNpgIdentity => "entropy-npg-identity",
            Check::EntropyNpgSandwich => "entropy-npg-sandwich",
            Check::SoftPiQuadratic => "softpi-quadratic",
            Check::SoftPiEnvelope => "softpi-envelope",
            Check::LinearRecursion => "linear-recursion",
            Check::LstarSandwich => "lstar-sandwich",
            Check::VisitationLower => "visitation-lower",
            Check::Monotone => "monotone",
        }
    }

    pub fn parse(name: &str) -> Result<Check> {
        ALL_CHECKS
            .iter()
            .copied()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::UnknownCheck(name.to_string()))
    }

    /// Whether the check is defined for the given method.
    pub fn applicable(self, method: &Method) -> bool {
        match self {
            Check::PpgImprovement | Check::PpgTermination => {
                matches!(method, Method::Ppg { .. })
            }
            Check::PgIdentity | Check::PgLower | Check::PgUpper => {
                matches!(method, Method::SoftmaxPg { .. })
            }
            Check::PgSublinear => matches!(
                method,
                Method::SoftmaxPg {
                    schedule: StepSchedule::Constant { .. }
                }
            ),
            Check::NpgLowerI
            | Check::NpgLowerII
            | Check::NpgRateProduct
            | Check::NpgKlIdentity
            | Check::NpgOptKlIdentity => matches!(method, Method::SoftmaxNpg { .. }),
            Check::EntropyPgLower => matches!(method, Method::EntropyPg { .. }),
            Check::EntropyNpgIdentity | Check::EntropyNpgSandwich => {
                matches!(method, Method::EntropyNpg { .. })
            }
            Check::SoftPiQuadratic | Check::SoftPiEnvelope => {
                matches!(method, Method::SoftPi { .. })
            }
            Check::LinearRecursion | Check::LstarSandwich => !method.is_entropy(),
            Check::VisitationLower | Check::Monotone => true,
        }
    }

    /// Applicability from a method name alone (trace loaded from disk).
    /// Unknown method names fall back to `true`.
    pub fn applies_to_name(self, method_name: &str) -> bool {
        let m = match method_name {
            "pi" => Method::Pi,
            "ppg" => Method::Ppg {
                schedule: StepSchedule::Constant { eta: 1.0 },
            },
            "pg" => Method::SoftmaxPg {
                schedule: StepSchedule::Constant { eta: 1.0 },
            },
            "npg" => Method::SoftmaxNpg { eta: 1.0 },
            "entropy-pg" => Method::EntropyPg { eta: 1.0, tau: 1.0 },
            "entropy-npg" => Method::EntropyNpg { eta: 1.0, tau: 1.0 },
            "soft-pi" => Method::SoftPi { tau: 1.0 },
            _ => return true,
        };
        self.applicable(&m)
    }
}

/// One iteration of a run: gaps, step-quality quantities, and the signed
/// slacks of every requested check (`None` = skipped at this iteration).
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub k: usize,
    pub eta_k: Option<f64>,
    /// ||V* - V^k||_inf (soft values on entropy runs).
    pub v_gap_inf: f64,
    /// V*(rho) - V^k(rho), the weighted error L_k^*.
    pub v_gap_rho: f64,
    /// L_k^{k+1}: the optimal-visitation-weighted one-step improvement.
    pub l_k_kp1: Option<f64>,
    /// max_s of the policy mass on non-optimal actions (unregularized runs).
    pub b_max: Option<f64>,
    /// E_{s ~ d_rho^k}[KL(pi^k_s || pi*_s)] (entropy runs).
    pub kl_to_opt: Option<f64>,
    pub slacks: BTreeMap<Check, Option<f64>>,
}

/// A full run: per-iteration records plus the metadata needed to interpret
/// them. `policies` (and the optimal policy) are retained only when the run
/// asked for them; probes such as [`kl_ratio_probe`] need those.
#[derive(Clone, Debug)]
pub struct Trace {
    pub records: Vec<IterationRecord>,
    pub checks: Vec<Check>,
    pub method_name: String,
    pub method_desc: String,
    pub gamma: f64,
    pub tau: Option<f64>,
    pub fingerprint: u64,
    pub policies: Option<Vec<Policy>>,
    pub opt_policy: Option<Policy>,
    /// Iteration at which a non-finite value appeared, if any.
    pub diverged_at: Option<usize>,
}

impl Trace {
    /// Bare trace around records only; used by tests and the CSV reader.
    pub fn synthetic(records: Vec<IterationRecord>) -> Self {
        Trace {
            records,
            checks: Vec::new(),
            method_name: String::new(),
            method_desc: String::new(),
            gamma: f64::NAN,
            tau: None,
            fingerprint: 0,
            policies: None,
            opt_policy: None,
            diverged_at: None,
        }
    }

    /// kappa estimate: min over recorded (k, s) of 1 - b_s^k, i.e.
    /// 1 - max_k b_max^k. A finite-trace estimate, not the true infimum.
    pub fn kappa_estimate(&self) -> Option<f64> {
        let worst = self
            .records
            .iter()
            .filter_map(|r| r.b_max)
            .fold(f64::NAN, f64::max);
        if worst.is_nan() {
            None
        } else {
            Some(1.0 - worst)
        }
    }

    /// Running kappa estimate per record (non-increasing along the trace).
    pub fn kappa_running(&self) -> Vec<Option<f64>> {
        let mut worst = f64::NAN;
        self.records
            .iter()
            .map(|r| {
                if let Some(b) = r.b_max {
                    worst = if worst.is_nan() { b } else { worst.max(b) };
                }
                if worst.is_nan() {
                    None
                } else {
                    Some(1.0 - worst)
                }
            })
            .collect()
    }
}

/// Everything a per-step check can consult about the transition k -> k+1.
pub struct StepCtx<'a> {
    pub mdp: &'a TabularMdp,
    pub summary: &'a OptimalitySummary,
    pub prev: &'a MethodState,
    pub next: &'a MethodState,
    pub mu: &'a DistributionOverStates,
    pub rho: &'a DistributionOverStates,
    /// Visitation of the chosen optimal policy from rho.
    pub d_rho_star: &'a DistributionOverStates,
    pub eta_k: Option<f64>,
    pub method: &'a Method,
}

/// Precomputed per-iteration quantities shared across checks.
struct StepEval {
    imp: Vec<f64>,
    max_adv: Vec<f64>,
    weighted: Vec<f64>,
    eta_s: Option<Vec<f64>>,
    d_rho_prev: DistributionOverStates,
    b_prev: Option<Vec<f64>>,
    gap_inf: f64,
    gap_rho: f64,
    gap_next_inf: f64,
    gap_next_rho: f64,
    l_k_kp1: f64,
}

fn build_step_eval(ctx: &StepCtx) -> Result<StepEval> {
    let (n, m) = (ctx.mdp.n_states(), ctx.mdp.n_actions());
    let gamma = ctx.mdp.gamma();
    let entropy_run = ctx.method.is_entropy();

    let mut imp = vec![0.0; n];
    for s in 0..n {
        let mut acc = 0.0;
        for a in 0..m {
            acc += ctx.next.policy.p(s, a) * ctx.prev.adv.a(s, a);
        }
        if entropy_run {
            let tau = ctx.method.tau().expect("entropy method has tau");
            acc -= tau * kl(ctx.next.policy.row(s), ctx.prev.policy.row(s));
        }
        imp[s] = acc;
    }

    let max_adv = (0..n)
        .map(|s| {
            ctx.prev
                .adv
                .row(s)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let weighted = ctx.prev.weighted_adv();

    let eta_s = match (ctx.eta_k, ctx.method) {
        (Some(eta), Method::Ppg { .. } | Method::SoftmaxPg { .. } | Method::EntropyPg { .. }) => {
            Some(crate::algo::effective_step_sizes(
                ctx.mdp,
                &ctx.prev.policy,
                eta,
                ctx.mu,
            )?)
        }
        _ => None,
    };

    let d_rho_prev = visitation(ctx.mdp, &ctx.prev.policy, ctx.rho)?;

    let b_prev = if entropy_run {
        None
    } else {
        Some(
            (0..n)
                .map(|s| ctx.summary.nonoptimal_row_mass(&ctx.prev.policy, s))
                .collect(),
        )
    };

    let star = &ctx.summary.v_star.values;
    let gap_inf = crate::util::sup_dist(star, &ctx.prev.v.values);
    let gap_next_inf = crate::util::sup_dist(star, &ctx.next.v.values);
    let gap_rho = ctx.rho.expect(star) - ctx.rho.expect(&ctx.prev.v.values);
    let gap_next_rho = ctx.rho.expect(star) - ctx.rho.expect(&ctx.next.v.values);
    let l_k_kp1 = ctx.d_rho_star.expect(&imp) / (1.0 - gamma);

    Ok(StepEval {
        imp,
        max_adv,
        weighted,
        eta_s,
        d_rho_prev,
        b_prev,
        gap_inf,
        gap_rho,
        gap_next_inf,
        gap_next_rho,
        l_k_kp1,
    })
}

/// Builds the record for the transition `prev -> next`, evaluating the slack
/// of every requested check that applies to the method. Checks that do not
/// apply, or whose preconditions are not met at this iteration, are stored
/// as `None`.
pub fn record_iteration(ctx: &StepCtx, checks: &[Check]) -> Result<IterationRecord> {
    let ws = build_step_eval(ctx)?;
    let mut slacks = BTreeMap::new();
    for &check in checks {
        let slack = if check.applicable(ctx.method) {
            step_slack(check, ctx, &ws)?
        } else {
            None
        };
        slacks.insert(check, slack);
    }
    let kl_to_opt = trace_kl_to_opt(ctx.method, ctx.prev, ctx.summary, &ws.d_rho_prev);
    Ok(IterationRecord {
        k: ctx.prev.iteration,
        eta_k: ctx.eta_k,
        v_gap_inf: ws.gap_inf,
        v_gap_rho: ws.gap_rho,
        l_k_kp1: Some(ws.l_k_kp1),
        b_max: ws
            .b_prev
            .as_ref()
            .map(|b| b.iter().copied().fold(0.0, f64::max)),
        kl_to_opt,
        slacks,
    })
}

/// Record for a final iterate that is not stepped (stop condition reached or
/// the following step blew up). Step-dependent fields stay empty.
pub fn terminal_record(
    mdp: &TabularMdp,
    summary: &OptimalitySummary,
    state: &MethodState,
    rho: &DistributionOverStates,
    method: &Method,
    checks: &[Check],
) -> Result<IterationRecord> {
    let star = &summary.v_star.values;
    let gap_inf = crate::util::sup_dist(star, &state.v.values);
    let gap_rho = rho.expect(star) - rho.expect(&state.v.values);
    let b_max = if method.is_entropy() {
        None
    } else {
        Some(
            (0..mdp.n_states())
                .map(|s| summary.nonoptimal_row_mass(&state.policy, s))
                .fold(0.0, f64::max),
        )
    };
    let d_rho = visitation(mdp, &state.policy, rho)?;
    let kl_to_opt = trace_kl_to_opt(method, state, summary, &d_rho);
    let slacks = checks.iter().map(|&c| (c, None)).collect();
    Ok(IterationRecord {
        k: state.iteration,
        eta_k: None,
        v_gap_inf: gap_inf,
        v_gap_rho: gap_rho,
        l_k_kp1: None,
        b_max,
        kl_to_opt,
        slacks,
    })
}

fn trace_kl_to_opt(
    method: &Method,
    state: &MethodState,
    summary: &OptimalitySummary,
    d_rho: &DistributionOverStates,
) -> Option<f64> {
    if !method.is_entropy() {
        return None;
    }
    let per_state: Vec<f64> = (0..state.policy.n_states())
        .map(|s| kl(state.policy.row(s), summary.optimal_policy.row(s)))
        .collect();
    Some(d_rho.expect(&per_state))
}

/// Exact argmax set of a row (no tolerance) plus the gap to the runner-up.
/// The gap is +inf when every action attains the maximum.
fn argmax_set_and_gap(row: &[f64]) -> (Vec<usize>, f64, f64) {
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let set: Vec<usize> = (0..row.len()).filter(|&a| row[a] == mx).collect();
    let gap = if set.len() == row.len() {
        f64::INFINITY
    } else {
        let second = row
            .iter()
            .enumerate()
            .filter(|(a, _)| !set.contains(a))
            .map(|(_, &x)| x)
            .fold(f64::NEG_INFINITY, f64::max);
        mx - second
    };
    (set, mx, gap)
}

fn step_slack(check: Check, ctx: &StepCtx, ws: &StepEval) -> Result<Option<f64>> {
    let (n, m) = (ctx.mdp.n_states(), ctx.mdp.n_actions());
    let gamma = ctx.mdp.gamma();
    let mf = m as f64;
    let slack = match check {
        Check::PpgImprovement => {
            let eta_s = ws.eta_s.as_ref().expect("ppg has per-state steps");
            let mut worst = f64::INFINITY;
            for s in 0..n {
                let mx = ws.max_adv[s];
                let bound = if mx > 0.0 {
                    mx * mx / (mx + (2.0 + 5.0 * mf) / eta_s[s])
                } else {
                    0.0
                };
                worst = worst.min(ws.imp[s] - bound);
            }
            Some(worst)
        }
        Check::PpgTermination => {
            let delta = ctx.summary.gap_delta;
            let eta_s = ws.eta_s.as_ref().expect("ppg has per-state steps");
            let threshold = if delta.is_finite() {
                let eta_min = eta_s.iter().copied().fold(f64::INFINITY, f64::min);
                0.5 * delta * (eta_min * delta) / (1.0 + eta_min * delta)
            } else {
                f64::INFINITY
            };
            if ws.gap_inf <= threshold {
                let worst = (0..n)
                    .map(|s| ctx.summary.nonoptimal_row_mass(&ctx.next.policy, s))
                    .fold(0.0, f64::max);
                Some(-worst)
            } else {
                None
            }
        }
        Check::PgIdentity => {
            let eta_s = ws.eta_s.as_ref().expect("pg has per-state steps");
            let mut worst = 0.0f64;
            for s in 0..n {
                let w = &ws.weighted[s * m..(s + 1) * m];
                let g: Vec<f64> = w.iter().map(|&x| eta_s[s] * x).collect();
                let top = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = g.iter().map(|&x| (x - top).exp()).collect();
                let z: f64 = ctx
                    .prev
                    .policy
                    .row(s)
                    .iter()
                    .zip(&e)
                    .map(|(&p, &ea)| p * ea)
                    .sum();
                let mut pair = 0.0;
                for a in 0..m {
                    for b in 0..m {
                        pair += (w[a] - w[b]) * (e[a] - e[b]);
                    }
                }
                let rhs = pair / (2.0 * mf * z);
                worst = worst.max((ws.imp[s] - rhs).abs());
            }
            Some(-worst)
        }
        Check::PgLower => {
            let eta_k = ctx.eta_k.expect("pg steps carry eta");
            let mu_tilde = ctx.mu.min_weight();
            let mut worst = f64::INFINITY;
            for s in 0..n {
                let w = crate::util::max_abs(&ws.weighted[s * m..(s + 1) * m]);
                let bound = w * (1.0 - (-eta_k * mu_tilde * w).exp()) / mf;
                worst = worst.min(ws.imp[s] - bound);
            }
            Some(worst)
        }
        Check::PgUpper => {
            let eta_k = ctx.eta_k.expect("pg steps carry eta");
            let c =
                ((2.0 * eta_k / ((1.0 - gamma) * (1.0 - gamma))).exp() - 1.0) * mf * (1.0 - gamma);
            let mut worst = f64::INFINITY;
            for s in 0..n {
                let w = crate::util::max_abs(&ws.weighted[s * m..(s + 1) * m]);
                worst = worst.min(c * w * w - ws.imp[s]);
            }
            Some(worst)
        }
        Check::PgSublinear | Check::SoftPiEnvelope => None, // trace-level, filled after the run
        Check::NpgLowerI => {
            let eta = ctx.method.fixed_eta().expect("npg has fixed eta");
            let mut worst = f64::INFINITY;
            for s in 0..n {
                let (set, mx, gap) = argmax_set_and_gap(ctx.prev.adv.row(s));
                let pmass: f64 = set.iter().map(|&a| ctx.prev.policy.p(s, a)).sum();
                let bracket = 1.0 - 1.0 / (1.0 + pmass * ((eta * gap).exp() - 1.0));
                worst = worst.min(ws.imp[s] - bracket * mx);
            }
            Some(worst)
        }
        Check::NpgLowerII => {
            let eta = ctx.method.fixed_eta().expect("npg has fixed eta");
            let delta = ctx.summary.gap_delta;
            if delta.is_finite() && ws.gap_inf > 0.25 * delta {
                None
            } else {
                let eps = (0.25 * delta).min(ws.gap_inf);
                let factor = (eta * (delta - eps)).exp() - 1.0;
                let b = ws.b_prev.as_ref().expect("unregularized run");
                let mut worst = f64::INFINITY;
                for s in 0..n {
                    let keep = 1.0 - b[s];
                    let xi_a: f64 = ctx.summary.optimal_action_sets[s]
                        .iter()
                        .map(|&a| ctx.prev.policy.p(s, a) * ctx.prev.adv.a(s, a))
                        .sum::<f64>()
                        / keep;
                    let bracket = 1.0 - 1.0 / (1.0 + keep * factor);
                    worst = worst.min(ws.imp[s] - bracket * xi_a);
                }
                Some(worst)
            }
        }
        Check::NpgRateProduct => {
            let eta = ctx.method.fixed_eta().expect("npg has fixed eta");
            let delta = ctx.summary.gap_delta;
            let phase_one = delta.is_finite() && ws.gap_inf > 0.25 * delta;
            let b = ws.b_prev.as_ref().expect("unregularized run");
            let mut c_min = f64::INFINITY;
            for s in 0..n {
                let c_s = if phase_one {
                    let (set, _, gap) = argmax_set_and_gap(ctx.prev.adv.row(s));
                    let pmass: f64 = set.iter().map(|&a| ctx.prev.policy.p(s, a)).sum();
                    pmass * ((eta * gap).exp() - 1.0)
                } else {
                    let eps = (0.25 * delta).min(ws.gap_inf);
                    (1.0 - b[s]) * ((eta * (delta - eps)).exp() - 1.0)
                };
                c_min = c_min.min(c_s);
            }
            let factor = 1.0 - (1.0 - gamma) * (1.0 - 1.0 / (1.0 + c_min));
            Some(factor * ws.gap_inf - ws.gap_next_inf)
        }
        Check::NpgKlIdentity => {
            let eta = ctx.method.fixed_eta().expect("npg has fixed eta");
            let mut worst = 0.0f64;
            for s in 0..n {
                let forward = kl(ctx.next.policy.row(s), ctx.prev.policy.row(s));
                let backward = kl(ctx.prev.policy.row(s), ctx.next.policy.row(s));
                worst = worst.max((ws.imp[s] - (forward + backward) / eta).abs());
            }
            Some(-worst)
        }
        Check::NpgOptKlIdentity => {
            let eta = ctx.method.fixed_eta().expect("npg has fixed eta");
            let star = &ctx.summary.optimal_policy;
            let mut worst = 0.0f64;
            for s in 0..n {
                let opt_imp: f64 = (0..m).map(|a| star.p(s, a) * ctx.prev.adv.a(s, a)).sum();
                let correction = (kl(star.row(s), ctx.next.policy.row(s))
                    - kl(star.row(s), ctx.prev.policy.row(s))
                    + kl(ctx.next.policy.row(s), ctx.prev.policy.row(s)))
                    / eta;
                worst = worst.max((ws.imp[s] - opt_imp - correction).abs());
            }
            Some(-worst)
        }
        Check::EntropyPgLower => {
            let eta = ctx.method.fixed_eta().expect("entropy pg has fixed eta");
            let tau = ctx.method.tau().expect("entropy method");
            let beta = beta_threshold(tau, gamma, m)?;
            if eta >= beta {
                None
            } else {
                let one_m_g = 1.0 - gamma;
                let bracket = (-2.0 * eta * (1.0 + tau * mf.ln()) / (one_m_g * one_m_g)).exp()
                    - tau * eta / (2.0 * one_m_g);
                let mu_tilde = ctx.mu.min_weight();
                let mut worst = f64::INFINITY;
                for s in 0..n {
                    let w = crate::util::max_abs(&ws.weighted[s * m..(s + 1) * m]);
                    worst = worst.min(ws.imp[s] - eta * mu_tilde * bracket * w * w);
                }
                Some(worst)
            }
        }
        Check::EntropyNpgIdentity => {
            let eta = ctx.method.fixed_eta().expect("entropy npg has fixed eta");
            let tau = ctx.method.tau().expect("entropy method");
            let mut worst = 0.0f64;
            for s in 0..n {
                let forward = kl(ctx.next.policy.row(s), ctx.prev.policy.row(s));
                let backward = kl(ctx.prev.policy.row(s), ctx.next.policy.row(s));
                let rhs = forward / eta + (eta * tau + 1.0) / eta * backward;
                worst = worst.max((ws.imp[s] - rhs).abs());
            }
            Some(-worst)
        }
        Check::EntropyNpgSandwich => entropy_npg_sandwich_slack(ctx, ws)?,
        Check::SoftPiQuadratic => {
            let tau = ctx.method.tau().expect("soft pi has tau");
            let c = gamma * gamma / (2.0 * tau * (1.0 - gamma));
            Some(c * ws.gap_inf * ws.gap_inf - ws.gap_next_inf)
        }
        Check::LinearRecursion => {
            let mut c = f64::INFINITY;
            for s in 0..n {
                if ws.max_adv[s] > 1e-12 {
                    c = c.min(ws.imp[s] / ws.max_adv[s]);
                }
            }
            if !c.is_finite() || c <= 0.0 {
                None
            } else {
                let factor = 1.0 - (1.0 - gamma) * c.min(1.0);
                Some(factor * ws.gap_inf - ws.gap_next_inf)
            }
        }
        Check::LstarSandwich => {
            let rho_tilde = ctx.rho.min_weight();
            if rho_tilde <= 0.0 {
                None
            } else {
                let mid = ctx.d_rho_star.expect(&ws.max_adv) / (1.0 - gamma);
                let upper = ws.gap_rho / ((1.0 - gamma) * rho_tilde);
                Some((mid - ws.gap_rho).min(upper - mid))
            }
        }
        Check::VisitationLower => {
            let mut worst = f64::INFINITY;
            for s in 0..n {
                worst = worst.min(ws.d_rho_prev.w(s) - (1.0 - gamma) * ctx.rho.w(s));
            }
            Some(worst)
        }
        Check::Monotone => {
            let mut worst = f64::INFINITY;
            for s in 0..n {
                worst = worst.min(ctx.next.v.v(s) - ctx.prev.v.v(s));
            }
            Some(worst)
        }
    };
    Ok(slack)
}

/// Two-sided local sandwich for entropy NPG, instantiated with the measured
/// KL-ratio deviation (epsilon) and visitation-ratio deviation (delta) at
/// this iteration. Skipped when a needed denominator has converged to zero
/// or a measured deviation reaches 1 (the bound's premises fail there).
fn entropy_npg_sandwich_slack(ctx: &StepCtx, ws: &StepEval) -> Result<Option<f64>> {
    let n = ctx.mdp.n_states();
    let eta = ctx.method.fixed_eta().expect("entropy npg has fixed eta");
    let tau = ctx.method.tau().expect("entropy method");
    let star = &ctx.summary.optimal_policy;
    const DENOM_FLOOR: f64 = 1e-16;
    let mut eps: f64 = 0.0;
    for s in 0..n {
        let prev = ctx.prev.policy.row(s);
        let next = ctx.next.policy.row(s);
        let opt = star.row(s);
        let pairs = [
            (kl(prev, next), kl(next, prev)),
            (kl(opt, prev), kl(prev, opt)),
            (kl(opt, next), kl(next, opt)),
        ];
        for (num, den) in pairs {
            if den < DENOM_FLOOR {
                return Ok(None);
            }
            eps = eps.max((num / den - 1.0).abs());
        }
    }
    let d_next = visitation(ctx.mdp, &ctx.next.policy, ctx.rho)?;
    let mut delta: f64 = 0.0;
    for s in 0..n {
        let dstar = ctx.d_rho_star.w(s);
        delta = delta.max((dstar / ws.d_rho_prev.w(s) - 1.0).abs());
        delta = delta.max((dstar / d_next.w(s) - 1.0).abs());
    }
    if eps >= 1.0 || delta >= 1.0 {
        return Ok(None);
    }
    let et = eta * tau;
    let c1 = et + 1.0;
    let lower = (1.0 + 1.0 / (c1 * (1.0 + eps)))
        * ((1.0 - (1.0 + eps) * (1.0 + delta) / et) * ws.gap_rho
            + (1.0 + 1.0 / et) * (1.0 - eps) * (1.0 - delta) * ws.gap_next_rho);
    let upper = (1.0 + 1.0 / (c1 * (1.0 - eps)))
        * ((1.0 - (1.0 - eps) * (1.0 - delta) / et) * ws.gap_rho
            + (1.0 + 1.0 / et) * (1.0 + eps) * (1.0 + delta) * ws.gap_next_rho);
    Ok(Some((ws.l_k_kp1 - lower).min(upper - ws.l_k_kp1)))
}

/// Fills the soft-PI envelope slacks over a finished trace: for every
/// recorded k at or past the phase switch k0, the gap must sit below
/// (2 tau (1-gamma)/gamma^2) * gamma^(2^(k-k0)). Needs gamma > 0.
pub fn fill_softpi_envelope(trace: &mut Trace, gamma: f64, tau: f64) {
    if gamma <= 0.0 || trace.records.is_empty() {
        return;
    }
    let envelope = 2.0 * tau * (1.0 - gamma) / (gamma * gamma);
    let a0 = trace.records[0].v_gap_inf / envelope;
    let k0 = if a0 <= 1.0 {
        1.0
    } else {
        2.0 + a0.ln() / (1.0 / gamma).ln()
    };
    for rec in trace.records.iter_mut() {
        let kf = rec.k as f64;
        if kf >= k0 {
            let bound = envelope * (2f64.powf(kf - k0) * gamma.ln()).exp();
            rec.slacks
                .insert(Check::SoftPiEnvelope, Some(bound - rec.v_gap_inf));
        }
    }
}

/// Parameters of the constant-step sublinear bound for softmax PG.
pub struct SublinearParams {
    pub rho_tilde: f64,
    pub mu_tilde: f64,
    pub eta: f64,
    pub n_actions: usize,
    /// max_s |A_s^*| of the problem.
    pub max_opt_set: usize,
}

/// Fills the sublinear-bound slacks k*(V*(rho)-V^k(rho)) <= B over a
/// finished trace, with B built from the trace-estimated kappa.
pub fn fill_pg_sublinear(trace: &mut Trace, gamma: f64, params: &SublinearParams) {
    let Some(kappa) = trace.kappa_estimate() else {
        return;
    };
    if kappa <= 0.0 || params.rho_tilde <= 0.0 || params.mu_tilde <= 0.0 {
        return;
    }
    let one_m_g = 1.0 - gamma;
    let bound = 1.0 / (params.rho_tilde * one_m_g.powi(3))
        * (params.n_actions as f64 / (kappa * kappa))
        * (params.max_opt_set as f64).powi(2)
        * (1.0 + one_m_g / (params.eta * params.mu_tilde));
    for rec in trace.records.iter_mut() {
        if rec.k >= 1 {
            rec.slacks.insert(
                Check::PgSublinear,
                Some(bound / rec.k as f64 - rec.v_gap_rho),
            );
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

/// Summary of one check over a whole trace.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub check: Check,
    pub status: CheckStatus,
    /// Iterations with an evaluated slack / iterations skipped.
    pub evaluated: usize,
    pub skipped: usize,
    pub min_slack: Option<f64>,
    pub argmin_k: Option<usize>,
    pub first_violation: Option<usize>,
    pub note: &'static str,
}

impl CheckReport {
    /// One-line rendering: name, min slack, argmin iteration, verdict.
    pub fn line(&self) -> String {
        let verdict = match self.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "skipped",
        };
        match self.min_slack {
            Some(s) => format!(
                "{:<22} min_slack={:>13.6e} argmin_k={:<6} {}{}",
                self.check.name(),
                s,
                self.argmin_k.map_or_else(|| "-".into(), |k| k.to_string()),
                verdict,
                if self.note.is_empty() {
                    String::new()
                } else {
                    format!(": {}", self.note)
                }
            ),
            None => format!(
                "{:<22} min_slack={:>13} argmin_k={:<6} {}{}",
                self.check.name(),
                "-",
                "-",
                verdict,
                if self.note.is_empty() {
                    String::new()
                } else {
                    format!(": {}", self.note)
                }
            ),
        }
    }
}

/// Summarizes the recorded slacks of `check` over `trace`: minimum slack,
/// its iteration, the first violation of the pass tolerance, and a verdict.
/// Incompatible or unrecorded checks come back as `Skipped`.
pub fn check_inequality(check: Check, trace: &Trace) -> CheckReport {
    if !trace.method_name.is_empty() && !check.applies_to_name(&trace.method_name) {
        return CheckReport {
            check,
            status: CheckStatus::Skipped,
            evaluated: 0,
            skipped: trace.records.len(),
            min_slack: None,
            argmin_k: None,
            first_violation: None,
            note: "incompatible with the method",
        };
    }
    if !trace.checks.contains(&check) {
        return CheckReport {
            check,
            status: CheckStatus::Skipped,
            evaluated: 0,
            skipped: trace.records.len(),
            min_slack: None,
            argmin_k: None,
            first_violation: None,
            note: "not recorded in this trace",
        };
    }
    let mut evaluated = 0;
    let mut skipped = 0;
    let mut min_slack = f64::INFINITY;
    let mut argmin_k = None;
    let mut first_violation = None;
    for rec in &trace.records {
        match rec.slacks.get(&check) {
            Some(Some(s)) => {
                evaluated += 1;
                if *s < min_slack {
                    min_slack = *s;
                    argmin_k = Some(rec.k);
                }
                if *s < -PASS_TOL && first_violation.is_none() {
                    first_violation = Some(rec.k);
                }
            }
            _ => skipped += 1,
        }
    }
    if evaluated == 0 {
        return CheckReport {
            check,
            status: CheckStatus::Pass,
            evaluated,
            skipped,
            min_slack: None,
            argmin_k: None,
            first_violation: None,
            note: "no applicable iterations",
        };
    }
    let status = if first_violation.is_some() {
        CheckStatus::Fail
    } else {
        CheckStatus::Pass
    };
    CheckReport {
        check,
        status,
        evaluated,
        skipped,
        min_slack: Some(min_slack),
        argmin_k,
        first_violation,
        note: "",
    }
}

/// The four KL-ratio deviations of one iteration, maximized over states.
#[derive(Clone, Copy, Debug)]
pub struct KlRatioPoint {
    pub k: usize,
    /// |KL(pi^k || pi^{k+1}) / KL(pi^{k+1} || pi^k) - 1|
    pub step_forward: f64,
    /// the reciprocal ratio's deviation
    pub step_backward: f64,
    /// |KL(pi^k || pi*) / KL(pi* || pi^k) - 1|
    pub opt_forward: f64,
    /// the reciprocal ratio's deviation
    pub opt_backward: f64,
}

impl KlRatioPoint {
    pub fn max_dev(&self) -> f64 {
        self.step_forward
            .max(self.step_backward)
            .max(self.opt_forward)
            .max(self.opt_backward)
    }
}

/// Empirically tracks the KL-ratio convergence along an entropy-NPG run with
/// stored policies. Iterations whose denominators have collapsed below 1e-16
/// (exact fixed points) are skipped.
pub fn kl_ratio_probe(trace: &Trace) -> Result<Vec<KlRatioPoint>> {
    let policies = trace
        .policies
        .as_ref()
        .ok_or_else(|| Error::Config("trace lacks stored policies".into()))?;
    let star = trace
        .opt_policy
        .as_ref()
        .ok_or_else(|| Error::Config("trace lacks the optimal policy".into()))?;
    const FLOOR: f64 = 1e-16;
    let mut out = Vec::new();
    for (k, pair) in policies.windows(2).enumerate() {
        let (cur, next) = (&pair[0], &pair[1]);
        let mut devs = [f64::NAN; 4];
        for s in 0..cur.n_states() {
            let p = cur.row(s);
            let q = next.row(s);
            let o = star.row(s);
            let ratios = [
                (kl(p, q), kl(q, p)),
                (kl(q, p), kl(p, q)),
                (kl(p, o), kl(o, p)),
                (kl(o, p), kl(p, o)),
            ];
            for (i, (num, den)) in ratios.iter().enumerate() {
                if *den >= FLOOR {
                    let dev = (num / den - 1.0).abs();
                    devs[i] = if devs[i].is_nan() {
                        dev
                    } else {
                        devs[i].max(dev)
                    };
                }
            }
        }
        if devs.iter().all(|d| !d.is_nan()) {
            out.push(KlRatioPoint {
                k,
                step_forward: devs[0],
                step_backward: devs[1],
                opt_forward: devs[2],
                opt_backward: devs[3],
            });
        }
    }
    Ok(out)
}

/// Report of the covariance property checks.
#[derive(Clone, Copy, Debug)]
pub struct CovarianceReport {
    pub trials: usize,
    /// max |Cov(f,g) - pair form| over the trials.
    pub max_identity_residual: f64,
    /// min Cov(f,g) over trials with monotone increasing f, g.
    pub min_monotone_cov: f64,
}

/// Exhaustive (no sampling) covariance checks on random finite-support
/// variables: the pairwise identity
/// Cov(f,g) = E[(f(X)-f(Y))(g(X)-g(Y))]/2 with Y an i.i.d. copy of X, and
/// nonnegativity of Cov(f,g) for monotone increasing f, g.
pub fn covariance_checks(seed: u64, trials: usize) -> CovarianceReport {
    let mut rng = SplitMix64::new(seed);
    let mut max_identity_residual = 0.0f64;
    let mut min_monotone_cov = f64::INFINITY;
    for _ in 0..trials {
        let support = 2 + (rng.next_below(7) as usize);
        let mut probs: Vec<f64> = (0..support).map(|_| rng.next_open01()).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);

        // Arbitrary f, g for the identity.
        let f: Vec<f64> = (0..support)
            .map(|_| 2.0 * rng.next_open01() - 1.0)
            .collect();
        let g: Vec<f64> = (0..support)
            .map(|_| 2.0 * rng.next_open01() - 1.0)
            .collect();
        let cov = exact_cov(&probs, &f, &g);
        let mut pair = 0.0;
        for i in 0..support {
            for j in 0..support {
                pair += probs[i] * probs[j] * (f[i] - f[j]) * (g[i] - g[j]);
            }
        }
        max_identity_residual = max_identity_residual.max((cov - 0.5 * pair).abs());

        // Monotone increasing f, g via cumulative positive increments.
        let mut fm = vec![2.0 * rng.next_open01() - 1.0];
        let mut gm = vec![2.0 * rng.next_open01() - 1.0];
        for i in 1..support {
            fm.push(fm[i - 1] + rng.next_open01());
            gm.push(gm[i - 1] + rng.next_open01());
        }
        min_monotone_cov = min_monotone_cov.min(exact_cov(&probs, &fm, &gm));
    }
    CovarianceReport {
        trials,
        max_identity_residual,
        min_monotone_cov,
    }
}

fn exact_cov(probs: &[f64], f: &[f64], g: &[f64]) -> f64 {
    let ef = crate::util::dot(probs, f);
    let eg = crate::util::dot(probs, g);
    let efg: f64 = probs
        .iter()
        .zip(f.iter().zip(g))
        .map(|(&p, (&fa, &ga))| p * fa * ga)
        .sum();
    efg - ef * eg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::MethodState;
    use crate::eval::optimal_values;
    use crate::mdp::two_arm_bandit;

    #[test]
    fn check_names_round_trip() {
        for c in ALL_CHECKS {
            assert_eq!(Check::parse(c.name()).unwrap(), c);
        }
        assert!(matches!(
            Check::parse("no-such-check"),
            Err(Error::UnknownCheck(_))
        ));
    }

    #[test]
    fn record_on_bandit_uniform_has_expected_gaps() {
        let b = two_arm_bandit();
        let summary = optimal_values(&b, 1e-12).unwrap();
        let mu = DistributionOverStates::uniform(1);
        let rho = DistributionOverStates::delta(1, 0);
        let d_star = visitation(&b, &summary.optimal_policy, &rho).unwrap();
        let prev = MethodState::evaluate(&b, Policy::uniform(1, 2), None, 0).unwrap();
        let method = Method::SoftmaxNpg { eta: 2.0f64.ln() };
        let next = crate::algo::method_step(&b, &prev, &method, &mu).unwrap();
        let ctx = StepCtx {
            mdp: &b,
            summary: &summary,
            prev: &prev,
            next: &next,
            mu: &mu,
            rho: &rho,
            d_rho_star: &d_star,
            eta_k: Some(2.0f64.ln()),
            method: &method,
        };
        let rec = record_iteration(&ctx, &[Check::NpgKlIdentity, Check::Monotone]).unwrap();
        assert!((rec.v_gap_rho - 0.5).abs() < 1e-14);
        assert!((rec.v_gap_inf - 0.5).abs() < 1e-14);
        assert_eq!(rec.b_max, Some(0.5));
        let identity = rec.slacks[&Check::NpgKlIdentity].unwrap();
        assert!(identity >= -1e-12, "identity slack {identity}");
        assert!(rec.slacks[&Check::Monotone].unwrap() >= 0.0);

        // Gap after the step follows the exact recurrence: 0.5 / 1.5 = 1/3.
        let term = terminal_record(&b, &summary, &next, &rho, &method, &[]).unwrap();
        assert!((term.v_gap_rho - 1.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn record_at_optimal_policy_is_all_zero() {
        let b = two_arm_bandit();
        let summary = optimal_values(&b, 1e-12).unwrap();
        let rho = DistributionOverStates::uniform(1);
        let opt = Policy::from_probs(1, 2, vec![1.0, 0.0]).unwrap();
        let state = MethodState::evaluate(&b, opt, None, 5).unwrap();
        let method = Method::Pi;
        let rec = terminal_record(&b, &summary, &state, &rho, &method, &[]).unwrap();
        assert!(rec.v_gap_rho.abs() < 1e-14);
        assert!(rec.v_gap_inf.abs() < 1e-14);
        assert_eq!(rec.b_max, Some(0.0));
    }

    #[test]
    fn covariance_examples() {
        // f = g = identity on a fair coin: both sides are Var = 0.25.
        let probs = [0.5, 0.5];
        let f = [0.0, 1.0];
        assert!((exact_cov(&probs, &f, &f) - 0.25).abs() < 1e-15);
        // Constant f: zero covariance with anything.
        let g = [0.3, 0.3];
        assert_eq!(exact_cov(&probs, &f, &g), 0.0);
        let report = covariance_checks(9, 200);
        assert!(report.max_identity_residual <= 1e-12);
        assert!(report.min_monotone_cov >= -1e-12);
    }

    #[test]
    fn kappa_estimate_tracks_worst_b() {
        let mut records = Vec::new();
        for (k, b) in [(0usize, 0.5f64), (1, 0.3), (2, 0.6), (3, 0.1)] {
            records.push(IterationRecord {
                k,
                eta_k: None,
                v_gap_inf: 1.0,
                v_gap_rho: 1.0,
                l_k_kp1: None,
                b_max: Some(b),
                kl_to_opt: None,
                slacks: Default::default(),
            });
        }
        let t = Trace::synthetic(records);
        assert_eq!(t.kappa_estimate(), Some(1.0 - 0.6));
        let running = t.kappa_running();
        assert_eq!(running[1], Some(0.5));
        assert_eq!(running[3], Some(0.4));
    }

    #[test]
    fn report_marks_incompatible_checks() {
        let mut t = Trace::synthetic(vec![]);
        t.method_name = "npg".into();
        let rep = check_inequality(Check::SoftPiQuadratic, &t);
        assert_eq!(rep.status, CheckStatus::Skipped);
        assert_eq!(rep.note, "incompatible with the method");
    }
}
