//! Experiment driver: iterates a method on an MDP, recording gaps and check
//! slacks each step until the stop condition, the iteration budget, the
//! adaptive-schedule converged signal, or a numeric blow-up.

use crate::algo::{method_step, Method, MethodState};
use crate::diag::{
    fill_pg_sublinear, fill_softpi_envelope, record_iteration, terminal_record, Check, StepCtx,
    SublinearParams, Trace,
};
use crate::error::{Error, Result};
use crate::eval::{optimal_values, soft_optimal, visitation, OptimalitySummary};
use crate::mdp::{DistributionOverStates, TabularMdp};
use crate::policy::Policy;
use crate::schedule::{schedule_eta, StepInfo, StepSchedule};

/// What to run and how long; defaults follow [`RunSpec::new`].
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub method: Method,
    /// Optimization measure; `None` = uniform.
    pub mu: Option<DistributionOverStates>,
    /// Evaluation measure; `None` = uniform (the default wiring is rho = mu).
    pub rho: Option<DistributionOverStates>,
    pub max_iters: usize,
    /// Stop once ||V* - V^k||_inf falls to this level.
    pub stop_gap: f64,
    pub checks: Vec<Check>,
    pub store_policies: bool,
    /// Accuracy of the optimal-value reference solve.
    pub opt_tol: f64,
    /// Start policy; `None` = uniform.
    pub initial_policy: Option<Policy>,
}

impl RunSpec {
    pub fn new(method: Method) -> Self {
        RunSpec {
            method,
            mu: None,
            rho: None,
            max_iters: 100,
            stop_gap: 0.0,
            checks: Vec::new(),
            store_policies: false,
            opt_tol: 1e-12,
            initial_policy: None,
        }
    }

    pub fn with_checks(mut self, checks: Vec<Check>) -> Self {
        self.checks = checks;
        self
    }

    pub fn with_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_stop_gap(mut self, stop_gap: f64) -> Self {
        self.stop_gap = stop_gap;
        self
    }
}

fn is_blowup(err: &Error) -> bool {
    matches!(
        err,
        Error::NonFinite(_)
            | Error::ZeroPolicyEntry { .. }
            | Error::PolicyRow { .. }
            | Error::SingularSystem
    )
}

/// Step size the run will use at iteration `k` of `state`; `Ok(None)` is the
/// adaptive rule's converged signal.
fn step_size_for(
    method: &Method,
    mdp: &TabularMdp,
    mu: &DistributionOverStates,
    state: &MethodState,
) -> Result<Option<f64>> {
    match method {
        Method::Pi => Ok(None),
        Method::SoftmaxNpg { eta }
        | Method::EntropyPg { eta, .. }
        | Method::EntropyNpg { eta, .. } => Ok(Some(*eta)),
        Method::SoftPi { .. } => Ok(None),
        Method::Ppg { schedule } => {
            let info = StepInfo {
                n_actions: mdp.n_actions(),
                gamma: mdp.gamma(),
                mu_tilde: mu.min_weight(),
                weighted_adv: None,
            };
            schedule_eta(schedule, state.iteration, &info)
        }
        Method::SoftmaxPg { schedule } => {
            let weighted = state.weighted_adv();
            let info = StepInfo {
                n_actions: mdp.n_actions(),
                gamma: mdp.gamma(),
                mu_tilde: mu.min_weight(),
                weighted_adv: Some(&weighted),
            };
            schedule_eta(schedule, state.iteration, &info)
        }
    }
}

/// Runs `spec.method` from the initial policy, producing a trace with one
/// record per iteration plus a terminal record for the last iterate.
///
/// A numeric blow-up (non-finite values, a policy row degenerating) does not
/// set an error: the trace is returned with `diverged_at` marking the
/// iteration that could not be completed.
pub fn run_experiment(mdp: &TabularMdp, spec: &RunSpec) -> Result<Trace> {
    spec.method.validate()?;
    if spec.max_iters < 1 {
        return Err(Error::Config("max_iters must be at least 1".into()));
    }
    if spec.stop_gap < 0.0 {
        return Err(Error::Config("stop_gap must be nonnegative".into()));
    }
    let n = mdp.n_states();
    let mu = spec
        .mu
        .clone()
        .unwrap_or_else(|| DistributionOverStates::uniform(n));
    let rho = spec
        .rho
        .clone()
        .unwrap_or_else(|| DistributionOverStates::uniform(n));
    if mu.len() != n || rho.len() != n {
        return Err(Error::Dimension("mu/rho length does not match MDP".into()));
    }

    let tau = spec.method.tau();
    let summary: OptimalitySummary = match tau {
        None => optimal_values(mdp, spec.opt_tol)?,
        Some(t) => soft_optimal(mdp, t, spec.opt_tol)?,
    };
    let d_rho_star = visitation(mdp, &summary.optimal_policy, &rho)?;

    let initial = spec
        .initial_policy
        .clone()
        .unwrap_or_else(|| Policy::uniform(n, mdp.n_actions()));
    let mut state = MethodState::evaluate(mdp, initial, tau, 0)?;

    let mut trace = Trace {
        records: Vec::new(),
        checks: {
            let mut cs = spec.checks.clone();
            cs.dedup();
            cs
        },
        method_name: spec.method.name().into(),
        method_desc: spec.method.describe(),
        gamma: mdp.gamma(),
        tau,
        fingerprint: mdp.fingerprint(),
        policies: spec.store_policies.then(Vec::new),
        opt_policy: spec.store_policies.then(|| summary.optimal_policy.clone()),
        diverged_at: None,
    };

    loop {
        if let Some(ps) = trace.policies.as_mut() {
            ps.push(state.policy.clone());
        }
        let gap_inf = summary.v_star.sup_dist(&state.v);
        let eta_k = step_size_for(&spec.method, mdp, &mu, &state)?;
        let adaptive_done = matches!(
            spec.method.schedule(),
            Some(StepSchedule::PgAdaptive { .. })
        ) && eta_k.is_none();
        if state.iteration >= spec.max_iters || gap_inf <= spec.stop_gap || adaptive_done {
            trace.records.push(terminal_record(
                mdp,
                &summary,
                &state,
                &rho,
                &spec.method,
                &trace.checks,
            )?);
            break;
        }
        let next = match method_step(mdp, &state, &spec.method, &mu) {
            Ok(next) if next.v.is_finite() && next.policy.is_finite() => next,
            Ok(_) => {
                trace.diverged_at = Some(state.iteration + 1);
                trace.records.push(terminal_record(
                    mdp,
                    &summary,
                    &state,
                    &rho,
                    &spec.method,
                    &trace.checks,
                )?);
                break;
            }
            Err(e) if is_blowup(&e) => {
                trace.diverged_at = Some(state.iteration + 1);
                trace.records.push(terminal_record(
                    mdp,
                    &summary,
                    &state,
                    &rho,
                    &spec.method,
                    &trace.checks,
                )?);
                break;
            }
            Err(e) => return Err(e),
        };
        let ctx = StepCtx {
            mdp,
            summary: &summary,
            prev: &state,
            next: &next,
            mu: &mu,
            rho: &rho,
            d_rho_star: &d_rho_star,
            eta_k,
            method: &spec.method,
        };
        trace.records.push(record_iteration(&ctx, &trace.checks)?);
        state = next;
    }

    if trace.checks.contains(&Check::SoftPiEnvelope) {
        if let Some(t) = tau {
            fill_softpi_envelope(&mut trace, mdp.gamma(), t);
        }
    }
    if trace.checks.contains(&Check::PgSublinear) {
        if let Method::SoftmaxPg {
            schedule: StepSchedule::Constant { eta },
        } = spec.method
        {
            let params = SublinearParams {
                rho_tilde: rho.min_weight(),
                mu_tilde: mu.min_weight(),
                eta,
                n_actions: mdp.n_actions(),
                max_opt_set: summary
                    .optimal_action_sets
                    .iter()
                    .map(Vec::len)
                    .max()
                    .unwrap_or(1),
            };
            fill_pg_sublinear(&mut trace, mdp.gamma(), &params);
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{random_mdp, two_arm_bandit};

    #[test]
    fn bandit_npg_trace_follows_exact_recurrence() {
        let b = two_arm_bandit();
        let spec = RunSpec::new(Method::SoftmaxNpg { eta: 2.0f64.ln() })
            .with_iters(25)
            .with_checks(vec![Check::NpgKlIdentity]);
        let trace = run_experiment(&b, &spec).unwrap();
        assert_eq!(trace.records.len(), 26);
        // gap_{k+1} (1 + pi_k) = gap_k with e^eta - 1 = 1: gap_0 = 0.5, ...
        let mut gap = 0.5f64;
        for rec in &trace.records {
            assert!(
                (rec.v_gap_rho - gap).abs() <= 1e-12,
                "k={} gap={} expected={gap}",
                rec.k,
                rec.v_gap_rho
            );
            let pi = 1.0 - gap;
            gap /= 1.0 + pi;
        }
    }

    #[test]
    fn stop_at_iteration_zero_gives_single_terminal_record() {
        let b = two_arm_bandit();
        let spec = RunSpec::new(Method::Pi).with_iters(1).with_stop_gap(10.0);
        let trace = run_experiment(&b, &spec).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].k, 0);
        assert!(trace.records[0].eta_k.is_none());
        assert!(trace.records[0].l_k_kp1.is_none());
    }

    #[test]
    fn adaptive_schedule_stops_on_converged_signal() {
        // Zero-reward MDP: weighted advantages vanish at the uniform policy.
        let m = crate::mdp::TabularMdp::new(1, 2, vec![1.0, 1.0], vec![0.0, 0.0], 0.0).unwrap();
        let spec = RunSpec::new(Method::SoftmaxPg {
            schedule: StepSchedule::PgAdaptive { c_adapt: 1.0 },
        })
        .with_iters(50);
        let trace = run_experiment(&m, &spec).unwrap();
        assert_eq!(trace.records.len(), 1);
    }

    #[test]
    fn checks_recorded_along_soft_pi_run() {
        let m = random_mdp(5, 8, 4, 0.9).unwrap();
        let spec = RunSpec::new(Method::SoftPi { tau: 0.5 })
            .with_iters(40)
            .with_stop_gap(1e-10)
            .with_checks(vec![
                Check::SoftPiQuadratic,
                Check::SoftPiEnvelope,
                Check::Monotone,
            ]);
        let trace = run_experiment(&m, &spec).unwrap();
        let quad = crate::diag::check_inequality(Check::SoftPiQuadratic, &trace);
        assert_eq!(quad.status, crate::diag::CheckStatus::Pass);
        assert!(quad.evaluated > 0);
        let env = crate::diag::check_inequality(Check::SoftPiEnvelope, &trace);
        assert_eq!(env.status, crate::diag::CheckStatus::Pass);
        let mono = crate::diag::check_inequality(Check::Monotone, &trace);
        assert_eq!(mono.status, crate::diag::CheckStatus::Pass);
    }

    #[test]
    fn stored_policies_match_iteration_count() {
        let b = two_arm_bandit();
        let mut spec = RunSpec::new(Method::SoftmaxNpg { eta: 0.5 }).with_iters(5);
        spec.store_policies = true;
        let trace = run_experiment(&b, &spec).unwrap();
        assert_eq!(trace.policies.as_ref().unwrap().len(), trace.records.len());
        assert!(trace.opt_policy.is_some());
    }
}
