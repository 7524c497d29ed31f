//! One-step update rules: policy iteration, projected policy gradient,
//! softmax PG and NPG, their entropy-regularized variants, and soft policy
//! iteration.
//!
//! Every step is a pure function from a [`MethodState`] (policy plus its
//! exact evaluation) to the next. Softmax-family updates are performed in
//! log space with per-row max subtraction, so iterates stay finite even as a
//! policy approaches a simplex vertex.

use crate::error::{Error, Result};
use crate::eval::{
    advantage, policy_eval, q_from_v, soft_policy_eval, visitation, AdvantageTable, QTable,
    ValueTable,
};
use crate::mdp::{DistributionOverStates, TabularMdp};
use crate::policy::Policy;
use crate::schedule::{schedule_eta, StepInfo, StepSchedule};
use crate::simplex::project_simplex;

/// Which update rule drives a run, together with its fixed parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    Pi,
    Ppg { schedule: StepSchedule },
    SoftmaxPg { schedule: StepSchedule },
    SoftmaxNpg { eta: f64 },
    EntropyPg { eta: f64, tau: f64 },
    EntropyNpg { eta: f64, tau: f64 },
    SoftPi { tau: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Pi => "pi",
            Method::Ppg { .. } => "ppg",
            Method::SoftmaxPg { .. } => "pg",
            Method::SoftmaxNpg { .. } => "npg",
            Method::EntropyPg { .. } => "entropy-pg",
            Method::EntropyNpg { .. } => "entropy-npg",
            Method::SoftPi { .. } => "soft-pi",
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match *self {
            Method::EntropyPg { tau, .. }
            | Method::EntropyNpg { tau, .. }
            | Method::SoftPi { tau } => Some(tau),
            _ => None,
        }
    }

    pub fn is_entropy(&self) -> bool {
        self.tau().is_some()
    }

    /// Fixed step size, for the methods that have one.
    pub fn fixed_eta(&self) -> Option<f64> {
        match *self {
            Method::SoftmaxNpg { eta }
            | Method::EntropyPg { eta, .. }
            | Method::EntropyNpg { eta, .. } => Some(eta),
            Method::Ppg {
                schedule: StepSchedule::Constant { eta },
            }
            | Method::SoftmaxPg {
                schedule: StepSchedule::Constant { eta },
            } => Some(eta),
            _ => None,
        }
    }

    pub fn schedule(&self) -> Option<&StepSchedule> {
        match self {
            Method::Ppg { schedule } | Method::SoftmaxPg { schedule } => Some(schedule),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Method::Pi => Ok(()),
            Method::Ppg { schedule } => {
                if matches!(schedule, StepSchedule::PgAdaptive { .. }) {
                    return Err(Error::Config(
                        "the pg-adaptive schedule applies to softmax PG, not PPG".into(),
                    ));
                }
                schedule.validate()
            }
            Method::SoftmaxPg { schedule } => {
                if matches!(schedule, StepSchedule::PpgIncreasing { .. }) {
                    return Err(Error::Config(
                        "the ppg-increasing schedule applies to PPG, not softmax PG".into(),
                    ));
                }
                schedule.validate()
            }
            Method::SoftmaxNpg { eta } => require_positive(*eta, "eta"),
            Method::EntropyPg { eta, tau } | Method::EntropyNpg { eta, tau } => {
                require_positive(*eta, "eta")?;
                require_positive(*tau, "tau")
            }
            Method::SoftPi { tau } => require_positive(*tau, "tau"),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Method::Pi => "pi".into(),
            Method::Ppg { schedule } => format!("ppg {}", schedule.describe()),
            Method::SoftmaxPg { schedule } => format!("pg {}", schedule.describe()),
            Method::SoftmaxNpg { eta } => format!("npg eta={eta}"),
            Method::EntropyPg { eta, tau } => format!("entropy-pg eta={eta} tau={tau}"),
            Method::EntropyNpg { eta, tau } => format!("entropy-npg eta={eta} tau={tau}"),
            Method::SoftPi { tau } => format!("soft-pi tau={tau}"),
        }
    }
}

fn require_positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be positive, got {x}")))
    }
}

/// A policy together with its exact evaluation at one iteration.
#[derive(Clone, Debug)]
pub struct MethodState {
    pub policy: Policy,
    pub iteration: usize,
    pub v: ValueTable,
    pub q: QTable,
    pub adv: AdvantageTable,
    /// Entropy weight of the cached tables; `None` for unregularized methods.
    pub tau: Option<f64>,
}

impl MethodState {
    /// Evaluates `policy` exactly (soft evaluation when `tau` is set) and
    /// caches V, Q and the advantage.
    pub fn evaluate(
        mdp: &TabularMdp,
        policy: Policy,
        tau: Option<f64>,
        iteration: usize,
    ) -> Result<Self> {
        let v = match tau {
            None => policy_eval(mdp, &policy)?,
            Some(t) => soft_policy_eval(mdp, &policy, t)?,
        };
        let q = q_from_v(mdp, &v);
        let adv = advantage(mdp, &policy, &v, &q, tau)?;
        Ok(Self {
            policy,
            iteration,
            v,
            q,
            adv,
            tau,
        })
    }

    /// The weighted advantage rows pi(a|s) A(s,a) (soft A when regularized).
    pub fn weighted_adv(&self) -> Vec<f64> {
        let m = self.policy.n_actions();
        let mut out = vec![0.0; self.policy.n_states() * m];
        for s in 0..self.policy.n_states() {
            for a in 0..m {
                out[s * m + a] = self.policy.p(s, a) * self.adv.a(s, a);
            }
        }
        out
    }

    fn require_unregularized(&self) -> Result<()> {
        if self.tau.is_some() {
            return Err(Error::TauMismatch {
                found: self.tau,
                requested: None,
            });
        }
        Ok(())
    }

    fn require_tau(&self, tau: f64) -> Result<()> {
        if tau <= 0.0 {
            return Err(Error::TauNonPositive(tau));
        }
        if self.tau != Some(tau) {
            return Err(Error::TauMismatch {
                found: self.tau,
                requested: Some(tau),
            });
        }
        Ok(())
    }
}

/// Per-state effective step sizes eta_s = eta_k d_mu^pi(s) / (1-gamma),
/// recomputed from the current iterate's visitation measure.
pub fn effective_step_sizes(
    mdp: &TabularMdp,
    policy: &Policy,
    eta_k: f64,
    mu: &DistributionOverStates,
) -> Result<Vec<f64>> {
    let d = visitation(mdp, policy, mu)?;
    Ok(d.weights()
        .iter()
        .map(|&w| eta_k * w / (1.0 - mdp.gamma()))
        .collect())
}

fn step_info<'a>(
    mdp: &TabularMdp,
    mu: &DistributionOverStates,
    rows: Option<&'a [f64]>,
) -> StepInfo<'a> {
    StepInfo {
        n_actions: mdp.n_actions(),
        gamma: mdp.gamma(),
        mu_tilde: mu.min_weight(),
        weighted_adv: rows,
    }
}

/// Policy iteration: the next policy is greedy for Q^k.
pub fn pi_step(mdp: &TabularMdp, state: &MethodState) -> Result<MethodState> {
    state.require_unregularized()?;
    let next = Policy::greedy(&state.q);
    MethodState::evaluate(mdp, next, None, state.iteration + 1)
}

/// Projected policy gradient: each row moves along Q^k(s,.) with the
/// state-dependent step eta_s, then projects back onto the simplex.
pub fn ppg_step(
    mdp: &TabularMdp,
    state: &MethodState,
    schedule: &StepSchedule,
    mu: &DistributionOverStates,
) -> Result<MethodState> {
    state.require_unregularized()?;
    if matches!(schedule, StepSchedule::PgAdaptive { .. }) {
        return Err(Error::Config(
            "the pg-adaptive schedule applies to softmax PG, not PPG".into(),
        ));
    }
    if mu.min_weight() <= 0.0 {
        return Err(Error::Config("ppg needs min_s mu(s) > 0".into()));
    }
    let eta_k = schedule_eta(schedule, state.iteration, &step_info(mdp, mu, None))?
        .expect("non-adaptive schedules always yield a step");
    let eta_s = effective_step_sizes(mdp, &state.policy, eta_k, mu)?;
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut probs = vec![0.0; n * m];
    for s in 0..n {
        let target: Vec<f64> = (0..m)
            .map(|a| state.policy.p(s, a) + eta_s[s] * state.q.q(s, a))
            .collect();
        let row = project_simplex(&target)?;
        probs[s * m..(s + 1) * m].copy_from_slice(&row);
    }
    let next = Policy::from_probs(n, m, probs)?;
    MethodState::evaluate(mdp, next, None, state.iteration + 1)
}

/// Softmax PG in the policy domain: pi' proportional to
/// pi exp(eta_s pi A), with eta_s = eta_k d_mu(s)/(1-gamma).
pub fn softmax_pg_step(
    mdp: &TabularMdp,
    state: &MethodState,
    schedule: &StepSchedule,
    mu: &DistributionOverStates,
) -> Result<MethodState> {
    state.require_unregularized()?;
    state.policy.require_strictly_positive()?;
    if matches!(schedule, StepSchedule::PpgIncreasing { .. }) {
        return Err(Error::Config(
            "the ppg-increasing schedule applies to PPG, not softmax PG".into(),
        ));
    }
    let weighted = state.weighted_adv();
    let eta_k = schedule_eta(
        schedule,
        state.iteration,
        &step_info(mdp, mu, Some(&weighted)),
    )?;
    let next = match eta_k {
        // Adaptive rule with S^k empty: every weighted advantage is zero and
        // any step leaves the policy unchanged.
        None => state.policy.clone(),
        Some(eta_k) => {
            let eta_s = effective_step_sizes(mdp, &state.policy, eta_k, mu)?;
            let m = mdp.n_actions();
            let mut exponent = weighted;
            for s in 0..mdp.n_states() {
                for a in 0..m {
                    exponent[s * m + a] *= eta_s[s];
                }
            }
            state.policy.softmax_update(&exponent)
        }
    };
    MethodState::evaluate(mdp, next, None, state.iteration + 1)
}

/// Softmax NPG: pi' proportional to pi exp(eta A), state-independent step.
pub fn softmax_npg_step(mdp: &TabularMdp, state: &MethodState, eta: f64) -> Result<MethodState> {
    state.require_unregularized()?;
    state.policy.require_strictly_positive()?;
    require_positive(eta, "eta")?;
    let m = mdp.n_actions();
    let mut exponent = vec![0.0; mdp.n_states() * m];
    for s in 0..mdp.n_states() {
        for a in 0..m {
            exponent[s * m + a] = eta * state.adv.a(s, a);
        }
    }
    let next = state.policy.softmax_update(&exponent);
    MethodState::evaluate(mdp, next, None, state.iteration + 1)
}

/// Entropy softmax PG: pi' proportional to pi exp(eta_s pi A_tau).
pub fn entropy_softmax_pg_step(
    mdp: &TabularMdp,
    state: &MethodState,
    eta: f64,
    tau: f64,
    mu: &DistributionOverStates,
) -> Result<MethodState> {
    state.require_tau(tau)?;
    state.policy.require_strictly_positive()?;
    require_positive(eta, "eta")?;
    let eta_s = effective_step_sizes(mdp, &state.policy, eta, mu)?;
    let m = mdp.n_actions();
    let mut exponent = state.weighted_adv();
    for s in 0..mdp.n_states() {
        for a in 0..m {
            exponent[s * m + a] *= eta_s[s];
        }
    }
    let next = state.policy.softmax_update(&exponent);
    MethodState::evaluate(mdp, next, Some(tau), state.iteration + 1)
}

/// Entropy softmax NPG: pi' proportional to pi exp((eta/(eta tau + 1)) A_tau).
pub fn entropy_softmax_npg_step(
    mdp: &TabularMdp,
    state: &MethodState,
    eta: f64,
    tau: f64,
) -> Result<MethodState> {
    state.require_tau(tau)?;
    state.policy.require_strictly_positive()?;
    require_positive(eta, "eta")?;
    let scale = eta / (eta * tau + 1.0);
    let m = mdp.n_actions();
    let mut exponent = vec![0.0; mdp.n_states() * m];
    for s in 0..mdp.n_states() {
        for a in 0..m {
            exponent[s * m + a] = scale * state.adv.a(s, a);
        }
    }
    let next = state.policy.softmax_update(&exponent);
    MethodState::evaluate(mdp, next, Some(tau), state.iteration + 1)
}

/// Soft policy iteration: pi'(.|s) = softmax(Q_tau^k(s,.)/tau). This is the
/// eta -> infinity limit of entropy NPG in closed form rather than a large
/// finite step, so iterates cannot overflow.
pub fn soft_pi_step(mdp: &TabularMdp, state: &MethodState, tau: f64) -> Result<MethodState> {
    state.require_tau(tau)?;
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut logits = vec![0.0; n * m];
    for s in 0..n {
        for a in 0..m {
            logits[s * m + a] = state.q.q(s, a) / tau;
        }
    }
    let next = Policy::from_logit_rows(n, m, &logits);
    MethodState::evaluate(mdp, next, Some(tau), state.iteration + 1)
}

/// Dispatches one step of `method`.
pub fn method_step(
    mdp: &TabularMdp,
    state: &MethodState,
    method: &Method,
    mu: &DistributionOverStates,
) -> Result<MethodState> {
    match method {
        Method::Pi => pi_step(mdp, state),
        Method::Ppg { schedule } => ppg_step(mdp, state, schedule, mu),
        Method::SoftmaxPg { schedule } => softmax_pg_step(mdp, state, schedule, mu),
        Method::SoftmaxNpg { eta } => softmax_npg_step(mdp, state, *eta),
        Method::EntropyPg { eta, tau } => entropy_softmax_pg_step(mdp, state, *eta, *tau, mu),
        Method::EntropyNpg { eta, tau } => entropy_softmax_npg_step(mdp, state, *eta, *tau),
        Method::SoftPi { tau } => soft_pi_step(mdp, state, *tau),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::soft_greedy;
    use crate::mdp::{random_mdp, two_arm_bandit};
    use crate::util::sup_dist;

    fn bandit_state(tau: Option<f64>) -> (TabularMdp, MethodState) {
        let b = two_arm_bandit();
        let s = MethodState::evaluate(&b, Policy::uniform(1, 2), tau, 0).unwrap();
        (b, s)
    }

    fn one_state_mu() -> DistributionOverStates {
        DistributionOverStates::uniform(1)
    }

    #[test]
    fn pi_step_on_bandit_is_greedy() {
        let (b, s) = bandit_state(None);
        let next = pi_step(&b, &s).unwrap();
        assert_eq!(next.policy.row(0), &[1.0, 0.0]);
        // Optimal policy is a fixed point.
        let again = pi_step(&b, &next).unwrap();
        assert_eq!(again.policy.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn pi_step_matches_exhaustive_argmax_on_chain() {
        let m = TabularMdp::new(
            2,
            2,
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            vec![0.0, 0.4, 1.0, 0.2],
            0.5,
        )
        .unwrap();
        let s = MethodState::evaluate(&m, Policy::uniform(2, 2), None, 0).unwrap();
        let next = pi_step(&m, &s).unwrap();
        for st in 0..2 {
            let row = s.q.row(st);
            let best = if row[0] >= row[1] { 0 } else { 1 };
            assert_eq!(next.policy.p(st, best), 1.0);
        }
    }

    #[test]
    fn ppg_step_on_bandit_projects_to_vertex() {
        let (b, s) = bandit_state(None);
        let sched = StepSchedule::Constant { eta: 1.0 };
        let next = ppg_step(&b, &s, &sched, &one_state_mu()).unwrap();
        // Target (1.5, 0.5) projects to (1, 0) with lambda = -0.5.
        assert_eq!(next.policy.row(0), &[1.0, 0.0]);
        // Optimal vertex is a fixed point.
        let again = ppg_step(&b, &next, &sched, &one_state_mu()).unwrap();
        assert_eq!(again.policy.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn ppg_step_is_continuous_at_zero_step() {
        let (b, s) = bandit_state(None);
        let sched = StepSchedule::Constant { eta: 1e-12 };
        let next = ppg_step(&b, &s, &sched, &one_state_mu()).unwrap();
        assert!(sup_dist(next.policy.row(0), s.policy.row(0)) <= 1e-10);
    }

    #[test]
    fn softmax_pg_step_bandit_tilt() {
        let (b, s) = bandit_state(None);
        let sched = StepSchedule::Constant { eta: 1.0 };
        let next = softmax_pg_step(&b, &s, &sched, &one_state_mu()).unwrap();
        // eta_s = 1, weighted advantages (0.25, -0.25): a1 mass 1/(1+e^{-0.5}).
        assert!((next.policy.p(0, 0) - 0.6224593312018546).abs() < 1e-12);
    }

    #[test]
    fn softmax_pg_step_equals_logspace_form() {
        let m = random_mdp(3, 5, 3, 0.8).unwrap();
        let mu = DistributionOverStates::uniform(5);
        let s = MethodState::evaluate(&m, Policy::uniform(5, 3), None, 0).unwrap();
        let sched = StepSchedule::Constant { eta: 0.7 };
        let next = softmax_pg_step(&m, &s, &sched, &mu).unwrap();
        let eta_s = effective_step_sizes(&m, &s.policy, 0.7, &mu).unwrap();
        for st in 0..5 {
            let logits: Vec<f64> = (0..3)
                .map(|a| s.policy.log_p(st, a) + eta_s[st] * s.policy.p(st, a) * s.adv.a(st, a))
                .collect();
            let lse = crate::util::log_sum_exp(&logits);
            for a in 0..3 {
                assert!((next.policy.p(st, a) - (logits[a] - lse).exp()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn softmax_pg_fixed_point_when_advantages_vanish() {
        // Zero rewards: uniform policy has A = 0 everywhere.
        let m = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![0.0, 0.0], 0.0).unwrap();
        let s = MethodState::evaluate(&m, Policy::uniform(1, 2), None, 0).unwrap();
        let sched = StepSchedule::Constant { eta: 3.0 };
        let next = softmax_pg_step(&m, &s, &sched, &one_state_mu()).unwrap();
        assert!(sup_dist(next.policy.row(0), &[0.5, 0.5]) <= 1e-15);
    }

    #[test]
    fn npg_step_bandit_with_log2_step() {
        let (b, s) = bandit_state(None);
        let next = softmax_npg_step(&b, &s, 2.0f64.ln()).unwrap();
        assert!((next.policy.p(0, 0) - 2.0 / 3.0).abs() < 1e-14);
        assert!((next.policy.p(0, 1) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn npg_step_limits() {
        let (b, s) = bandit_state(None);
        let tiny = softmax_npg_step(&b, &s, 1e-14).unwrap();
        assert!(sup_dist(tiny.policy.row(0), s.policy.row(0)) <= 1e-12);
        let huge = softmax_npg_step(&b, &s, 1e6).unwrap();
        assert!((huge.policy.p(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_pg_step_bandit_tilt() {
        let (b, s) = bandit_state(Some(1.0));
        let next = entropy_softmax_pg_step(&b, &s, 0.1, 1.0, &one_state_mu()).unwrap();
        // A_tau = (0.5, -0.5), weighted (0.25, -0.25), eta_s = 0.1:
        // a1 mass = 1/(1+e^{-0.05}).
        assert!((next.policy.p(0, 0) - 0.5124973964842103).abs() < 1e-12);
    }

    #[test]
    fn entropy_pg_fixed_point_on_zero_rewards() {
        let m = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![0.0, 0.0], 0.0).unwrap();
        let s = MethodState::evaluate(&m, Policy::uniform(1, 2), Some(0.7), 0).unwrap();
        let next = entropy_softmax_pg_step(&m, &s, 0.5, 0.7, &one_state_mu()).unwrap();
        assert!(sup_dist(next.policy.row(0), &[0.5, 0.5]) <= 1e-14);
    }

    #[test]
    fn entropy_npg_step_bandit() {
        let (b, s) = bandit_state(Some(1.0));
        let next = entropy_softmax_npg_step(&b, &s, 1.0, 1.0).unwrap();
        // Exponent scale 1/2 on A_tau = (0.5, -0.5): a1 mass = 1/(1+e^{-0.5}).
        assert!((next.policy.p(0, 0) - 0.6224593312018546).abs() < 1e-12);
        let tiny = entropy_softmax_npg_step(&b, &s, 1e-14, 1.0).unwrap();
        assert!(sup_dist(tiny.policy.row(0), s.policy.row(0)) <= 1e-12);
    }

    #[test]
    fn entropy_npg_large_step_approaches_soft_pi() {
        let m = random_mdp(9, 4, 3, 0.8).unwrap();
        let tau = 0.5;
        let s = MethodState::evaluate(&m, Policy::uniform(4, 3), Some(tau), 0).unwrap();
        let spi = soft_pi_step(&m, &s, tau).unwrap();
        let big = entropy_softmax_npg_step(&m, &s, 1e9, tau).unwrap();
        for st in 0..4 {
            assert!(sup_dist(big.policy.row(st), spi.policy.row(st)) <= 1e-9);
        }
        // At eta = 1e8 the gap closes at rate O(1/eta).
        let mid = entropy_softmax_npg_step(&m, &s, 1e8, tau).unwrap();
        for st in 0..4 {
            assert!(sup_dist(mid.policy.row(st), spi.policy.row(st)) <= 1e-7);
        }
    }

    #[test]
    fn soft_pi_step_bandit_reaches_optimum_in_one_step() {
        let (b, s) = bandit_state(Some(1.0));
        let next = soft_pi_step(&b, &s, 1.0).unwrap();
        assert!((next.policy.p(0, 0) - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn soft_pi_step_equals_soft_greedy_of_current_value() {
        let m = random_mdp(21, 6, 4, 0.9).unwrap();
        let tau = 0.3;
        let s = MethodState::evaluate(&m, Policy::uniform(6, 4), Some(tau), 0).unwrap();
        let next = soft_pi_step(&m, &s, tau).unwrap();
        let greedy = soft_greedy(&m, &s.v, tau).unwrap();
        for st in 0..6 {
            assert!(sup_dist(next.policy.row(st), greedy.row(st)) <= 1e-12);
        }
    }

    #[test]
    fn zero_reward_soft_pi_fixed_point() {
        let m = TabularMdp::new(1, 3, vec![1.0; 3], vec![0.0; 3], 0.0).unwrap();
        let s = MethodState::evaluate(&m, Policy::uniform(1, 3), Some(0.2), 0).unwrap();
        let next = soft_pi_step(&m, &s, 0.2).unwrap();
        for a in 0..3 {
            assert!((next.policy.p(0, a) - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn tau_mismatch_is_rejected() {
        let (b, s) = bandit_state(None);
        assert!(matches!(
            soft_pi_step(&b, &s, 1.0),
            Err(Error::TauMismatch { .. })
        ));
        let (b, s) = bandit_state(Some(1.0));
        assert!(matches!(pi_step(&b, &s), Err(Error::TauMismatch { .. })));
    }

    #[test]
    fn monotone_improvement_across_methods() {
        let m = random_mdp(33, 5, 3, 0.85).unwrap();
        let mu = DistributionOverStates::uniform(5);
        let tau = 0.4;
        let beta = crate::schedule::beta_threshold(tau, m.gamma(), 3).unwrap();
        let cases: Vec<Method> = vec![
            Method::Ppg {
                schedule: StepSchedule::Constant { eta: 5.0 },
            },
            Method::SoftmaxPg {
                schedule: StepSchedule::Constant { eta: 2.0 },
            },
            Method::SoftmaxNpg { eta: 1.5 },
            Method::EntropyPg {
                eta: beta / 2.0,
                tau,
            },
            Method::EntropyNpg { eta: 2.0, tau },
            Method::SoftPi { tau },
        ];
        for method in cases {
            let mut s = MethodState::evaluate(&m, Policy::uniform(5, 3), method.tau(), 0).unwrap();
            for _ in 0..25 {
                let next = method_step(&m, &s, &method, &mu).unwrap();
                for st in 0..5 {
                    assert!(
                        next.v.v(st) >= s.v.v(st) - 1e-10,
                        "method {} decreased V at state {st}",
                        method.name()
                    );
                }
                s = next;
            }
        }
    }
}
