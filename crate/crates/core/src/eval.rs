//! Exact dynamic programming: policy evaluation by direct linear solve,
//! Bellman and soft-Bellman operators, optimal values, visitation measures,
//! and the structural quantities (optimal action sets, advantage gap,
//! non-optimal probability mass).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{DistributionOverStates, TabularMdp};
use crate::policy::{Policy, TOL_GAP};
use crate::util::{entropy, log_sum_exp, max_abs, sup_dist};

/// State values, tagged with the entropy weight they were computed under
/// (`None` = unregularized).
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub values: Vec<f64>,
    pub reg: Option<f64>,
}

impl ValueTable {
    pub fn unregularized(values: Vec<f64>) -> Self {
        Self { values, reg: None }
    }

    pub fn regularized(values: Vec<f64>, tau: f64) -> Self {
        Self {
            values,
            reg: Some(tau),
        }
    }

    pub fn v(&self, s: usize) -> f64 {
        self.values[s]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_dist(&self, other: &ValueTable) -> f64 {
        sup_dist(&self.values, &other.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Action values with the same regularization tag as the values they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    pub values: Vec<f64>,
    pub reg: Option<f64>,
}

impl QTable {
    pub fn unregularized(n_states: usize, n_actions: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_states * n_actions);
        Self {
            n_states,
            n_actions,
            values,
            reg: None,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }
}

/// Advantages; every row satisfies sum_a pi(a|s) A(s,a) = 0 for the policy it
/// was computed from (regularized or not).
#[derive(Clone, Debug, PartialEq)]
pub struct AdvantageTable {
    n_states: usize,
    n_actions: usize,
    pub values: Vec<f64>,
    pub reg: Option<f64>,
}

impl AdvantageTable {
    pub fn a(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
}

/// Optimal values plus the derived structure: per-state optimal action sets,
/// the optimal advantage gap, and a canonical optimal policy.
///
/// For the entropy-regularized case the optimal policy is the soft-greedy
/// softmax and the soft advantage of the optimum vanishes identically, so
/// `optimal_action_sets` lists every action and `gap_delta` is the +inf
/// sentinel (the gap is an unregularized notion).
#[derive(Clone, Debug)]
pub struct OptimalitySummary {
    pub v_star: ValueTable,
    pub q_star: QTable,
    pub a_star: AdvantageTable,
    pub optimal_action_sets: Vec<Vec<usize>>,
    pub gap_delta: f64,
    pub optimal_policy: Policy,
    pub tau: Option<f64>,
}

impl OptimalitySummary {
    pub fn is_optimal_action(&self, s: usize, a: usize) -> bool {
        self.optimal_action_sets[s].contains(&a)
    }

    /// b_s^pi = sum of pi mass on non-optimal actions at state s.
    pub fn nonoptimal_row_mass(&self, policy: &Policy, s: usize) -> f64 {
        (0..policy.n_actions())
            .filter(|&a| !self.is_optimal_action(s, a))
            .map(|a| policy.p(s, a))
            .sum()
    }
}

fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<Vec<f64>> {
    a.lu()
        .solve(&b)
        .map(|x| x.iter().copied().collect())
        .ok_or(Error::SingularSystem)
}

/// P_pi(s, s') = sum_a pi(a|s) P(s'|s,a).
fn transition_matrix(mdp: &TabularMdp, policy: &Policy) -> DMatrix<f64> {
    let n = mdp.n_states();
    DMatrix::from_fn(n, n, |s, s2| {
        (0..mdp.n_actions())
            .map(|a| policy.p(s, a) * mdp.p(s, a, s2))
            .sum()
    })
}

fn check_dims(mdp: &TabularMdp, policy: &Policy) -> Result<()> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::Dimension(
            "policy dimensions do not match the MDP".into(),
        ));
    }
    Ok(())
}

/// V^pi by solving the Bellman equation (I - gamma P_pi) V = r_pi directly.
pub fn policy_eval(mdp: &TabularMdp, policy: &Policy) -> Result<ValueTable> {
    check_dims(mdp, policy)?;
    let n = mdp.n_states();
    let r_pi = DVector::from_fn(n, |s, _| crate::util::dot(policy.row(s), mdp.reward_row(s)));
    let a = DMatrix::identity(n, n) - mdp.gamma() * transition_matrix(mdp, policy);
    Ok(ValueTable::unregularized(solve(a, r_pi)?))
}

/// V_tau^pi: same linear system with the effective reward
/// r_pi(s) + tau * H(pi(.|s)). Requires a strictly positive policy.
pub fn soft_policy_eval(mdp: &TabularMdp, policy: &Policy, tau: f64) -> Result<ValueTable> {
    check_dims(mdp, policy)?;
    if tau <= 0.0 {
        return Err(Error::TauNonPositive(tau));
    }
    policy.require_strictly_positive()?;
    let n = mdp.n_states();
    let r_eff = DVector::from_fn(n, |s, _| {
        crate::util::dot(policy.row(s), mdp.reward_row(s)) + tau * entropy(policy.row(s))
    });
    let a = DMatrix::identity(n, n) - mdp.gamma() * transition_matrix(mdp, policy);
    Ok(ValueTable::regularized(solve(a, r_eff)?, tau))
}

/// Q(s,a) = r(s,a) + gamma * E_{s'~P}[V(s')]; the regularization tag of `v`
/// carries over (the soft Q uses the same backup formula).
pub fn q_from_v(mdp: &TabularMdp, v: &ValueTable) -> QTable {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut values = vec![0.0; n * m];
    for s in 0..n {
        for a in 0..m {
            values[s * m + a] =
                mdp.r(s, a) + mdp.gamma() * crate::util::dot(mdp.transition_row(s, a), &v.values);
        }
    }
    QTable {
        n_states: n,
        n_actions: m,
        values,
        reg: v.reg,
    }
}

/// Advantage of `policy` given consistent V and Q tables.
///
/// `tau = None` gives A = Q - V; `tau = Some(t)` gives the soft advantage
/// A_tau = Q - tau log pi - V and requires a strictly positive policy.
/// The tables' regularization tags must match the requested kind.
pub fn advantage(
    mdp: &TabularMdp,
    policy: &Policy,
    v: &ValueTable,
    q: &QTable,
    tau: Option<f64>,
) -> Result<AdvantageTable> {
    check_dims(mdp, policy)?;
    if v.reg != tau || q.reg != tau {
        return Err(Error::TauMismatch {
            found: if v.reg != tau { v.reg } else { q.reg },
            requested: tau,
        });
    }
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut values = vec![0.0; n * m];
    match tau {
        None => {
            for s in 0..n {
                for a in 0..m {
                    values[s * m + a] = q.q(s, a) - v.v(s);
                }
            }
        }
        Some(t) => {
            if t <= 0.0 {
                return Err(Error::TauNonPositive(t));
            }
            policy.require_strictly_positive()?;
            for s in 0..n {
                for a in 0..m {
                    values[s * m + a] = q.q(s, a) - t * policy.log_p(s, a) - v.v(s);
                }
            }
        }
    }
    Ok(AdvantageTable {
        n_states: n,
        n_actions: m,
        values,
        reg: tau,
    })
}

fn q_of_vector(mdp: &TabularMdp, v: &[f64], s: usize, a: usize) -> f64 {
    mdp.r(s, a) + mdp.gamma() * crate::util::dot(mdp.transition_row(s, a), v)
}

/// (T^pi V)(s) = E_{a~pi} E_{s'~P} [r + gamma V(s')].
pub fn bellman_apply(mdp: &TabularMdp, policy: &Policy, v: &ValueTable) -> ValueTable {
    let n = mdp.n_states();
    let values = (0..n)
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| policy.p(s, a) * q_of_vector(mdp, &v.values, s, a))
                .sum()
        })
        .collect();
    ValueTable::unregularized(values)
}

/// (T V)(s) = max_a E_{s'~P} [r + gamma V(s')].
pub fn bellman_optimal(mdp: &TabularMdp, v: &ValueTable) -> ValueTable {
    let n = mdp.n_states();
    let values = (0..n)
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| q_of_vector(mdp, &v.values, s, a))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    ValueTable::unregularized(values)
}

/// (T_tau^pi V)(s) = E_{a~pi}[Q^V(s,a)] + tau H(pi(.|s)).
pub fn soft_bellman_apply(
    mdp: &TabularMdp,
    policy: &Policy,
    v: &ValueTable,
    tau: f64,
) -> Result<ValueTable> {
    if tau <= 0.0 {
        return Err(Error::TauNonPositive(tau));
    }
    policy.require_strictly_positive()?;
    let n = mdp.n_states();
    let values = (0..n)
        .map(|s| {
            let mean_q: f64 = (0..mdp.n_actions())
                .map(|a| policy.p(s, a) * q_of_vector(mdp, &v.values, s, a))
                .sum();
            mean_q + tau * entropy(policy.row(s))
        })
        .collect();
    Ok(ValueTable::regularized(values, tau))
}

/// (T_tau V)(s) = tau * log || exp(Q^V(s,.)/tau) ||_1, computed with max
/// subtraction inside the log-sum-exp.
pub fn soft_bellman_optimal(mdp: &TabularMdp, v: &ValueTable, tau: f64) -> Result<ValueTable> {
    if tau <= 0.0 {
        return Err(Error::TauNonPositive(tau));
    }
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let values = (0..n)
        .map(|s| {
            let scaled: Vec<f64> = (0..m)
                .map(|a| q_of_vector(mdp, &v.values, s, a) / tau)
                .collect();
            tau * log_sum_exp(&scaled)
        })
        .collect();
    Ok(ValueTable::regularized(values, tau))
}

/// The maximizer of the soft optimality operator: softmax(Q^V(s,.)/tau),
/// strictly positive by construction.
pub fn soft_greedy(mdp: &TabularMdp, v: &ValueTable, tau: f64) -> Result<Policy> {
    if tau <= 0.0 {
        return Err(Error::TauNonPositive(tau));
    }
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut logits = vec![0.0; n * m];
    for s in 0..n {
        for a in 0..m {
            logits[s * m + a] = q_of_vector(mdp, &v.values, s, a) / tau;
        }
    }
    Ok(Policy::from_logit_rows(n, m, &logits))
}

const VALUE_ITER_CAP: usize = 2_000_000;

/// Iterates `step` from V = 0 until the residual ||step(V) - V||_inf drops
/// below a threshold guaranteeing ||V - V*||_inf <= tol by contraction.
///
/// The threshold is min(tol (1-gamma)/gamma, 10 tol), so the fixed-point
/// residual of the result is also at most 10 tol. A floor of
/// 32 eps (1 + ||V||) keeps the rule attainable near machine precision;
/// accuracy saturates there for very small `tol`.
fn value_iterate<F>(n: usize, gamma: f64, tol: f64, step: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if tol <= 0.0 {
        return Err(Error::Config("value-iteration tol must be positive".into()));
    }
    let threshold = if gamma > 0.0 {
        (tol * (1.0 - gamma) / gamma).min(10.0 * tol)
    } else {
        10.0 * tol
    };
    let mut v = vec![0.0; n];
    for iters in 1..=VALUE_ITER_CAP {
        let next = step(&v);
        let residual = sup_dist(&next, &v);
        v = next;
        let floor = 32.0 * f64::EPSILON * (1.0 + max_abs(&v));
        if residual <= threshold.max(floor) {
            return Ok(v);
        }
        if iters == VALUE_ITER_CAP {
            return Err(Error::NonConvergence { iters, residual });
        }
    }
    unreachable!()
}

fn optimal_sets_and_delta(a_star: &AdvantageTable) -> (Vec<Vec<usize>>, f64) {
    let (n, m) = (a_star.n_states, a_star.n_actions);
    let mut sets = Vec::with_capacity(n);
    let mut delta = f64::INFINITY;
    for s in 0..n {
        let row = a_star.row(s);
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let set: Vec<usize> = (0..m).filter(|&a| best - row[a] <= TOL_GAP).collect();
        if set.len() < m {
            for (a, &adv) in row.iter().enumerate() {
                if !set.contains(&a) {
                    delta = delta.min(adv.abs());
                }
            }
        }
        sets.push(set);
    }
    (sets, delta)
}

/// Optimal values by value iteration with the Bellman optimality operator,
/// then Q*, A*, the optimal action sets (ties within [`TOL_GAP`]), the
/// advantage gap Delta (+inf sentinel when every action is optimal
/// everywhere), and the greedy optimal policy.
pub fn optimal_values(mdp: &TabularMdp, tol: f64) -> Result<OptimalitySummary> {
    let n = mdp.n_states();
    let values = value_iterate(n, mdp.gamma(), tol, |v| {
        bellman_optimal(mdp, &ValueTable::unregularized(v.to_vec())).values
    })?;
    let v_star = ValueTable::unregularized(values);
    let q_star = q_from_v(mdp, &v_star);
    let mut a_values = vec![0.0; n * mdp.n_actions()];
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            a_values[s * mdp.n_actions() + a] = q_star.q(s, a) - v_star.v(s);
        }
    }
    let a_star = AdvantageTable {
        n_states: n,
        n_actions: mdp.n_actions(),
        values: a_values,
        reg: None,
    };
    let (optimal_action_sets, gap_delta) = optimal_sets_and_delta(&a_star);
    let optimal_policy = Policy::greedy(&q_star);
    Ok(OptimalitySummary {
        v_star,
        q_star,
        a_star,
        optimal_action_sets,
        gap_delta,
        optimal_policy,
        tau: None,
    })
}

/// Entropy-regularized optimum via the soft optimality operator. The summary
/// policy is the soft-greedy softmax and the soft advantage of the optimum,
/// max |Q* - V* - tau log pi*|, is at most 10 tol by the stopping rule.
pub fn soft_optimal(mdp: &TabularMdp, tau: f64, tol: f64) -> Result<OptimalitySummary> {
    if tau <= 0.0 {
        return Err(Error::TauNonPositive(tau));
    }
    let n = mdp.n_states();
    let values = value_iterate(n, mdp.gamma(), tol, |v| {
        soft_bellman_optimal(mdp, &ValueTable::unregularized(v.to_vec()), tau)
            .expect("tau checked above")
            .values
    })?;
    let v_star = ValueTable::regularized(values, tau);
    let q_star = q_from_v(mdp, &v_star);
    let optimal_policy = soft_greedy(mdp, &v_star, tau)?;
    let a_star = advantage(mdp, &optimal_policy, &v_star, &q_star, Some(tau))?;
    let m = mdp.n_actions();
    let optimal_action_sets = (0..n).map(|_| (0..m).collect()).collect();
    Ok(OptimalitySummary {
        v_star,
        q_star,
        a_star,
        optimal_action_sets,
        gap_delta: f64::INFINITY,
        optimal_policy,
        tau: Some(tau),
    })
}

/// Discounted visitation measure d_rho^pi(s) = (1-gamma) rho^T (I - gamma P_pi)^{-1},
/// computed exactly through the transposed linear system and renormalized.
pub fn visitation(
    mdp: &TabularMdp,
    policy: &Policy,
    rho: &DistributionOverStates,
) -> Result<DistributionOverStates> {
    check_dims(mdp, policy)?;
    if rho.len() != mdp.n_states() {
        return Err(Error::Dimension("rho length does not match MDP".into()));
    }
    let n = mdp.n_states();
    let a = DMatrix::identity(n, n) - mdp.gamma() * transition_matrix(mdp, policy).transpose();
    let x = solve(a, DVector::from_row_slice(rho.weights()))?;
    let mut d: Vec<f64> = x.iter().map(|&v| (1.0 - mdp.gamma()) * v).collect();
    let sum: f64 = d.iter().sum();
    for w in d.iter_mut() {
        *w /= sum;
    }
    Ok(DistributionOverStates::from_normalized(d))
}

/// Per-state non-optimal mass b_s^pi plus both sides of the suboptimality
/// sandwich `Delta E_rho[b] <= V*(rho) - V^pi(rho) <= E_{d_rho^pi}[b]/(1-gamma)^2`.
#[derive(Clone, Debug)]
pub struct NonoptimalMass {
    pub per_state: Vec<f64>,
    /// `Delta * E_{s~rho}[b_s]` (0 when no mass is non-optimal, even if Delta = +inf).
    pub lower: f64,
    /// V*(rho) - V^pi(rho).
    pub middle: f64,
    /// `E_{s~d_rho^pi}[b_s] / (1-gamma)^2`.
    pub upper: f64,
}

pub fn nonoptimal_mass(
    mdp: &TabularMdp,
    policy: &Policy,
    summary: &OptimalitySummary,
    rho: &DistributionOverStates,
) -> Result<NonoptimalMass> {
    if summary.tau.is_some() {
        return Err(Error::TauMismatch {
            found: summary.tau,
            requested: None,
        });
    }
    check_dims(mdp, policy)?;
    let n = mdp.n_states();
    let per_state: Vec<f64> = (0..n)
        .map(|s| summary.nonoptimal_row_mass(policy, s))
        .collect();
    let expect_rho = rho.expect(&per_state);
    let lower = if expect_rho == 0.0 {
        0.0
    } else {
        summary.gap_delta * expect_rho
    };
    let v_pi = policy_eval(mdp, policy)?;
    let middle = rho.expect(&summary.v_star.values) - rho.expect(&v_pi.values);
    let d = visitation(mdp, policy, rho)?;
    let upper = d.expect(&per_state) / ((1.0 - mdp.gamma()) * (1.0 - mdp.gamma()));
    Ok(NonoptimalMass {
        per_state,
        lower,
        middle,
        upper,
    })
}
