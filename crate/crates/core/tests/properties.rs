//! Structural property tests: simplex projection, log-space updates,
//! operator contraction, and the distance identities the diagnostics
//! rely on.

use pglab::algo::{method_step, Method, MethodState};
use pglab::eval::{
    advantage, bellman_apply, bellman_optimal, optimal_values, policy_eval, q_from_v,
    soft_bellman_apply, soft_optimal, soft_policy_eval, visitation, ValueTable,
};
use pglab::mdp::{random_mdp, DistributionOverStates};
use pglab::rng::SplitMix64;
use pglab::run::{run_experiment, RunSpec};
use pglab::schedule::StepSchedule;
use pglab::simplex::project_simplex;
use pglab::util::{dot, kl, sup_dist};
use pglab::Policy;
use proptest::prelude::*;

proptest! {
    #[test]
    fn projection_is_a_distribution_and_idempotent(
        y in prop::collection::vec(-10.0f64..10.0, 1..8)
    ) {
        let p = project_simplex(&y).unwrap();
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let q = project_simplex(&p).unwrap();
        prop_assert!(sup_dist(&p, &q) <= 1e-12);
    }

    #[test]
    fn projection_never_beaten_by_random_simplex_points(
        y in prop::collection::vec(-2.0f64..2.0, 2..6),
        raw in prop::collection::vec(0.01f64..1.0, 2..6)
    ) {
        let n = y.len().min(raw.len());
        let y = &y[..n];
        let total: f64 = raw[..n].iter().sum();
        let q: Vec<f64> = raw[..n].iter().map(|x| x / total).collect();
        let p = project_simplex(y).unwrap();
        let dp: f64 = y.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
        let dq: f64 = y.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
        prop_assert!(dp <= dq + 1e-12);
    }

    #[test]
    fn softmax_update_is_bitwise_shift_invariant_for_exact_shifts(
        grid in prop::collection::vec(-512i32..512, 3),
        shift in -8i32..8
    ) {
        // Dyadic exponents: g and g + c add exactly in f64.
        let g: Vec<f64> = grid.iter().map(|&v| v as f64 / 1024.0).collect();
        let c = shift as f64 / 4.0;
        let shifted: Vec<f64> = g.iter().map(|x| x + c).collect();
        let pi = Policy::from_probs(1, 3, vec![0.2, 0.5, 0.3]).unwrap();
        let a = pi.softmax_update(&g);
        let b = pi.softmax_update(&shifted);
        for i in 0..3 {
            prop_assert_eq!(a.p(0, i).to_bits(), b.p(0, i).to_bits());
        }
    }

    #[test]
    fn policy_rows_stay_normalized_after_updates(
        seed in 0u64..500,
        eta in 0.01f64..20.0
    ) {
        let mdp = random_mdp(seed, 4, 3, 0.8).unwrap();
        let state = MethodState::evaluate(&mdp, Policy::uniform(4, 3), None, 0).unwrap();
        let next = pglab::algo::softmax_npg_step(&mdp, &state, eta).unwrap();
        prop_assert!(next.policy.max_row_sum_deviation() <= 1e-12);
        let mu = DistributionOverStates::uniform(4);
        let sched = StepSchedule::Constant { eta };
        let ppg = pglab::algo::ppg_step(&mdp, &state, &sched, &mu).unwrap();
        prop_assert!(ppg.policy.max_row_sum_deviation() <= 1e-12);
    }
}

#[test]
fn operator_contraction_on_random_instances() {
    let mut rng = SplitMix64::new(17);
    for trial in 0..60u64 {
        let n = 2 + (trial as usize % 6);
        let m = 2 + (trial as usize % 3);
        let gamma = 0.95 * rng.next_open01();
        let mdp = random_mdp(700 + trial, n, m, gamma).unwrap();
        let pi = Policy::uniform(n, m);
        let v1 = ValueTable::unregularized((0..n).map(|_| 6.0 * rng.next_open01() - 3.0).collect());
        let v2 = ValueTable::unregularized((0..n).map(|_| 6.0 * rng.next_open01() - 3.0).collect());
        let d = v1.sup_dist(&v2);
        let tau = 0.05 + rng.next_open01();
        assert!(
            sup_dist(
                &bellman_apply(&mdp, &pi, &v1).values,
                &bellman_apply(&mdp, &pi, &v2).values
            ) <= gamma * d + 1e-12
        );
        assert!(
            sup_dist(
                &bellman_optimal(&mdp, &v1).values,
                &bellman_optimal(&mdp, &v2).values
            ) <= gamma * d + 1e-12
        );
        assert!(
            sup_dist(
                &soft_bellman_apply(&mdp, &pi, &v1, tau).unwrap().values,
                &soft_bellman_apply(&mdp, &pi, &v2, tau).unwrap().values
            ) <= gamma * d + 1e-12
        );
    }
}

#[test]
fn value_and_advantage_ranges() {
    // Provable ranges: V, Q in [0, 1/(1-gamma)]; soft V within
    // [0, (1+tau log|A|)/(1-gamma)], soft Q within [0, (1+gamma tau log|A|)/(1-gamma)].
    let mut rng = SplitMix64::new(23);
    for trial in 0..40u64 {
        let n = 2 + (trial as usize % 5);
        let m = 2 + (trial as usize % 4);
        let gamma = 0.9 * rng.next_open01();
        let tau = 0.05 + rng.next_open01();
        let mdp = random_mdp(800 + trial, n, m, gamma).unwrap();
        let pi = Policy::uniform(n, m);
        let v = policy_eval(&mdp, &pi).unwrap();
        let vmax = 1.0 / (1.0 - gamma);
        for s in 0..n {
            assert!(v.v(s) >= -1e-12 && v.v(s) <= vmax + 1e-12);
        }
        let q = q_from_v(&mdp, &v);
        for x in &q.values {
            assert!(*x >= -1e-12 && *x <= vmax + 1e-12);
        }
        let vs = soft_policy_eval(&mdp, &pi, tau).unwrap();
        let smax = (1.0 + tau * (m as f64).ln()) / (1.0 - gamma);
        for s in 0..n {
            assert!(vs.v(s) >= -1e-12 && vs.v(s) <= smax + 1e-12);
        }
        let qs = q_from_v(&mdp, &vs);
        let qmax = (1.0 + gamma * tau * (m as f64).ln()) / (1.0 - gamma);
        for x in &qs.values {
            assert!(*x >= -1e-12 && *x <= qmax + 1e-12);
        }
    }
}

#[test]
fn q_and_advantage_track_value_error() {
    // ||Q* - Q^pi|| <= gamma ||V* - V^pi|| and ||A* - A^pi|| <= ||V* - V^pi||.
    let mut rng = SplitMix64::new(29);
    for trial in 0..25u64 {
        let n = 3 + (trial as usize % 5);
        let m = 2 + (trial as usize % 4);
        let gamma = 0.2 + 0.7 * rng.next_open01();
        let mdp = random_mdp(900 + trial, n, m, gamma).unwrap();
        let summary = optimal_values(&mdp, 1e-12).unwrap();
        let mut probs = vec![0.0; n * m];
        for row in probs.chunks_mut(m) {
            for p in row.iter_mut() {
                *p = rng.next_open01();
            }
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
        }
        let pi = Policy::from_probs(n, m, probs).unwrap();
        let v = policy_eval(&mdp, &pi).unwrap();
        let q = q_from_v(&mdp, &v);
        let a = advantage(&mdp, &pi, &v, &q, None).unwrap();
        let v_err = summary.v_star.sup_dist(&v);
        let q_err = sup_dist(&summary.q_star.values, &q.values);
        let a_err = sup_dist(&summary.a_star.values, &a.values);
        assert!(q_err <= gamma * v_err + 1e-10);
        assert!(a_err <= v_err + 1e-10);
    }
}

#[test]
fn soft_optimality_gap_equals_kl_to_optimum() {
    // V_tau^*(rho) - V_tau^pi(rho) = (tau/(1-gamma)) E_{d_rho^pi}[KL(pi || pi*)].
    let mut rng = SplitMix64::new(31);
    for trial in 0..25u64 {
        let n = 2 + (trial as usize % 6);
        let m = 2 + (trial as usize % 4);
        let gamma = 0.8 * rng.next_open01();
        let tau = 0.1 + rng.next_open01();
        let mdp = random_mdp(950 + trial, n, m, gamma).unwrap();
        let summary = soft_optimal(&mdp, tau, 1e-12).unwrap();
        let pi = Policy::uniform(n, m);
        let v = soft_policy_eval(&mdp, &pi, tau).unwrap();
        let rho = DistributionOverStates::uniform(n);
        let d = visitation(&mdp, &pi, &rho).unwrap();
        let lhs = rho.expect(&summary.v_star.values) - rho.expect(&v.values);
        let per_state: Vec<f64> = (0..n)
            .map(|s| kl(pi.row(s), summary.optimal_policy.row(s)))
            .collect();
        let rhs = tau / (1.0 - gamma) * d.expect(&per_state);
        assert!((lhs - rhs).abs() <= 1e-9, "trial {trial}: {lhs} vs {rhs}");
    }
}

#[test]
fn weighted_gap_matches_optimal_policy_improvement_form() {
    // L_k^* = V*(rho) - V^k(rho) = (1/(1-gamma)) E_{d_rho^*}[sum_a pi* A^k].
    let mut rng = SplitMix64::new(37);
    for trial in 0..20u64 {
        let n = 3 + (trial as usize % 4);
        let m = 2 + (trial as usize % 3);
        let gamma = 0.3 + 0.6 * rng.next_open01();
        let mdp = random_mdp(990 + trial, n, m, gamma).unwrap();
        let summary = optimal_values(&mdp, 1e-12).unwrap();
        let pi = Policy::uniform(n, m);
        let v = policy_eval(&mdp, &pi).unwrap();
        let q = q_from_v(&mdp, &v);
        let a = advantage(&mdp, &pi, &v, &q, None).unwrap();
        let rho = DistributionOverStates::uniform(n);
        let d_star = visitation(&mdp, &summary.optimal_policy, &rho).unwrap();
        let lhs = rho.expect(&summary.v_star.values) - rho.expect(&v.values);
        let integrand: Vec<f64> = (0..n)
            .map(|s| dot(summary.optimal_policy.row(s), a.row(s)))
            .collect();
        let rhs = d_star.expect(&integrand) / (1.0 - gamma);
        assert!((lhs - rhs).abs() <= 1e-10, "trial {trial}: {lhs} vs {rhs}");
    }
}

#[test]
fn nonoptimal_mass_sandwich_on_random_instances() {
    // Delta E_rho[b] <= V*(rho) - V^pi(rho) <= E_{d_rho^pi}[b]/(1-gamma)^2.
    let mut rng = SplitMix64::new(41);
    for trial in 0..30u64 {
        let n = 3 + (trial as usize % 5);
        let m = 2 + (trial as usize % 4);
        let gamma = 0.8 * rng.next_open01();
        let mdp = random_mdp(980 + trial, n, m, gamma).unwrap();
        let summary = optimal_values(&mdp, 1e-12).unwrap();
        let mut probs = vec![0.0; n * m];
        for row in probs.chunks_mut(m) {
            for p in row.iter_mut() {
                *p = rng.next_open01();
            }
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
        }
        let pi = Policy::from_probs(n, m, probs).unwrap();
        let rho = DistributionOverStates::uniform(n);
        let nm = pglab::eval::nonoptimal_mass(&mdp, &pi, &summary, &rho).unwrap();
        assert!(
            nm.lower <= nm.middle + 1e-10 && nm.middle <= nm.upper + 1e-10,
            "trial {trial}: {} <= {} <= {} violated",
            nm.lower,
            nm.middle,
            nm.upper
        );
        assert!(nm.per_state.iter().all(|&b| (0.0..=1.0).contains(&b)));
    }
}

#[test]
fn traces_are_monotone_with_positive_kappa() {
    let mdp = random_mdp(44, 6, 3, 0.85).unwrap();
    let methods = [
        Method::Ppg {
            schedule: StepSchedule::Constant { eta: 2.0 },
        },
        Method::SoftmaxPg {
            schedule: StepSchedule::Constant { eta: 1.0 },
        },
        Method::SoftmaxNpg { eta: 1.0 },
    ];
    for method in methods {
        let is_softmax = !matches!(method, Method::Ppg { .. });
        let spec = RunSpec::new(method).with_iters(80);
        let trace = run_experiment(&mdp, &spec).unwrap();
        // k strictly increasing from 0; weighted gap non-increasing.
        for (i, rec) in trace.records.iter().enumerate() {
            assert_eq!(rec.k, i);
        }
        for pair in trace.records.windows(2) {
            assert!(pair[1].v_gap_rho <= pair[0].v_gap_rho + 1e-10);
        }
        if is_softmax {
            let kappa = trace.kappa_estimate().unwrap();
            assert!(kappa > 0.0 && kappa <= 1.0);
            let running = trace.kappa_running();
            for pair in running.windows(2) {
                assert!(pair[1].unwrap() <= pair[0].unwrap() + 1e-15);
            }
        }
    }
}

#[test]
fn npg_trace_satisfies_rate_product_and_sandwiches() {
    let mdp = random_mdp(61, 7, 4, 0.85).unwrap();
    let spec = RunSpec::new(Method::SoftmaxNpg { eta: 2.0 })
        .with_iters(60)
        .with_checks(vec![
            pglab::diag::Check::NpgRateProduct,
            pglab::diag::Check::LinearRecursion,
            pglab::diag::Check::LstarSandwich,
            pglab::diag::Check::VisitationLower,
        ]);
    let trace = run_experiment(&mdp, &spec).unwrap();
    for &check in &trace.checks {
        let rep = pglab::diag::check_inequality(check, &trace);
        assert_eq!(
            rep.status,
            pglab::diag::CheckStatus::Pass,
            "{}: {rep:?}",
            check.name()
        );
        assert!(rep.evaluated > 0, "{} never evaluated", check.name());
    }
}

#[test]
fn policy_iteration_trace_contracts_at_gamma() {
    // PI takes the full greedy improvement, so the linear-recursion factor
    // bottoms out at gamma each iteration.
    let mdp = random_mdp(62, 6, 4, 0.8).unwrap();
    let spec = RunSpec::new(Method::Pi).with_iters(30).with_checks(vec![
        pglab::diag::Check::LinearRecursion,
        pglab::diag::Check::LstarSandwich,
        pglab::diag::Check::Monotone,
    ]);
    let trace = run_experiment(&mdp, &spec).unwrap();
    for &check in &trace.checks {
        let rep = pglab::diag::check_inequality(check, &trace);
        assert_eq!(
            rep.status,
            pglab::diag::CheckStatus::Pass,
            "{}: {rep:?}",
            check.name()
        );
    }
    // PI on a finite MDP lands exactly on an optimal policy.
    assert_eq!(trace.records.last().unwrap().b_max, Some(0.0));
}

#[test]
fn kl_ratio_deviations_vanish_along_entropy_npg_runs() {
    // The four KL ratios (step forward/backward, vs-optimum forward/backward)
    // approach 1 as an entropy-NPG run converges.
    let b = pglab::mdp::two_arm_bandit();
    let mut spec = RunSpec::new(Method::EntropyNpg { eta: 1.0, tau: 1.0 })
        .with_iters(200)
        .with_stop_gap(1e-6);
    spec.store_policies = true;
    let trace = run_experiment(&b, &spec).unwrap();
    let points = pglab::diag::kl_ratio_probe(&trace).unwrap();
    assert!(points.len() >= 5);
    let last = points.last().unwrap();
    assert!(
        last.max_dev() < 0.05,
        "late deviations not small: {:?}",
        last
    );
    // Envelope trend: window maxima (width 10) are non-increasing.
    let window_max: Vec<f64> = points
        .chunks(10)
        .map(|w| w.iter().map(|p| p.max_dev()).fold(0.0, f64::max))
        .collect();
    for pair in window_max.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-12, "trend broke: {window_max:?}");
    }
}

#[test]
fn kl_ratio_probe_skips_exact_fixed_points() {
    // Zero-reward MDP: the uniform start is already soft-optimal, every KL
    // collapses to zero and all iterations are skipped.
    let m = pglab::mdp::TabularMdp::new(1, 3, vec![1.0; 3], vec![0.0; 3], 0.0).unwrap();
    let mut spec = RunSpec::new(Method::EntropyNpg { eta: 1.0, tau: 0.5 }).with_iters(5);
    spec.store_policies = true;
    let trace = run_experiment(&m, &spec).unwrap();
    let points = pglab::diag::kl_ratio_probe(&trace).unwrap();
    assert!(points.is_empty());
    // Without stored policies the probe refuses to guess.
    let spec = RunSpec::new(Method::EntropyNpg { eta: 1.0, tau: 0.5 }).with_iters(5);
    let trace = run_experiment(&m, &spec).unwrap();
    assert!(pglab::diag::kl_ratio_probe(&trace).is_err());
}

#[test]
fn method_steps_commute_with_dispatch() {
    let mdp = random_mdp(55, 4, 3, 0.7).unwrap();
    let mu = DistributionOverStates::uniform(4);
    let tau = 0.3;
    let state = MethodState::evaluate(&mdp, Policy::uniform(4, 3), Some(tau), 0).unwrap();
    let direct = pglab::algo::soft_pi_step(&mdp, &state, tau).unwrap();
    let via = method_step(&mdp, &state, &Method::SoftPi { tau }, &mu).unwrap();
    for s in 0..4 {
        assert_eq!(direct.policy.row(s), via.policy.row(s));
    }
}
