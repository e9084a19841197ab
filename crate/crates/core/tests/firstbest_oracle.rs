use pasolve_core::firstbest::{fb_policy_at, fb_solve, kkt_residual, FirstBestBranch, FirstBestConfig, FirstBestResult};
use pasolve_core::{CostSpec, ModelParams};
use proptest::prelude::*;

fn params(gamma: f64, r: f64, rho: f64, h2: f64, beta: f64, a_max: f64, reservation: f64) -> ModelParams {
    ModelParams::new(r, rho, 1.0, gamma, CostSpec::new(h2, beta, a_max).unwrap(), reservation).unwrap()
}

/// Composite Simpson on `[0, t_end]` with `t_end` at 45 e-folds of the slowest integrand decay.
fn time_integral<G: Fn(f64) -> f64>(m: &ModelParams, g: G) -> f64 {
    // u(π_t) grows like e^{(ρ−r)t/(γ−1)} when ρ > r.
    let growth = ((m.rho() - m.r()) / (m.gamma() - 1.0)).max(0.0);
    let decay = m.r().min(m.rho()) - growth.min(0.9 * m.r());
    let t_end = 45.0 / decay.max(1e-3);
    let n = 800_000;
    let h = t_end / n as f64;
    let mut sum = g(0.0) + g(t_end);
    for i in 1..n {
        sum += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

/// `∫ r e^{−rt} (u(π_t) − h(a_t)) dt` along the first-best policy.
fn agent_utility_in_time(m: &ModelParams, res: &FirstBestResult) -> f64 {
    time_integral(m, |t| {
        let (pay, effort) = fb_policy_at(res, t).unwrap();
        m.r() * (-m.r() * t).exp() * (m.utility(pay) - m.cost().cost(effort))
    })
}

/// `∫ ρ e^{−ρt} (a_t − π_t) dt` along the first-best policy.
fn principal_value_in_time(m: &ModelParams, res: &FirstBestResult) -> f64 {
    time_integral(m, |t| {
        let (pay, effort) = fb_policy_at(res, t).unwrap();
        m.rho() * (-m.rho() * t).exp() * (effort - pay)
    })
}

/// Best constant deterministic contract on a 200 × 200 grid of (effort, payment).
fn constant_contract_oracle(m: &ModelParams, pay_max: f64) -> f64 {
    let c = m.cost();
    let mut best = f64::NEG_INFINITY;
    for i in 0..200 {
        let a = c.a_max() * i as f64 / 199.0;
        for j in 0..200 {
            let pay = pay_max * j as f64 / 199.0;
            if m.utility(pay) - c.cost(a) >= m.reservation_utility() {
                best = best.max(a - pay);
            }
        }
    }
    best
}

#[test]
fn participation_binds_in_time_domain() {
    for m in [params(2.0, 1.0, 0.8, 0.5, 0.4, 2.0, 1.0), params(1.5, 1.0, 1.2, 1.0, 0.1, 3.0, 0.5), params(3.0, 1.0, 2.5, 0.3, 0.0, 1.0, 2.0)] {
        let res = fb_solve(&m).unwrap();
        assert_eq!(res.branch, FirstBestBranch::Interior);
        let agent = agent_utility_in_time(&m, &res);
        assert!((agent - m.reservation_utility()).abs() < 1e-6, "agent {agent} vs {}", m.reservation_utility());
    }
}

#[test]
fn value_matches_primal_evaluation_of_policy() {
    for m in [params(2.0, 1.0, 0.8, 0.5, 0.4, 2.0, 1.0), params(1.5, 1.0, 1.2, 1.0, 0.1, 3.0, 0.5), params(3.0, 1.0, 2.5, 0.3, 0.0, 1.0, 2.0)] {
        let res = fb_solve(&m).unwrap();
        let primal = principal_value_in_time(&m, &res);
        assert!((primal - res.value).abs() < 1e-6, "primal {primal} vs value {}", res.value);
    }
}

#[test]
fn constant_contract_oracle_is_a_lower_bound() {
    let m = params(2.0, 1.0, 0.8, 0.5, 0.4, 2.0, 1.0);
    let res = fb_solve(&m).unwrap();
    let oracle = constant_contract_oracle(&m, 3.0);
    println!("first-best value {:.10}, constant-contract grid oracle {:.10}", res.value, oracle);
    assert!(res.value >= oracle);
}

#[test]
fn constant_contract_oracle_is_sharp_for_equal_rates() {
    // With r = ρ the first-best policy is constant, so the grid only loses resolution.
    let m = params(2.0, 1.0, 1.0, 0.5, 0.4, 2.0, 1.0);
    let res = fb_solve(&m).unwrap();
    let oracle = constant_contract_oracle(&m, 3.0);
    assert!(res.value >= oracle);
    assert!((res.value - oracle).abs() <= 0.01 * res.value.abs(), "{} vs {oracle}", res.value);
}

#[test]
fn value_forms_agree_when_principal_more_impatient() {
    // δ = 0.75, δγ = 1.125: the integrands are singular at t = ∞ before substitution.
    let m = params(1.5, 1.0, 4.0 / 3.0, 1.0, 0.01, 50.0, 1.0);
    let res = fb_solve(&m).unwrap();
    assert!(res.residual.abs() < 1e-8);
    assert!((res.value - res.value_dual).abs() < 1e-8 * (1.0 + res.value.abs()), "{} vs {}", res.value, res.value_dual);
    assert!(res.value <= m.cost().a_max());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn residual_monotone_and_value_bounded(
        gamma in 1.3f64..3.5,
        delta_gamma in 1.05f64..3.0,
        h2 in 0.1f64..2.0,
        beta in 0.0f64..0.5,
        a_max in 0.5f64..5.0,
        reservation in 0.0f64..3.0,
    ) {
        let delta = delta_gamma / gamma;
        let m = params(gamma, 1.0, 1.0 / delta, h2, beta, a_max, reservation);
        let res = fb_solve(&m).unwrap();
        prop_assert!(res.value <= a_max);
        if res.branch == FirstBestBranch::Interior {
            prop_assert!(res.residual.abs() < 1e-8);
            prop_assert!((res.value - res.value_dual).abs() < 1e-7 * (1.0 + res.value.abs()));
            let cfg = FirstBestConfig::default();
            let below = kkt_residual(&m, 0.9 * res.lambda_star, &cfg).unwrap();
            let above = kkt_residual(&m, 1.1 * res.lambda_star, &cfg).unwrap();
            prop_assert!(below < 0.0 && above > 0.0);
        }
    }
}
