//! The first-best benchmark, where effort is contractible.
//!
//! With multiplier `λ` on the participation constraint the principal solves
//! `inf_λ {−λu(R) + φ(λ)}` with `φ(λ) = ∫ ρe^{−ρt} (G* − F*)(−δλe^{(ρ−r)t}) dt`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::optimize::bisect;
use crate::numerics::quad;

/// Which branch of the first-best solution applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FirstBestBranch {
    /// `δγ ≤ 1`: the value `ā` is approached but not attained.
    Degenerate,
    /// `δγ > 1` with `λ* = 0`: value `ā`, no optimal contract.
    NoOptimalContract,
    /// `λ* > 0` and a deterministic optimal contract with `τ* = ∞`.
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstBestConfig {
    /// Relative tolerance of every quadrature.
    pub quad_rel_tol: f64,
    pub quad_abs_tol: f64,
    pub max_panels: usize,
    /// `(F*)′(0)`; the left limit is 0 for power utility.
    pub f_star_prime_at_zero: f64,
    /// Policy sample times are `t_end·i/(n_policy − 1)`.
    pub t_end: f64,
    pub n_policy: usize,
}

impl Default for FirstBestConfig {
    fn default() -> Self {
        Self { quad_rel_tol: 1e-13, quad_abs_tol: 1e-15, max_panels: 4000, f_star_prime_at_zero: 0.0, t_end: 10.0, n_policy: 101 }
    }
}

/// Point of the deterministic first-best policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyPoint {
    pub t: f64,
    pub payment: f64,
    pub effort: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstBestResult {
    pub branch: FirstBestBranch,
    pub degenerate: bool,
    pub lambda_star: f64,
    /// `−λ*δu(R) + (G* − F*)(−δλ*)`.
    pub value: f64,
    /// `−λ*u(R) + φ(λ*)`, computed independently by quadrature.
    pub value_dual: f64,
    /// KKT residual at `λ*` (zero outside the interior branch).
    pub residual: f64,
    pub policy: Vec<PolicyPoint>,
    params: ModelParams,
}

impl FirstBestResult {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }
}

/// `G*′(p) = h(â)` with `â` the maximiser in `G*`.
fn g_star_prime(params: &ModelParams, p: f64) -> f64 {
    let c = params.cost();
    if p >= 0.0 {
        return c.cost(c.a_max());
    }
    c.cost(c.a_hat(-1.0 / p))
}

/// `G*(p) = |p|·h*(−1/p)` for `p < 0`.
fn g_star(params: &ModelParams, p: f64) -> f64 {
    let c = params.cost();
    if p >= 0.0 {
        return c.a_max() + p * c.cost(c.a_max());
    }
    -p * c.h_star(-1.0 / p)
}

/// Sensitivities at which the effort maximiser in `G*` changes regime.
fn effort_kinks(params: &ModelParams) -> [f64; 2] {
    let c = params.cost();
    [c.beta(), c.beta() + c.h2() * c.a_max()]
}

/// `∫₀¹ g(s) ds` via `s = w^m`, split at the images of `breaks`.
fn integrate_unit<G: Fn(f64) -> f64>(g: G, m: f64, breaks: &[f64], cfg: &FirstBestConfig) -> Result<f64> {
    let mut nodes: Vec<f64> = vec![0.0, 1.0];
    nodes.extend(breaks.iter().filter(|s| **s > 0.0 && **s < 1.0).map(|s| s.powf(1.0 / m)));
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let integrand = |w: f64| if w <= 0.0 { 0.0 } else { g(w.powf(m)) * m * w.powf(m - 1.0) };
    let mut total = 0.0;
    for pair in nodes.windows(2) {
        let out = quad::integrate(integrand, pair[0], pair[1], cfg.quad_rel_tol, cfg.quad_abs_tol, cfg.max_panels);
        if !out.converged && out.error > 1e-10 * (1.0 + out.value.abs()) {
            return Err(Error::Quadrature { at: pair[0], estimate: out.error });
        }
        total += out.value;
    }
    Ok(total)
}

/// Breakpoints `s` of `s ↦ (G*)′(−δλ·s^e)` inside `(0, 1)`.
fn kinks_in_unit(params: &ModelParams, lambda: f64, exponent: f64) -> Vec<f64> {
    if exponent == 0.0 {
        return Vec::new();
    }
    let scale = params.delta() * lambda;
    effort_kinks(params)
        .iter()
        .filter(|z| **z > 0.0)
        .map(|z| (1.0 / (scale * z)).powf(1.0 / exponent))
        .filter(|s| s.is_finite())
        .collect()
}

/// `u(R) + residual(λ) = ∫ re^{−rt} (F* − G*)′(−δλe^{(ρ−r)t}) dt`, the agent's first-best utility.
///
/// With `s = e^{−rt}` the argument is `−δλ·s^{1−1/δ}`.
pub fn agent_utility(params: &ModelParams, lambda: f64, cfg: &FirstBestConfig) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("agent_utility needs lambda > 0, got {lambda}")));
    }
    let e = 1.0 - 1.0 / params.delta();
    // F*′ at the argument behaves like s^k near s = 0.
    let k = e / (params.gamma() - 1.0);
    let m = if k < 0.0 { 1.0 / (1.0 + k) } else { 1.0 };
    let g = |s: f64| {
        let p = -params.delta() * lambda * s.powf(e);
        params.f_star_prime(p) - g_star_prime(params, p)
    };
    integrate_unit(g, m, &kinks_in_unit(params, lambda, e), cfg)
}

/// KKT residual `−u(R) − ∫ re^{−rt}(G* − F*)′(−δλe^{(ρ−r)t}) dt`, increasing in `λ`.
pub fn kkt_residual(params: &ModelParams, lambda: f64, cfg: &FirstBestConfig) -> Result<f64> {
    Ok(agent_utility(params, lambda, cfg)? - params.reservation_utility())
}

/// `φ(λ)`, integrated with `u = e^{−ρt}` so that the argument is `−δλ·u^{δ−1}`.
pub fn phi(params: &ModelParams, lambda: f64, cfg: &FirstBestConfig) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("phi needs lambda >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(params.cost().a_max());
    }
    let e = params.delta() - 1.0;
    // −F* at the argument behaves like u^k near u = 0.
    let k = e * params.gamma_star();
    let m = if k < 0.0 { 1.0 / (1.0 + k) } else { 1.0 };
    let g = |u: f64| {
        let p = -params.delta() * lambda * u.powf(e);
        g_star(params, p) - params.f_star(p)
    };
    integrate_unit(g, m, &kinks_in_unit(params, lambda, e), cfg)
}

/// Solves the first-best problem with the default configuration.
pub fn fb_solve(params: &ModelParams) -> Result<FirstBestResult> {
    fb_solve_with(params, &FirstBestConfig::default())
}

pub fn fb_solve_with(params: &ModelParams, cfg: &FirstBestConfig) -> Result<FirstBestResult> {
    let a_max = params.cost().a_max();
    let flat = |branch| FirstBestResult {
        branch,
        degenerate: branch == FirstBestBranch::Degenerate,
        lambda_star: 0.0,
        value: a_max,
        value_dual: a_max,
        residual: 0.0,
        policy: Vec::new(),
        params: *params,
    };
    if params.rho() >= params.gamma() * params.r() {
        return Ok(flat(FirstBestBranch::Degenerate));
    }
    let u_r = params.reservation_utility();
    let c = params.cost();
    if u_r <= -c.cost(a_max) + cfg.f_star_prime_at_zero {
        return Ok(flat(FirstBestBranch::NoOptimalContract));
    }

    let residual = |lambda: f64| kkt_residual(params, lambda, cfg);
    let lower_residual = -u_r - c.cost(a_max) + cfg.f_star_prime_at_zero;
    let mut hi = 1.0;
    let mut hi_residual = residual(hi)?;
    let mut lo = 0.0;
    for _ in 0..200 {
        if hi_residual > 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
        hi_residual = residual(hi)?;
    }
    if !(hi_residual > 0.0) {
        return Err(Error::NoBracket {
            lower: format!("residual(0) = {lower_residual:e}"),
            upper: format!("residual({hi:e}) = {hi_residual:e}"),
        });
    }
    let failure = std::cell::Cell::new(None);
    let signed = |lambda: f64| {
        if lambda <= 0.0 {
            return lower_residual;
        }
        residual(lambda).unwrap_or_else(|e| {
            failure.set(Some(e));
            f64::NAN
        })
    };
    let lambda_star = bisect(signed, lo, hi, 1e-15 * hi).ok_or_else(|| Error::NoBracket {
        lower: format!("residual({lo:e})"),
        upper: format!("residual({hi:e}) = {hi_residual:e}"),
    })?;
    if let Some(e) = failure.take() {
        return Err(e);
    }

    let p = -params.delta() * lambda_star;
    let value = -lambda_star * params.delta() * u_r + g_star(params, p) - params.f_star(p);
    let value_dual = -lambda_star * u_r + phi(params, lambda_star, cfg)?;
    let mut result = FirstBestResult {
        branch: FirstBestBranch::Interior,
        degenerate: false,
        lambda_star,
        value,
        value_dual,
        residual: residual(lambda_star)?,
        policy: Vec::new(),
        params: *params,
    };
    let n = cfg.n_policy.max(2);
    result.policy = (0..n)
        .map(|i| {
            let t = cfg.t_end * i as f64 / (n - 1) as f64;
            let (payment, effort) = fb_policy_at(&result, t)?;
            Ok(PolicyPoint { t, payment, effort })
        })
        .collect::<Result<_>>()?;
    Ok(result)
}

/// `Û(z) = argmin_{p ≥ 0} {zp − u(p)} = (γz)^{−γ/(γ−1)}`.
pub fn payment_hat(params: &ModelParams, z: f64) -> f64 {
    if z <= 0.0 {
        return f64::INFINITY;
    }
    (params.gamma() * z).powf(-params.gamma_star())
}

/// First-best payment and effort at time `t`, evaluated at `z_t = e^{(r−ρ)t}/(δλ*)`.
pub fn fb_policy_at(result: &FirstBestResult, t: f64) -> Result<(f64, f64)> {
    if result.branch != FirstBestBranch::Interior {
        return Err(Error::Precondition("first-best policy exists only when lambda* > 0".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("policy time must be >= 0, got {t}")));
    }
    let p = &result.params;
    let z = ((p.r() - p.rho()) * t).exp() / (p.delta() * result.lambda_star);
    Ok((payment_hat(p, z), p.cost().a_hat(z)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CostSpec;

    fn params(gamma: f64, r: f64, rho: f64, h2: f64, beta: f64, a_max: f64, reservation: f64) -> ModelParams {
        ModelParams::new(r, rho, 1.0, gamma, CostSpec::new(h2, beta, a_max).unwrap(), reservation).unwrap()
    }

    fn test_config() -> ModelParams {
        params(2.0, 1.0, 0.8, 0.5, 0.4, 2.0, 1.0)
    }

    #[test]
    fn impatient_principal_is_degenerate() {
        let res = fb_solve(&params(2.0, 1.0, 2.0, 0.5, 0.4, 2.0, 1.0)).unwrap();
        assert!(res.degenerate);
        assert_eq!(res.value, 2.0);
        assert!(fb_policy_at(&res, 0.0).is_err());
    }

    #[test]
    fn zero_reservation_takes_interior_branch() {
        let res = fb_solve(&params(2.0, 1.0, 0.8, 0.5, 0.4, 2.0, 0.0)).unwrap();
        assert_eq!(res.branch, FirstBestBranch::Interior);
        assert!(res.lambda_star > 0.0);
    }

    #[test]
    fn override_can_select_no_contract_branch() {
        let cfg = FirstBestConfig { f_star_prime_at_zero: 10.0, ..FirstBestConfig::default() };
        let res = fb_solve_with(&test_config(), &cfg).unwrap();
        assert_eq!(res.branch, FirstBestBranch::NoOptimalContract);
        assert_eq!(res.value, 2.0);
    }

    #[test]
    fn kkt_root_and_value_forms() {
        let res = fb_solve(&test_config()).unwrap();
        assert!(res.lambda_star > 0.0);
        assert!(res.residual.abs() < 1e-8, "residual {}", res.residual);
        assert!((res.value - res.value_dual).abs() < 1e-9, "{} vs {}", res.value, res.value_dual);
        assert!(res.value < 2.0);
    }

    #[test]
    fn residual_increases_in_lambda() {
        let m = test_config();
        let cfg = FirstBestConfig::default();
        let values: Vec<f64> = (1..60).map(|i| kkt_residual(&m, 0.05 * i as f64, &cfg).unwrap()).collect();
        assert!(values.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn equal_rates_give_constant_policy() {
        let res = fb_solve(&params(2.0, 1.0, 1.0, 0.5, 0.4, 2.0, 1.0)).unwrap();
        let first = fb_policy_at(&res, 0.0).unwrap();
        for t in [0.5, 3.0, 40.0] {
            assert_eq!(fb_policy_at(&res, t).unwrap(), first);
        }
    }

    #[test]
    fn effort_non_decreasing_when_agent_more_impatient() {
        let res = fb_solve(&test_config()).unwrap();
        assert!(res.policy.windows(2).all(|w| w[1].effort >= w[0].effort));
        assert!(fb_policy_at(&res, -1.0).is_err());
    }

    #[test]
    fn payment_vanishes_for_large_multiplier() {
        let m = test_config();
        assert!(payment_hat(&m, 1e12) < 1e-20);
    }

    #[test]
    fn g_star_matches_generic_maximisation() {
        let m = test_config();
        for p in [-5.0, -2.0, -1.2, -0.7, -0.3, -0.01, 0.0, 0.4] {
            assert!((g_star(&m, p) - m.g_star(p)).abs() < 1e-10, "p = {p}");
        }
    }

    #[test]
    fn g_star_prime_matches_difference_quotient() {
        let m = test_config();
        for p in [-5.0, -2.0, -0.7, -0.3] {
            let fd = (g_star(&m, p + 1e-6) - g_star(&m, p - 1e-6)) / 2e-6;
            assert!((g_star_prime(&m, p) - fd).abs() < 1e-6, "p = {p}");
        }
    }
}
