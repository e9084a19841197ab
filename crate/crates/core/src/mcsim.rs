//! Monte Carlo simulation of the reduced contracting problem.
//!
//! Each path draws from its own ChaCha8 stream, keyed by the seed and the path index, and
//! per-path outcomes are reduced in path order, so results do not depend on the thread count.
//! Exits are detected at step ends and by the Brownian-bridge crossing probability within a step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facelift::{facelift_closed_form, FaceliftResult};
use crate::hjb::{Classification, FreeBoundaryResult};
use crate::model::{I0Value, ModelParams};
use crate::numerics::interp::{locate, Pchip};

/// Fraction of capped paths above which an estimate is flagged as horizon-biased.
pub const CAPPED_FRACTION_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub t_cap: f64,
}

impl SimConfig {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidParameter { name: "sim.paths", constraint: ">= 1" });
        }
        if !(self.dt > 0.0 && self.dt <= 1e-2 / params.r()) {
            return Err(Error::InvalidParameter { name: "sim.dt", constraint: "in (0, 0.01/r]" });
        }
        if !(self.t_cap.is_finite() && self.t_cap * params.rho() >= 18.0) {
            return Err(Error::InvalidParameter { name: "sim.t_cap", constraint: "finite with t_cap·rho >= 18" });
        }
        Ok(())
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { mean, std_error: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Self { mean, std_error: (var / n).sqrt() }
    }

    /// `|mean − target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if self.std_error > 0.0 {
            d / self.std_error
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauStats {
    pub mean: f64,
    pub max: f64,
    pub capped_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub principal_value: Estimate,
    pub agent_value: Estimate,
    pub tau_stats: TauStats,
    pub absorbed_at_zero_fraction: f64,
    /// Smallest state visited before the exit step of any path.
    pub min_state: f64,
    /// Capped fraction above [`CAPPED_FRACTION_LIMIT`], or an artificial upper exit.
    pub horizon_biased: bool,
}

/// Where the upper exit of a policy comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpperExit {
    /// Retirement at the Golden Parachute threshold `y_gp`.
    GoldenParachute,
    /// The end of the resolved horizon when no tangency was found; estimates are biased.
    Truncated,
}

/// Feedback sensitivity and payment (in utility units) as functions of the state.
///
/// Both controls are monotone cubic interpolants of their node values, stored as per-panel
/// polynomials; panels are found in O(1) on uniform grids.
#[derive(Debug, Clone)]
pub struct FeedbackPolicy {
    xs: Vec<f64>,
    z: Vec<[f64; 4]>,
    eta_pay: Vec<[f64; 4]>,
    /// The payment `π̂ = u⁻¹(eta_pay)` itself, so the principal's flow needs no power.
    payment: Vec<[f64; 4]>,
    /// `1/h` when the grid is uniform with step `h`.
    inv_step: Option<f64>,
    upper: f64,
    upper_exit: UpperExit,
}

impl FeedbackPolicy {
    /// Policy from tables on a common grid starting at 0 and ending at the upper exit.
    pub fn from_tables(params: &ModelParams, ys: Vec<f64>, z: Vec<f64>, eta_pay: Vec<f64>, upper_exit: UpperExit) -> Result<Self> {
        if ys.len() < 2 || z.len() != ys.len() || eta_pay.len() != ys.len() {
            return Err(Error::Precondition("policy tables need matching lengths >= 2".into()));
        }
        if ys[0] != 0.0 || ys.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("policy grid must start at 0 and increase strictly".into()));
        }
        if z.iter().chain(&eta_pay).any(|x| !x.is_finite()) {
            return Err(Error::Precondition("policy tables must be finite".into()));
        }
        let n = ys.len();
        let upper = ys[n - 1];
        let h = upper / (n - 1) as f64;
        let uniform = ys.iter().enumerate().all(|(i, &y)| (y - i as f64 * h).abs() <= 1e-12 * upper);
        let payment: Vec<f64> = eta_pay.iter().map(|&e| -params.f(e)).collect();
        Ok(Self {
            z: Pchip::new(ys.clone(), z).panel_coefficients(),
            payment: Pchip::new(ys.clone(), payment).panel_coefficients(),
            eta_pay: Pchip::new(ys.clone(), eta_pay).panel_coefficients(),
            xs: ys,
            inv_step: uniform.then(|| 1.0 / h),
            upper,
            upper_exit,
        })
    }

    /// Panel index and local coordinate of `y`, clamped to the grid.
    fn panel(&self, y: f64) -> (usize, f64) {
        let last = self.xs.len() - 2;
        let i = match self.inv_step {
            Some(inv) => ((y * inv).max(0.0) as usize).min(last),
            None => locate(&self.xs, y),
        };
        // Uniform-grid rounding may land one panel off near a node.
        let i = if y < self.xs[i] && i > 0 { i - 1 } else if i < last && y >= self.xs[i + 1] { i + 1 } else { i };
        let t = ((y - self.xs[i]) / (self.xs[i + 1] - self.xs[i])).clamp(0.0, 1.0);
        (i, t)
    }

    fn cubic(c: &[f64; 4], t: f64) -> f64 {
        c[0] + t * (c[1] + t * (c[2] + t * c[3]))
    }

    /// `(ẑ(y), u(π̂(y)), π̂(y))`.
    pub fn controls(&self, y: f64) -> (f64, f64, f64) {
        let (i, t) = self.panel(y);
        (Self::cubic(&self.z[i], t), Self::cubic(&self.eta_pay[i], t).max(0.0), Self::cubic(&self.payment[i], t).max(0.0))
    }

    /// `ẑ(y)`.
    pub fn z(&self, y: f64) -> f64 {
        self.controls(y).0
    }

    /// Payment `π̂(y)`.
    pub fn payment(&self, y: f64) -> f64 {
        self.controls(y).2
    }

    /// Payment in utility units, `u(π̂(y))`.
    pub fn eta_pay(&self, y: f64) -> f64 {
        self.controls(y).1
    }

    /// Agent effort `â(ẑ(y))`.
    pub fn effort(&self, params: &ModelParams, y: f64) -> f64 {
        params.cost().a_hat(self.z(y))
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn upper_exit(&self) -> UpperExit {
        self.upper_exit
    }
}

/// `(ẑ, u(π̂))` at a point of the value function, from `I₀(v′, v″)` and `(F*)′(δv′)`.
pub fn controls_at(params: &ModelParams, dv: f64, ddv: f64) -> Result<(f64, f64)> {
    match params.i0(dv, ddv) {
        I0Value::Finite { z, .. } => Ok((z, params.f_star_prime(params.delta() * dv))),
        I0Value::Unbounded => Err(Error::Domain(format!("I0 unbounded at v' = {dv}, v'' = {ddv}"))),
    }
}

fn policy_on(params: &ModelParams, fb: &FreeBoundaryResult, upper: f64, exit: UpperExit) -> Result<FeedbackPolicy> {
    let c = &fb.curve;
    let idx: Vec<usize> = (0..c.len()).filter(|&i| c.ys()[i] <= upper).collect();
    let mut ys = Vec::with_capacity(idx.len());
    let mut zs = Vec::with_capacity(idx.len());
    let mut pays = Vec::with_capacity(idx.len());
    for &i in &idx {
        let (z, pay) = controls_at(params, c.d1()[i], c.d2()[i])?;
        ys.push(c.ys()[i]);
        zs.push(z);
        pays.push(pay);
    }
    if ys.last().is_some_and(|&y| y < upper) {
        let (_, p, q) = c.eval(upper);
        let (z, pay) = controls_at(params, p, q)?;
        ys.push(upper);
        zs.push(z);
        pays.push(pay);
    }
    FeedbackPolicy::from_tables(params, ys, zs, pays, exit)
}

/// Feedback controls of the optimal contract on `[0, y_gp]`.
pub fn feedback_controls(params: &ModelParams, fb: &FreeBoundaryResult) -> Result<FeedbackPolicy> {
    match fb.classification {
        Classification::Tangent { y_gp } => policy_on(params, fb, y_gp, UpperExit::GoldenParachute),
        Classification::NoTangencyWithinHorizon { .. } => {
            Err(Error::Unsupported("feedback controls need a Tangent classification (finite y_gp)".into()))
        }
    }
}

/// Controls on the resolved horizon of a no-tangency solve, exiting there; the simulated values
/// are biased and flagged as such.
pub fn feedback_controls_truncated(params: &ModelParams, fb: &FreeBoundaryResult) -> Result<FeedbackPolicy> {
    match fb.classification {
        Classification::NoTangencyWithinHorizon { y_max, .. } => policy_on(params, fb, y_max, UpperExit::Truncated),
        Classification::Tangent { .. } => feedback_controls(params, fb),
    }
}

#[derive(Debug, Clone, Copy)]
struct PathOutcome {
    principal: f64,
    agent: f64,
    tau: f64,
    capped: bool,
    at_zero: bool,
    min_state: f64,
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn run_path(
    params: &ModelParams,
    policy: &FeedbackPolicy,
    terminal: &dyn Fn(f64) -> f64,
    y0: f64,
    cfg: &SimConfig,
    path: usize,
) -> PathOutcome {
    let (r, rho, sigma) = (params.r(), params.rho(), params.sigma());
    let cost = params.cost();
    let upper = policy.upper();
    let done = |tau: f64, y: f64, principal: f64, agent: f64, capped: bool, min_state: f64| PathOutcome {
        principal: principal + (-rho * tau).exp() * terminal(y),
        agent: agent + (-r * tau).exp() * y,
        tau,
        capped,
        at_zero: !capped && y <= 0.0,
        min_state,
    };
    if y0 <= 0.0 {
        return done(0.0, 0.0, 0.0, 0.0, false, 0.0);
    }
    if y0 >= upper {
        return done(0.0, y0, 0.0, 0.0, false, y0);
    }
    let mut rng = path_rng(cfg.seed, path);
    let sq = cfg.dt.sqrt();
    let (half_rho, half_r) = ((-0.5 * rho * cfg.dt).exp(), (-0.5 * r * cfg.dt).exp());
    let (mut t, mut y) = (0.0, y0);
    // e^{−ρt} and e^{−rt} at the start of the current step.
    let (mut disc_p, mut disc_a) = (1.0, 1.0);
    let (mut principal, mut agent) = (0.0, 0.0);
    let mut min_state = y0;
    loop {
        let dt = cfg.dt.min(cfg.t_cap - t);
        if dt <= 0.0 {
            return done(t, y, principal, agent, true, min_state);
        }
        let full = dt == cfg.dt;
        let (z, pay, payment) = policy.controls(y);
        let a = cost.a_hat(z);
        let h = cost.cost(a);
        let xi: f64 = rng.sample(StandardNormal);
        let vol = r * z * sigma;
        let y_next = y + r * (y + h - pay) * dt + vol * if full { sq } else { dt.sqrt() } * xi;
        let (exit, step) = if y_next <= 0.0 || y_next >= upper {
            let b = if y_next <= 0.0 { 0.0 } else { upper };
            (Some(b), dt * ((b - y) / (y_next - y)).clamp(0.0, 1.0))
        } else {
            // Crossing between the endpoints, from the Brownian bridge with the step's volatility.
            let scale = -2.0 / (vol * vol * dt);
            let (arg_low, arg_high) = (scale * y * y_next, scale * (upper - y) * (upper - y_next));
            if arg_low.max(arg_high) > -33.0 {
                let (p_low, p_high) = (arg_low.exp(), arg_high.exp());
                let u: f64 = rng.random();
                if u < p_low {
                    (Some(0.0), 0.5 * dt)
                } else if u < p_low + p_high {
                    (Some(upper), 0.5 * dt)
                } else {
                    (None, dt)
                }
            } else {
                (None, dt)
            }
        };
        let (mid_p, mid_a) = if full && step == cfg.dt {
            (disc_p * half_rho, disc_a * half_r)
        } else {
            (disc_p * (-0.5 * rho * step).exp(), disc_a * (-0.5 * r * step).exp())
        };
        principal += rho * mid_p * (a - payment) * step;
        agent += r * mid_a * (pay - h) * step;
        t += step;
        if let Some(b) = exit {
            return done(t, b, principal, agent, false, min_state);
        }
        disc_p = mid_p * if full { half_rho } else { (-0.5 * rho * step).exp() };
        disc_a = mid_a * if full { half_r } else { (-0.5 * r * step).exp() };
        y = y_next;
        min_state = min_state.min(y);
    }
}

fn aggregate(outcomes: &[PathOutcome], truncated: bool) -> SimResult {
    let n = outcomes.len() as f64;
    let principal: Vec<f64> = outcomes.iter().map(|o| o.principal).collect();
    let agent: Vec<f64> = outcomes.iter().map(|o| o.agent).collect();
    let capped = outcomes.iter().filter(|o| o.capped).count() as f64 / n;
    SimResult {
        principal_value: Estimate::from_samples(&principal),
        agent_value: Estimate::from_samples(&agent),
        tau_stats: TauStats {
            mean: outcomes.iter().map(|o| o.tau).sum::<f64>() / n,
            max: outcomes.iter().map(|o| o.tau).fold(0.0, f64::max),
            capped_fraction: capped,
        },
        absorbed_at_zero_fraction: outcomes.iter().filter(|o| o.at_zero).count() as f64 / n,
        min_state: outcomes.iter().map(|o| o.min_state).fold(f64::INFINITY, f64::min),
        horizon_biased: truncated || capped > CAPPED_FRACTION_LIMIT,
    }
}

/// Simulates an arbitrary feedback policy from `y0`, retiring at 0 and at the policy's upper
/// exit with reward `terminal(Y_τ)`.
pub fn simulate_policy(
    params: &ModelParams,
    policy: &FeedbackPolicy,
    terminal: &(dyn Fn(f64) -> f64 + Sync),
    y0: f64,
    cfg: &SimConfig,
) -> Result<SimResult> {
    cfg.validate(params)?;
    if !(y0 >= 0.0 && y0 <= policy.upper()) {
        return Err(Error::Domain(format!("y0 = {y0} outside [0, {}]", policy.upper())));
    }
    let outcomes: Vec<PathOutcome> =
        (0..cfg.n_paths).into_par_iter().map(|i| run_path(params, policy, terminal, y0, cfg, i)).collect();
    Ok(aggregate(&outcomes, policy.upper_exit() == UpperExit::Truncated))
}

/// Simulates the optimal contract of a Tangent solve from `y0 ∈ [0, y_gp]`.
pub fn simulate(params: &ModelParams, fb: &FreeBoundaryResult, y0: f64, cfg: &SimConfig) -> Result<SimResult> {
    let policy = feedback_controls(params, fb)?;
    let fbar: FaceliftResult = facelift_closed_form(params);
    simulate_policy(params, &policy, &|y| fbar.value(y), y0, cfg)
}

/// Settings of the degenerate contract sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegenerateConfig {
    /// Scaled initial utility; the contract starts at `y0/√ε`.
    pub y0: f64,
    /// Constant sensitivity, above `h′(ā)`.
    pub z: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegenerateRow {
    pub eps: f64,
    /// Deterministic retirement date `−ln(ε)/ε`.
    pub horizon: f64,
    pub principal_value: Estimate,
    pub hit_zero_fraction: f64,
    /// `exp(−2h(ā)y0/(rσ²z²√ε))`, an upper bound on the probability of hitting 0.
    pub hit_zero_bound: f64,
}

/// Estimates `J^P(C_ε, ā)` for the contracts `π = u⁻¹(εY)`, `τ = (−ln ε/ε) ∧ T₀`, constant `z`.
///
/// `Y` is the Ornstein-Uhlenbeck process `dY = ((r − ε)Y + rh(ā))dt + rzσ dW`, stepped exactly.
pub fn degenerate_sequence(params: &ModelParams, eps_list: &[f64], cfg: &DegenerateConfig) -> Result<Vec<DegenerateRow>> {
    if params.rho() < params.gamma() * params.r() {
        return Err(Error::Precondition(format!(
            "degenerate sequence needs rho >= gamma·r, got rho = {} < {}",
            params.rho(),
            params.gamma() * params.r()
        )));
    }
    let cost = params.cost();
    let a_max = cost.a_max();
    if !(cfg.z > cost.marginal(a_max)) {
        return Err(Error::InvalidParameter { name: "z", constraint: "> h'(a_max)" });
    }
    if !(cfg.y0 > 0.0) || cfg.n_paths == 0 || !(cfg.dt > 0.0) {
        return Err(Error::InvalidParameter { name: "degenerate config", constraint: "y0 > 0, paths >= 1, dt > 0" });
    }
    let bound = params.r().min(1.0);
    if eps_list.iter().any(|&e| !(e > 0.0 && e < bound)) || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Precondition("eps_list must be decreasing in (0, min(r, 1))".into()));
    }
    let (r, rho, sigma) = (params.r(), params.rho(), params.sigma());
    let h_max = cost.cost(a_max);
    let rows = eps_list
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let horizon = -eps.ln() / eps;
            let n_steps = (horizon / cfg.dt).ceil() as usize;
            let dt = horizon / n_steps as f64;
            let kappa = r - eps;
            let growth = (kappa * dt).exp();
            let shift = r * h_max / kappa * (growth - 1.0);
            let noise = r * cfg.z * sigma * ((growth * growth - 1.0) / (2.0 * kappa)).sqrt();
            let start = cfg.y0 / eps.sqrt();
            let outcomes: Vec<(f64, bool)> = (0..cfg.n_paths)
                .into_par_iter()
                .map(|i| {
                    let mut rng = path_rng(cfg.seed.wrapping_add(k as u64), i);
                    let (mut t, mut y, mut running) = (0.0, start, 0.0);
                    for _ in 0..n_steps {
                        let xi: f64 = rng.sample(StandardNormal);
                        let y_next = growth * y + shift + noise * xi;
                        if y_next <= 0.0 {
                            let step = dt * (y / (y - y_next)).clamp(0.0, 1.0);
                            running += rho * (-rho * (t + 0.5 * step)).exp() * params.f(0.5 * eps * y) * step;
                            t += step;
                            let value = running + a_max * (1.0 - (-rho * t).exp());
                            return (value, true);
                        }
                        running += rho * (-rho * (t + 0.5 * dt)).exp() * params.f(0.5 * eps * (y + y_next)) * dt;
                        t += dt;
                        y = y_next;
                    }
                    let disc = (-rho * horizon).exp();
                    (disc * params.f(y) + running + a_max * (1.0 - disc), false)
                })
                .collect();
            let values: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
            let hits = outcomes.iter().filter(|o| o.1).count() as f64 / cfg.n_paths as f64;
            DegenerateRow {
                eps,
                horizon,
                principal_value: Estimate::from_samples(&values),
                hit_zero_fraction: hits,
                hit_zero_bound: (-2.0 * h_max * cfg.y0 / (r * sigma * sigma * cfg.z * cfg.z * eps.sqrt())).exp(),
            }
        })
        .collect();
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CostSpec;

    fn degenerate_params() -> ModelParams {
        ModelParams::new(1.0, 2.0, 0.1, 2.0, CostSpec::new(0.2, 0.05, 1.0).unwrap(), 0.0).unwrap()
    }

    fn linear_policy(upper: f64) -> FeedbackPolicy {
        let ys: Vec<f64> = (0..=20).map(|i| upper * i as f64 / 20.0).collect();
        let z = ys.iter().map(|y| 0.6 + 0.2 * y).collect();
        let pay = ys.iter().map(|y| 0.1 * y).collect();
        FeedbackPolicy::from_tables(&sann_like(), ys, z, pay, UpperExit::GoldenParachute).unwrap()
    }

    fn sann_like() -> ModelParams {
        ModelParams::from_delta_eta(1.0, 0.05, 2.0, CostSpec::new(0.5, 0.4, 50.0).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn config_invariants() {
        let m = sann_like();
        let ok = SimConfig { n_paths: 1, dt: 1e-3, seed: 0, t_cap: 18.0 };
        assert!(ok.validate(&m).is_ok());
        assert!(SimConfig { dt: 0.02, ..ok }.validate(&m).is_err());
        assert!(SimConfig { t_cap: 17.0, ..ok }.validate(&m).is_err());
        assert!(SimConfig { n_paths: 0, ..ok }.validate(&m).is_err());
    }

    #[test]
    fn start_at_zero_is_immediate_retirement() {
        let m = sann_like();
        let cfg = SimConfig { n_paths: 16, dt: 1e-3, seed: 3, t_cap: 40.0 };
        let res = simulate_policy(&m, &linear_policy(1.0), &|y| -y * y, 0.0, &cfg).unwrap();
        assert_eq!(res.principal_value.mean, 0.0);
        assert_eq!(res.agent_value.mean, 0.0);
        assert_eq!(res.tau_stats.max, 0.0);
    }

    #[test]
    fn agent_value_is_a_martingale_for_any_policy() {
        let m = sann_like();
        let cfg = SimConfig { n_paths: 20_000, dt: 1e-3, seed: 11, t_cap: 40.0 };
        let res = simulate_policy(&m, &linear_policy(1.0), &|y| -y * y, 0.4, &cfg).unwrap();
        assert!(res.agent_value.z_score(0.4) < 3.0, "{:?}", res.agent_value);
        assert!(res.min_state > 0.0);
        assert!((0.0..=1.0).contains(&res.absorbed_at_zero_fraction));
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let m = sann_like();
        let cfg = SimConfig { n_paths: 500, dt: 1e-3, seed: 5, t_cap: 40.0 };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_policy(&m, &linear_policy(1.0), &|y| -y * y, 0.3, &cfg).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn degenerate_guard_and_bound() {
        let m = ModelParams::new(1.0, 1.5, 0.1, 2.0, CostSpec::new(0.2, 0.05, 1.0).unwrap(), 0.0).unwrap();
        let cfg = DegenerateConfig { y0: 0.1, z: 0.5, n_paths: 10, dt: 1e-2, seed: 1 };
        assert!(degenerate_sequence(&m, &[0.5], &cfg).is_err());
        let rows = degenerate_sequence(&degenerate_params(), &[0.5], &cfg).unwrap();
        assert!(rows[0].principal_value.mean < 1.0);
        assert!(rows[0].hit_zero_fraction <= rows[0].hit_zero_bound + 1e-12);
    }

    #[test]
    fn degenerate_rejects_small_sensitivity() {
        let cfg = DegenerateConfig { y0: 0.1, z: 0.2, n_paths: 10, dt: 1e-2, seed: 1 };
        assert!(degenerate_sequence(&degenerate_params(), &[0.5], &cfg).is_err());
    }

    #[test]
    fn estimate_statistics() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
