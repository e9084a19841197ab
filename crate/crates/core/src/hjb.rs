//! Free-boundary dynamic programming equation for the principal's value `v`.
//!
//! On the continuation region `v` solves `N(y) = I₀(v′, v″)⁺` with
//! `N = v − δyv′ + F*(δv′)`, which inverts to an explicit second-order ODE. The initial slope is
//! found by bisection between shots that cross below `F̄` and shots that lift off above it.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facelift::{closed_form_coefficient, facelift_closed_form_on, FaceliftRegime, FaceliftResult};
use crate::model::{Curve, ModelParams};
use crate::numerics::ode::{OdeEnd, OdeOptions, Step};
use crate::numerics::radau;
use crate::numerics::optimize::{brent_root, golden_max};

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HjbConfig {
    /// Explicit horizon; `None` selects `20·y_scale` with `F̄′(y_scale) = −2/(βδ)`.
    pub y_max: Option<f64>,
    /// Upper bound on the automatic horizon, and the horizon used when `β = 0`.
    pub y_max_cap: f64,
    /// Classification tolerance on the gap `v − F̄` and on the slope mismatch.
    pub tol: f64,
    pub rtol: f64,
    pub atol: f64,
    /// With `β = 0` efforts are restricted to `[a_min_frac·ā, ā]`.
    pub a_min_frac: f64,
    /// Number of samples in the reported curve.
    pub output_points: usize,
    pub max_bisections: usize,
}

impl Default for HjbConfig {
    fn default() -> Self {
        Self {
            y_max: None,
            y_max_cap: 1e7,
            tol: 1e-5,
            rtol: 1e-11,
            atol: 1e-12,
            a_min_frac: 1e-6,
            output_points: 2001,
            max_bisections: 200,
        }
    }
}

impl HjbConfig {
    fn ode_options(&self, span: f64) -> OdeOptions {
        OdeOptions { rtol: self.rtol, atol: self.atol, h_max: span / 200.0, ..OdeOptions::default() }
    }
}

/// Lowest admissible effort: `a_min_frac·ā` when `β = 0`, else 0.
pub fn effort_floor(params: &ModelParams, cfg: &HjbConfig) -> f64 {
    if params.cost().beta() > 0.0 {
        0.0
    } else {
        cfg.a_min_frac * params.cost().a_max()
    }
}

/// Continuation numerator `N = v − δyv′ + F*(δv′)`.
pub fn numerator(params: &ModelParams, y: f64, v: f64, dv: f64) -> f64 {
    let d = params.delta();
    v - d * y * dv + params.f_star(d * dv)
}

/// Curvature solving `I₀(v′, v″) = n` and the effort attaining the infimum.
///
/// The ratio `(n − a − δh(a)v′)/(δηh′(a)²)` has derivative of the sign of
/// `h2·a − β − δv′β² − 2h2·n`, so the minimiser is explicit.
pub fn curvature_for(params: &ModelParams, n: f64, dv: f64, a_min: f64) -> (f64, f64) {
    let c = params.cost();
    let (d, de) = (params.delta(), params.delta() * params.eta());
    let (h2, beta, a_max) = (c.h2(), c.beta(), c.a_max());
    let a = if h2 > 0.0 {
        ((beta + d * dv * beta * beta + 2.0 * h2 * n) / h2).clamp(a_min, a_max)
    } else if -1.0 - d * beta * dv < 0.0 {
        a_max
    } else {
        a_min
    };
    let z = c.marginal(a);
    ((n - a - d * c.cost(a) * dv) / (de * z * z), a)
}

/// Partial derivatives `(∂v″/∂v, ∂v″/∂v′)` of the curvature map at `(y, v, v′)`.
///
/// The effort is optimal, so by the envelope property only the explicit dependence on `N` and
/// `v′` contributes.
pub fn curvature_gradient(params: &ModelParams, y: f64, v: f64, dv: f64, a_min: f64) -> (f64, f64) {
    let d = params.delta();
    let n = numerator(params, y, v, dv);
    let (_, a) = curvature_for(params, n.max(0.0), dv, a_min);
    let c = params.cost();
    let z = c.marginal(a);
    let denom = d * params.eta() * z * z;
    let (dn_dv, dn_dp) = if n > 0.0 { (1.0, -d * y + d * params.f_star_prime(d * dv)) } else { (0.0, 0.0) };
    (dn_dv / denom, (dn_dp - d * c.cost(a)) / denom)
}

/// Result of [`rhs_curvature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureValue {
    pub curvature: f64,
    pub effort: f64,
    pub numerator: f64,
}

/// `v″` from the dynamic programming equation at a continuation state.
pub fn rhs_curvature(params: &ModelParams, y: f64, v: f64, dv: f64, a_min: f64) -> Result<CurvatureValue> {
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("rhs curvature requires y >= 0, got {y}")));
    }
    let n = numerator(params, y, v, dv);
    if n < -1e-12 * (1.0 + v.abs()) {
        return Err(Error::StoppingRegion { at: y });
    }
    let n = n.max(0.0);
    let (curvature, effort) = curvature_for(params, n, dv, a_min);
    if !curvature.is_finite() {
        return Err(Error::UnboundedCurvature { at: y });
    }
    Ok(CurvatureValue { curvature, effort, numerator: n })
}

/// How the integration leaves the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OriginStart {
    /// `δ ≤ 1`: second-order Taylor seed `v = by + ½v″(0)y²` on `[0, y0]`, `y0 = 10⁻⁶·min(y_max, 1)`.
    Taylor { slope: f64, curvature: f64, y0: f64 },
    /// `δ > 1`: zero-effort branch `v = C·y^{1/δ}` (where `N = 0` and `I₀ < 0`) on `[0, y_switch]`.
    ZeroEffortBranch { coeff: f64, exponent: f64, y_switch: f64 },
}

impl OriginStart {
    fn end(&self) -> f64 {
        match *self {
            OriginStart::Taylor { y0, .. } => y0,
            OriginStart::ZeroEffortBranch { y_switch, .. } => y_switch,
        }
    }

    fn eval(&self, y: f64) -> (f64, f64, f64) {
        match *self {
            OriginStart::Taylor { slope, curvature, .. } => {
                (slope * y + 0.5 * curvature * y * y, slope + curvature * y, curvature)
            }
            OriginStart::ZeroEffortBranch { coeff, exponent, .. } => {
                if y <= 0.0 {
                    return (0.0, f64::INFINITY, f64::NEG_INFINITY);
                }
                let v = coeff * y.powf(exponent);
                (v, exponent * v / y, exponent * (exponent - 1.0) * v / (y * y))
            }
        }
    }
}

/// Terminal event of a single shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShotOutcome {
    /// `v` fell below `F̄`, or `N < 0` with `v′ < F̄′`.
    Crossed { at: f64 },
    /// `N < 0` while `v ≥ F̄` and `v′ ≥ F̄′`.
    LeftContinuation { at: f64 },
    /// `v″` turned positive.
    LiftOff { at: f64 },
    /// Reached the horizon with `v > F̄`.
    Horizon,
    /// The integrator could not continue past `at`.
    Stalled { at: f64 },
}

impl ShotOutcome {
    fn crossed(&self) -> bool {
        matches!(self, ShotOutcome::Crossed { .. })
    }
}

/// Integrated trajectory from the origin.
#[derive(Debug, Clone)]
pub struct Shot {
    pub parameter: f64,
    pub origin: OriginStart,
    pub outcome: ShotOutcome,
    steps: Vec<Step<2>>,
    /// Largest `y` covered by the trajectory.
    pub end: f64,
}

impl Shot {
    /// `(v, v′)` at `y ∈ [0, end]`.
    pub fn eval(&self, y: f64) -> (f64, f64) {
        if y <= self.origin.end() || self.steps.is_empty() {
            let (v, p, _) = self.origin.eval(y.min(self.origin.end()));
            return (v, p);
        }
        let s = self.step_at(y);
        let st = s.eval(y.clamp(s.x0, s.x1));
        (st[0], st[1])
    }

    /// `(v, v′, v″)`, with `v″` from the derivative of the continuous extension.
    pub fn eval_full(&self, y: f64) -> (f64, f64, f64) {
        if y <= self.origin.end() || self.steps.is_empty() {
            return self.origin.eval(y.min(self.origin.end()));
        }
        let s = self.step_at(y);
        let y = y.clamp(s.x0, s.x1);
        let st = s.eval(y);
        (st[0], st[1], s.eval_derivative(y)[1])
    }

    fn step_at(&self, y: f64) -> &Step<2> {
        let i = self.steps.partition_point(|s| s.x1 < y).min(self.steps.len() - 1);
        &self.steps[i]
    }

    pub fn start(&self) -> f64 {
        self.origin.end()
    }

    /// Accepted step end points.
    pub fn knots(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.x1)
    }
}

/// Seeds the shot at the origin for shooting parameter `b`.
fn origin_start(params: &ModelParams, b: f64, y_max: f64, a_min: f64) -> Result<OriginStart> {
    let delta = params.delta();
    if delta <= 1.0 {
        let n0 = params.f_star(delta * b);
        let (q0, _) = curvature_for(params, n0.max(0.0), b, a_min);
        let y0 = 1e-6 * y_max.min(1.0);
        Ok(OriginStart::Taylor { slope: b, curvature: q0, y0 })
    } else {
        let exponent = 1.0 / delta;
        let probe = |y: f64| {
            let v = b * y.powf(exponent);
            let p = exponent * v / y;
            let q = exponent * (exponent - 1.0) * v / (y * y);
            params.i0(p, q).value().unwrap_or(f64::INFINITY)
        };
        let mut lo = 1e-12 * y_max;
        while probe(lo) >= 0.0 {
            lo *= 1e-3;
            if lo < 1e-300 {
                return Err(Error::NoBracket { lower: "zero-effort branch switch".into(), upper: format!("{lo}") });
            }
        }
        let mut hi = lo;
        while probe(hi) < 0.0 {
            hi *= 2.0;
            if hi > 1e3 * y_max {
                return Err(Error::NoBracket { lower: format!("{lo}"), upper: format!("{hi}") });
            }
        }
        let lo = (hi / 2.0).max(lo);
        let y_switch = brent_root(probe, lo, hi, 1e-15 * hi).expect("sign change bracketed");
        Ok(OriginStart::ZeroEffortBranch { coeff: b, exponent, y_switch })
    }
}

/// Integrates the equation from the origin with shooting parameter `b` up to `y_max`.
///
/// For `δ ≤ 1`, `b = v′(0)`. For `δ > 1` the value leaves the origin along `C·y^{1/δ}` and
/// `b = C`.
pub fn integrate_from_origin(params: &ModelParams, fbar: &FaceliftResult, b: f64, y_max: f64, cfg: &HjbConfig) -> Result<Shot> {
    if !(b >= 0.0) {
        return Err(Error::Precondition(format!("initial slope must be >= 0, got {b}")));
    }
    if params.delta() > 1.0 && b == 0.0 {
        return Err(Error::Precondition("zero-effort branch coefficient must be > 0".into()));
    }
    let a_min = effort_floor(params, cfg);
    let origin = origin_start(params, b, y_max, a_min)?;
    let y_start = origin.end();
    let (v0, p0, _) = origin.eval(y_start);
    let mut steps: Vec<Step<2>> = Vec::new();
    let mut outcome = ShotOutcome::Horizon;
    let cross_tol = |y: f64| 1e-12 * (1.0 + fbar.value(y).abs());

    let crossed = |y: f64, v: f64| v - fbar.value(y) < -cross_tol(y);
    // N and v″ amplify errors in v′ by the stiffness ratio, so they are only tested at step ends.
    let check = |y: f64, v: f64, p: f64| -> Option<ShotOutcome> {
        if crossed(y, v) {
            return Some(ShotOutcome::Crossed { at: y });
        }
        let n = numerator(params, y, v, p);
        if n < -1e-10 * (1.0 + v.abs()) {
            // Heading under F̄ counts as a crossing.
            if p < fbar.slope(y) {
                return Some(ShotOutcome::Crossed { at: y });
            }
            return Some(ShotOutcome::LeftContinuation { at: y });
        }
        if curvature_for(params, n.max(0.0), p, a_min).0 > 0.0 {
            return Some(ShotOutcome::LiftOff { at: y });
        }
        None
    };
    if let Some(ev) = check(y_start, v0, p0) {
        return Ok(Shot { parameter: b, origin, outcome: ev, steps, end: y_start });
    }

    let rhs = |y: f64, s: &[f64; 2]| {
        let n = numerator(params, y, s[0], s[1]).max(0.0);
        [s[1], curvature_for(params, n, s[1], a_min).0]
    };
    let jac = |y: f64, s: &[f64; 2], _: &[f64; 2]| {
        let (qv, qp) = curvature_gradient(params, y, s[0], s[1], a_min);
        [[0.0, 1.0], [qv, qp]]
    };
    let opts = cfg.ode_options(y_max - y_start);
    let end = radau::integrate_with_jacobian(rhs, jac, y_start, [v0, p0], y_max, &opts, |step| {
        for k in 1..4 {
            let y = step.x0 + (step.x1 - step.x0) * k as f64 / 4.0;
            if crossed(y, step.eval(y)[0]) {
                outcome = ShotOutcome::Crossed { at: y };
                steps.push(*step);
                return ControlFlow::Break(());
            }
        }
        if let Some(ev) = check(step.x1, step.y1[0], step.y1[1]) {
            outcome = ev;
            steps.push(*step);
            return ControlFlow::Break(());
        }
        steps.push(*step);
        ControlFlow::Continue(())
    });
    let reached = steps.last().map_or(y_start, |s| s.x1);
    match end {
        OdeEnd::Completed | OdeEnd::Stopped { .. } => {}
        OdeEnd::StepUnderflow { x } | OdeEnd::NonFinite { x } | OdeEnd::TooManySteps { x } => {
            outcome = ShotOutcome::Stalled { at: x };
        }
    }
    Ok(Shot { parameter: b, origin, outcome, steps, end: reached })
}

/// Classification of a single sampled curve against `F̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShotClass {
    Crossed,
    StaysAbove,
    Tangent { y: f64 },
}

/// Compares sampled `v` with `F̄` on a shared grid.
pub fn classify_shot(curve: &Curve, fbar: &Curve, tol: f64) -> Result<ShotClass> {
    if curve.ys() != fbar.ys() {
        return Err(Error::Precondition("classify_shot needs curves on the same grid".into()));
    }
    let n = curve.len();
    let gaps: Vec<f64> = curve.vals().iter().zip(fbar.vals()).map(|(v, f)| v - f).collect();
    if gaps.iter().any(|g| *g < -tol) {
        return Ok(ShotClass::Crossed);
    }
    let (i, g) = gaps[1..n - 1]
        .iter()
        .enumerate()
        .map(|(i, g)| (i + 1, *g))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one interior point");
    let slope_gap = (curve.d1()[i] - fbar.d1()[i]).abs();
    if g.abs() <= tol && slope_gap <= tol {
        Ok(ShotClass::Tangent { y: curve.ys()[i] })
    } else {
        Ok(ShotClass::StaysAbove)
    }
}

/// Golden-Parachute classification of the solved free boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Classification {
    /// `v` meets `F̄` with smooth fit at `y_gp`; `v = F̄` beyond.
    Tangent { y_gp: f64 },
    /// No contact up to `y_max`, the largest `y` at which the bracketing shots still agree.
    NoTangencyWithinHorizon { y_max: f64, terminal_gap: f64 },
}

impl Classification {
    pub fn name(&self) -> &'static str {
        match self {
            Classification::Tangent { .. } => "Tangent",
            Classification::NoTangencyWithinHorizon { .. } => "NoTangencyWithinHorizon",
        }
    }

    pub fn y_gp(&self) -> Option<f64> {
        match *self {
            Classification::Tangent { y_gp } => Some(y_gp),
            Classification::NoTangencyWithinHorizon { .. } => None,
        }
    }
}

/// Outcome of [`shoot`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreeBoundaryResult {
    /// Critical shooting parameter: `v′(0)` for `δ ≤ 1`, the branch coefficient for `δ > 1`.
    pub b_star: f64,
    /// Width of the final bisection bracket.
    pub bracket_width: f64,
    pub origin: OriginStart,
    pub classification: Classification,
    pub curve: Curve,
    /// The horizon the shots were integrated to.
    pub horizon: f64,
    /// Maximiser of `v` on `[u(R), ∞)`.
    pub y_hat: f64,
    /// `v(y_hat)`; `None` when `u(R)` lies beyond the resolved horizon of a no-tangency solve.
    pub v_p: Option<f64>,
    /// `|v − F̄| + |v′ − F̄′|` at `y_gp` (zero when no tangency is reported).
    pub smooth_fit_residual: f64,
    /// `v = F̄` solves the equation on the whole horizon (no bisection was run).
    pub value_is_facelift: bool,
    pub bisections: usize,
}

/// The automatic horizon `20·y_scale`, capped.
pub fn default_y_max(params: &ModelParams, fbar: &FaceliftResult, cfg: &HjbConfig) -> f64 {
    let beta = params.cost().beta();
    if beta <= 0.0 {
        return cfg.y_max_cap;
    }
    match fbar.slope_inverse(-2.0 / (beta * params.delta())) {
        Some(y_scale) => (20.0 * y_scale).min(cfg.y_max_cap),
        None => cfg.y_max_cap,
    }
}

fn facelift_is_solution(params: &ModelParams, fbar: &FaceliftResult, y_max: f64) -> bool {
    (0..=2000).all(|i| {
        let y = y_max * 10f64.powf(-8.0 * (1.0 - i as f64 / 2000.0));
        params.i0(fbar.slope(y), fbar.curvature(y)).value().map_or(false, |v| v <= 0.0)
    })
}

/// Solves the free-boundary problem by bisection on the shooting parameter.
pub fn shoot(params: &ModelParams, cfg: &HjbConfig) -> Result<FreeBoundaryResult> {
    let (regime, _) = closed_form_coefficient(params);
    if regime == FaceliftRegime::Zero {
        return Err(Error::Unsupported(
            "rho >= gamma * r: the value is a_max and is not attained; see the first-best and degenerate-sequence routines".into(),
        ));
    }
    let fbar = facelift_closed_form_on(params, vec![0.0, 1.0])?;
    let y_max = cfg.y_max.unwrap_or_else(|| default_y_max(params, &fbar, cfg));
    if !(y_max > 0.0 && y_max.is_finite()) {
        return Err(Error::InvalidParameter { name: "grid.y_max", constraint: "finite and > 0" });
    }
    let branch = params.delta() > 1.0;

    if facelift_is_solution(params, &fbar, y_max) {
        let curve = fbar.sample(uniform(0.0, y_max, cfg.output_points))?;
        let u_r = params.reservation_utility();
        return Ok(FreeBoundaryResult {
            b_star: fbar.slope(0.0),
            bracket_width: 0.0,
            origin: OriginStart::Taylor { slope: 0.0, curvature: fbar.curvature(0.0).max(f64::MIN), y0: 0.0 },
            classification: Classification::Tangent { y_gp: 0.0 },
            y_hat: u_r,
            v_p: Some(fbar.value(u_r)),
            curve,
            horizon: y_max,
            smooth_fit_residual: 0.0,
            value_is_facelift: true,
            bisections: 0,
        });
    }

    let run = |b: f64| integrate_from_origin(params, &fbar, b, y_max, cfg);
    let (mut lo, mut hi);
    let mut lo_shot;
    let mut hi_shot;
    if branch {
        let mut c = 1.0;
        let mut s = run(c)?;
        if s.outcome.crossed() {
            loop {
                c *= 2.0;
                let next = run(c)?;
                if !next.outcome.crossed() {
                    lo = c / 2.0;
                    hi = c;
                    lo_shot = s;
                    hi_shot = next;
                    break;
                }
                s = next;
                if c > 1e12 {
                    return Err(Error::NoBracket { lower: format!("C = {}", c / 2.0), upper: "never stops crossing".into() });
                }
            }
        } else {
            loop {
                c /= 2.0;
                let next = run(c)?;
                if next.outcome.crossed() {
                    lo = c;
                    hi = 2.0 * c;
                    lo_shot = next;
                    hi_shot = s;
                    break;
                }
                s = next;
                if c < 1e-12 {
                    return Err(Error::NoBracket { lower: "never crosses".into(), upper: format!("C = {c}") });
                }
            }
        }
    } else {
        lo = 0.0;
        lo_shot = run(0.0)?;
        if !lo_shot.outcome.crossed() {
            hi = 0.0;
            hi_shot = lo_shot.clone();
        } else {
            hi = 1.0;
            hi_shot = run(hi)?;
            while hi_shot.outcome.crossed() {
                lo = hi;
                lo_shot = hi_shot;
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(Error::NoBracket { lower: format!("b = {lo}: Crossed"), upper: "b up to 1e12: Crossed".into() });
                }
                hi_shot = run(hi)?;
            }
        }
    }

    let mut bisections = 0;
    while bisections < cfg.max_bisections {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        let s = run(mid)?;
        bisections += 1;
        if s.outcome.crossed() {
            lo = mid;
            lo_shot = s;
        } else {
            hi = mid;
            hi_shot = s;
        }
    }

    let fb = &fbar;
    let gap = |y: f64| hi_shot.eval(y).0 - fb.value(y);
    let dgap = |y: f64| hi_shot.eval(y).1 - fb.slope(y);
    // Tolerances scale with the size of F̄ so contact far out is judged like contact near 0.
    let rel_gap = |y: f64| gap(y) / (1.0 + fb.value(y).abs());
    let rel_dgap = |y: f64| dgap(y) / (1.0 + fb.slope(y).abs());

    // Contact is only possible where stopping is admissible, I₀(F̄′, F̄″) ≤ 0.
    let admissible = |y: f64| params.i0(fb.slope(y), fb.curvature(y)).value().is_some_and(|v| v <= 0.0);

    // Minimum relative gap along the upper shot over the admissible set, refined inside the best step.
    let start = hi_shot.start();
    let mut knots: Vec<f64> = std::iter::once(start).chain(hi_shot.knots()).collect();
    knots.dedup();
    let mut best: Option<(f64, f64)> = None;
    for w in knots.windows(2) {
        for k in 1..=8 {
            let y = w[0] + (w[1] - w[0]) * k as f64 / 8.0;
            let g = rel_gap(y);
            if best.is_none_or(|(_, b)| g < b) && admissible(y) {
                best = Some((y, g));
            }
        }
    }
    let (y_min_gap, interior) = match best {
        Some((y_best, _)) => {
            let span = (hi_shot.end - start) / 1e4;
            let (mut lo_y, mut hi_y) = ((y_best - span).max(start), (y_best + span).min(hi_shot.end));
            // Keep the refinement inside the admissible set.
            if !admissible(lo_y) {
                lo_y = brent_root(|y| if admissible(y) { 1.0 } else { -1.0 }, lo_y, y_best, 1e-14 * y_best).unwrap_or(y_best);
            }
            if !admissible(hi_y) {
                hi_y = brent_root(|y| if admissible(y) { -1.0 } else { 1.0 }, y_best, hi_y, 1e-14 * y_best).unwrap_or(y_best);
            }
            let (y, _) = golden_max(|y| -rel_gap(y), lo_y, hi_y, 1e-13 * hi_shot.end);
            (y, y > start && y < y_max * (1.0 - 1e-9))
        }
        None => (start, false),
    };
    let min_gap = gap(y_min_gap);

    let u_r = params.reservation_utility();
    if interior && rel_gap(y_min_gap).abs() <= cfg.tol && rel_dgap(y_min_gap).abs() <= cfg.tol {
        let y_gp = y_min_gap;
        let curve = assemble_curve(fb, &hi_shot, y_gp, y_max, cfg.output_points)?;
        let (y_hat, v_p) = argmax_value(&hi_shot, u_r, y_gp);
        let v_p = if u_r >= y_gp { fb.value(u_r) } else { v_p };
        let smooth_fit_residual = min_gap.abs() + dgap(y_gp).abs();
        return Ok(FreeBoundaryResult {
            b_star: hi,
            bracket_width: hi - lo,
            origin: hi_shot.origin,
            classification: Classification::Tangent { y_gp },
            curve,
            horizon: y_max,
            y_hat,
            v_p: Some(v_p),
            smooth_fit_residual,
            value_is_facelift: false,
            bisections,
        });
    }

    // No contact: keep the part of the trajectory on which both bracketing shots agree.
    let common_end = lo_shot.end.min(hi_shot.end);
    let agree = |y: f64| {
        let (a, b) = (lo_shot.eval(y).0, hi_shot.eval(y).0);
        (a - b).abs() <= 1e-8 * (1.0 + b.abs())
    };
    let mut resolved = start;
    for &y in knots.iter().filter(|&&y| y <= common_end) {
        if !agree(y) {
            break;
        }
        resolved = y;
    }
    let resolved = if lo == hi { hi_shot.end } else { resolved };
    let curve = assemble_curve(fb, &hi_shot, resolved, resolved, cfg.output_points)?;
    let (y_hat, v_p) = argmax_value(&hi_shot, u_r, resolved);
    let v_p = (u_r < resolved).then_some(v_p);
    Ok(FreeBoundaryResult {
        b_star: hi,
        bracket_width: hi - lo,
        origin: hi_shot.origin,
        classification: Classification::NoTangencyWithinHorizon { y_max: resolved, terminal_gap: gap(resolved) },
        curve,
        horizon: y_max,
        y_hat,
        v_p,
        smooth_fit_residual: 0.0,
        value_is_facelift: false,
        bisections,
    })
}

fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Samples the shot on `[0, y_join]` and `F̄` on `(y_join, y_end]`.
fn assemble_curve(
    fbar: &FaceliftResult,
    shot: &Shot,
    y_join: f64,
    y_end: f64,
    n: usize,
) -> Result<Curve> {
    let n = n.max(8);
    let n_shot = if y_end > y_join { n / 2 } else { n };
    let mut ys = uniform(0.0, y_join, n_shot);
    if y_end > y_join {
        ys.extend(uniform(y_join, y_end, n - n_shot + 1).into_iter().skip(1));
    }
    let (mut vals, mut d1, mut d2) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for &y in &ys {
        let (v, p, q) = if y <= y_join { shot.eval_full(y) } else { (fbar.value(y), fbar.slope(y), fbar.curvature(y)) };
        vals.push(v);
        d1.push(p);
        d2.push(q);
    }
    // The zero-effort branch has infinite slope and curvature at the origin.
    for s in [&mut d1, &mut d2] {
        if !s[0].is_finite() {
            s[0] = s[1];
        }
    }
    Curve::new(ys, vals, d1, d2)
}

/// `argmax v` of the shot on `[u_r, y_end]`; `(u_r, NaN)` when the interval is empty.
fn argmax_value(shot: &Shot, u_r: f64, y_end: f64) -> (f64, f64) {
    if u_r >= y_end {
        return (u_r, f64::NAN);
    }
    let n = 4000;
    let mut best = (u_r, shot.eval(u_r).0);
    for i in 0..=n {
        let y = u_r + (y_end - u_r) * i as f64 / n as f64;
        let v = shot.eval(y).0;
        if v > best.1 {
            best = (y, v);
        }
    }
    let w = (y_end - u_r) / n as f64;
    let (y, v) = golden_max(|y| shot.eval(y).0, (best.0 - w).max(u_r), (best.0 + w).min(y_end), 1e-12 * (1.0 + y_end));
    if v >= best.1 {
        (y, v)
    } else {
        best
    }
}

/// Residuals of the dynamic programming equation on the interior samples of a solved curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `max |min{v − F̄, Lv}|`.
    pub variational: f64,
    /// `max |Lv|` for the unconstrained form.
    pub operator: f64,
    /// `max |min{v − F̄, Lv}| / (1 + |v|)`.
    pub variational_scaled: f64,
    pub worst_at: f64,
}

/// `Lv = N − I₀(v′, v″)⁺` at a sample.
pub fn l_operator(params: &ModelParams, y: f64, v: f64, dv: f64, ddv: f64) -> f64 {
    let n = numerator(params, y, v, dv);
    match params.i0(dv, ddv).positive_part() {
        Some(i) => n - i,
        None => f64::NEG_INFINITY,
    }
}

/// Evaluates both forms of the equation on the interior points of `curve`.
pub fn residual_check(params: &ModelParams, curve: &Curve, fbar: &FaceliftResult) -> ResidualReport {
    let mut rep = ResidualReport { variational: 0.0, operator: 0.0, variational_scaled: 0.0, worst_at: 0.0 };
    let ys = curve.ys();
    for i in 1..curve.len() - 1 {
        let (y, v, p, q) = (ys[i], curve.vals()[i], curve.d1()[i], curve.d2()[i]);
        let lv = l_operator(params, y, v, p, q);
        let var = (v - fbar.value(y)).min(lv).abs();
        rep.operator = rep.operator.max(lv.abs());
        rep.variational = rep.variational.max(var);
        let scaled = var / (1.0 + v.abs());
        if scaled > rep.variational_scaled {
            rep.variational_scaled = scaled;
            rep.worst_at = y;
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CostSpec;

    fn sann() -> ModelParams {
        ModelParams::from_delta_eta(1.0, 0.05, 2.0, CostSpec::new(0.5, 0.4, 50.0).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn origin_curvature_closed_form() {
        let m = sann();
        let c = rhs_curvature(&m, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert!((c.curvature + 25.0).abs() < 1e-12);
        // I₀(0, q) = 0 has the root q = −25.
        let q = brent_root(|q| m.i0(0.0, q).value().unwrap(), -100.0, -1.0, 1e-12).unwrap();
        assert!((q + 25.0).abs() < 1e-8);
    }

    #[test]
    fn curvature_matches_grid_infimum() {
        let m = sann();
        let (y, v, dv) = (0.3, 0.25, 0.6);
        let c = rhs_curvature(&m, y, v, dv, 0.0).unwrap();
        let n = c.numerator;
        let cost = m.cost();
        let ratio = |a: f64| {
            let z = cost.marginal(a);
            (n - a - m.delta() * cost.cost(a) * dv) / (m.delta() * m.eta() * z * z)
        };
        let grid = (0..=10_000).map(|k| ratio(cost.a_max() * k as f64 / 10_000.0)).fold(f64::INFINITY, f64::min);
        assert!(c.curvature <= grid + 1e-12, "{} above grid {}", c.curvature, grid);
        assert!(grid - c.curvature < 1e-3);
        let (_, neg) = golden_max(|a| -ratio(a), 0.0, cost.a_max(), 1e-12);
        assert!((c.curvature + neg).abs() < 1e-9, "{} vs golden {}", c.curvature, -neg);
    }

    #[test]
    fn negative_slope_rejected_and_zero_slope_crosses() {
        let m = sann();
        let fbar = facelift_closed_form_on(&m, vec![0.0, 1.0]).unwrap();
        let cfg = HjbConfig::default();
        assert!(integrate_from_origin(&m, &fbar, -0.1, 50.0, &cfg).is_err());
        let s = integrate_from_origin(&m, &fbar, 0.0, 50.0, &cfg).unwrap();
        assert!(matches!(s.outcome, ShotOutcome::Crossed { .. }));
    }

    #[test]
    fn classify_examples() {
        let ys: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let f = Curve::from_fn(ys.clone(), |y| (-y * y, -2.0 * y, -2.0)).unwrap();
        let above = Curve::from_fn(ys.clone(), |y| (1.0 - y * y, -2.0 * y, -2.0)).unwrap();
        assert_eq!(classify_shot(&above, &f, 1e-6).unwrap(), ShotClass::StaysAbove);
        let below = Curve::from_fn(ys, |y| (-y * y - 0.1, -2.0 * y, -2.0)).unwrap();
        assert_eq!(classify_shot(&below, &f, 1e-6).unwrap(), ShotClass::Crossed);
    }

    #[test]
    fn reservation_beyond_resolved_horizon_leaves_value_unknown() {
        let cost = CostSpec::new(0.5, 0.4, 50.0).unwrap();
        let inside = ModelParams::new(1.0, 0.8, 0.1f64.sqrt(), 2.0, cost, 0.25).unwrap();
        let fb = shoot(&inside, &HjbConfig::default()).unwrap();
        let Classification::NoTangencyWithinHorizon { y_max, .. } = fb.classification else { panic!("{:?}", fb.classification) };
        assert!(y_max > 0.5 && y_max < 1.0);
        assert!((fb.y_hat - 0.5).abs() < 1e-12 && fb.v_p.is_some_and(|v| v < 0.0));

        let beyond = ModelParams::new(1.0, 0.8, 0.1f64.sqrt(), 2.0, cost, 1.0).unwrap();
        assert_eq!(shoot(&beyond, &HjbConfig::default()).unwrap().v_p, None);
    }
}
