//! Necessary and sufficient conditions for the absence of a Golden Parachute, read off the
//! action of the dynamic programming operator on the face-lift `F̄`.
//!
//! With `N(F̄) = 0` by construction of the face-lift, `F̄` solves the variational equation at `y`
//! exactly when `I₀(F̄′(y), F̄″(y)) ≤ 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facelift::FaceliftResult;
use crate::model::ModelParams;
use crate::numerics::optimize::bisect;

/// Minimum number of grid points in the trailing window of the necessary-condition scan.
pub const MIN_TRAILING_POINTS: usize = 64;

/// Outcome of a sufficient condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    Triggered,
    NotTriggered,
    NotApplicable,
}

impl Condition {
    fn from_bool(b: bool) -> Self {
        if b {
            Condition::Triggered
        } else {
            Condition::NotTriggered
        }
    }

    pub fn is_triggered(self) -> bool {
        self == Condition::Triggered
    }
}

/// Verdicts of the three sufficient conditions and of the necessary scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpVerdict {
    /// `h′(0) = 0`.
    pub ngp1: Condition,
    /// `h′(0) > 0`, `F̄″` non-increasing and `I₀(F̄′(0), F̄″(0)) ≤ 0`.
    pub ngp2: Condition,
    /// `h′(0) > 0` and the two curvature inequalities on `h` and `F̄`.
    pub ngp3: Condition,
    /// `sup I₀(F̄′, F̄″) ≤ 0` over the trailing quarter of the grid.
    pub necessary_scan: bool,
    /// `8βηh2`, only for `γ = 2` and `δ = 1`.
    pub sann_criterion: Option<f64>,
    /// `I₀(F̄′(0), F̄″(0))` when `F̄″(0)` is finite.
    pub i0_at_origin: Option<f64>,
    /// Largest `I₀(F̄′, F̄″)` over the trailing window (`+∞` if unbounded there).
    pub trailing_sup: f64,
}

impl GpVerdict {
    /// Some sufficient condition excludes a Golden Parachute.
    pub fn excludes_gp(&self) -> bool {
        self.ngp1.is_triggered() || self.ngp2.is_triggered() || self.ngp3.is_triggered()
    }
}

fn i0_on_facelift(params: &ModelParams, fbar: &FaceliftResult, y: f64) -> f64 {
    params.i0(fbar.slope(y), fbar.curvature(y)).value().unwrap_or(f64::INFINITY)
}

/// Evaluates the no-Golden-Parachute conditions on `y_grid`.
pub fn ngp_check(params: &ModelParams, fbar: &FaceliftResult, y_grid: &[f64]) -> Result<GpVerdict> {
    if y_grid.windows(2).any(|w| !(w[1] > w[0])) || y_grid.first().is_some_and(|&y| y < 0.0) {
        return Err(Error::Precondition("y_grid must be non-negative and strictly increasing".into()));
    }
    let trailing = y_grid.len() / 4;
    if trailing < MIN_TRAILING_POINTS {
        return Err(Error::GridTooCoarse(format!(
            "necessary scan needs at least {MIN_TRAILING_POINTS} trailing points, grid of {} gives {trailing}",
            y_grid.len()
        )));
    }
    let cost = params.cost();
    let beta = cost.beta();
    let (delta, eta) = (params.delta(), params.eta());

    let ngp1 = Condition::from_bool(beta == 0.0);

    let curvature_at_origin = fbar.curvature(0.0);
    let i0_at_origin =
        curvature_at_origin.is_finite().then(|| params.i0(fbar.slope(0.0), curvature_at_origin).value().unwrap_or(f64::INFINITY));
    let curvatures: Vec<f64> = y_grid.iter().map(|&y| fbar.curvature(y)).collect();
    let non_increasing = curvatures.windows(2).all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
    let ngp2 = match i0_at_origin {
        Some(i0) if beta > 0.0 && non_increasing => Condition::from_bool(i0 <= 0.0),
        _ => Condition::NotApplicable,
    };

    // For quadratic cost ((h′)²)″/h″ = 2·h2 on the whole effort interval.
    let ngp3 = if beta > 0.0 && curvature_at_origin.is_finite() {
        let mut sup_ratio: f64 = 0.0;
        let mut sup_slope: f64 = f64::NEG_INFINITY;
        for &y in y_grid {
            let (p, q) = (fbar.slope(y), fbar.curvature(y));
            if q < 0.0 && q.is_finite() {
                sup_ratio = sup_ratio.max(-p / q);
            }
            if q.is_finite() {
                sup_slope = sup_slope.max(p + 2.0 * eta * q * cost.h2());
            }
        }
        let first = 2.0 * cost.h2() >= sup_ratio / eta;
        let second = sup_slope <= -1.0 / (delta * beta);
        Condition::from_bool(first && second)
    } else {
        Condition::NotApplicable
    };

    let window = &y_grid[y_grid.len() - trailing..];
    let trailing_sup = window.iter().map(|&y| i0_on_facelift(params, fbar, y)).fold(f64::NEG_INFINITY, f64::max);

    Ok(GpVerdict {
        ngp1,
        ngp2,
        ngp3,
        necessary_scan: trailing_sup <= 0.0,
        sann_criterion: sann_criterion(params).ok(),
        i0_at_origin,
        trailing_sup,
    })
}

/// `8βηh2`; a value of at least 1 excludes a Golden Parachute when `F = −y²` and `δ = 1`.
pub fn sann_criterion(params: &ModelParams) -> Result<f64> {
    if params.gamma() != 2.0 {
        return Err(Error::Precondition(format!("sann_criterion needs gamma = 2, got {}", params.gamma())));
    }
    if params.delta() != 1.0 {
        return Err(Error::Precondition(format!("sann_criterion needs delta = 1, got {}", params.delta())));
    }
    Ok(sann_criterion_value(params.cost().beta(), params.eta(), params.cost().h2()))
}

/// The unguarded product `8βηh2`.
pub fn sann_criterion_value(beta: f64, eta: f64, h2: f64) -> f64 {
    8.0 * beta * eta * h2
}

/// Start of the stopping-admissible tail of the face-lift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingOnset {
    /// Smallest `y1` with `I₀(F̄′, F̄″) ≤ 0` on the scanned part of `[y1, y_hi]`.
    pub y1: f64,
    /// The a-priori bound `(F̄′)⁻¹(F̄′(0) ∧ −1/(βδ))`.
    pub bound: f64,
}

/// Locates `y1` by a geometric scan of `[y_lo, y_hi]` refined by bisection.
///
/// Requires `β > 0`; `None` when the tail is not admissible at `y_hi`.
pub fn stopping_onset(params: &ModelParams, fbar: &FaceliftResult, y_lo: f64, y_hi: f64) -> Result<Option<StoppingOnset>> {
    let beta = params.cost().beta();
    if !(beta > 0.0) {
        return Err(Error::Precondition("stopping onset needs beta > 0".into()));
    }
    if !(y_lo > 0.0 && y_hi > y_lo) {
        return Err(Error::Precondition(format!("need 0 < y_lo < y_hi, got [{y_lo}, {y_hi}]")));
    }
    let target = fbar.slope(0.0).min(-1.0 / (beta * params.delta()));
    let bound = fbar.slope_inverse(target).unwrap_or(f64::INFINITY);
    let g = |y: f64| i0_on_facelift(params, fbar, y);
    if g(y_hi) > 0.0 {
        return Ok(None);
    }
    let n = 4000;
    let ratio = (y_hi / y_lo).powf(1.0 / n as f64);
    let mut y = y_hi;
    let mut last_bad = None;
    for _ in 0..n {
        let prev = y / ratio;
        if g(prev) > 0.0 {
            last_bad = Some(prev);
            break;
        }
        y = prev;
    }
    let y1 = match last_bad {
        None => y_lo,
        Some(bad) => bisect(|t| if g(t) > 0.0 { -1.0 } else { 1.0 }, bad, y, 1e-13 * y).unwrap_or(y),
    };
    Ok(Some(StoppingOnset { y1, bound }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facelift::facelift_closed_form;
    use crate::model::CostSpec;

    fn params(delta: f64, eta: f64, gamma: f64, h2: f64, beta: f64) -> ModelParams {
        ModelParams::from_delta_eta(delta, eta, gamma, CostSpec::new(h2, beta, 50.0).unwrap(), 0.0).unwrap()
    }

    fn grid(y_max: f64) -> Vec<f64> {
        (0..=400).map(|i| y_max * i as f64 / 400.0).collect()
    }

    #[test]
    fn zero_marginal_cost_triggers_ngp1() {
        let m = params(1.0, 0.05, 2.0, 0.5, 0.0);
        let v = ngp_check(&m, &facelift_closed_form(&m), &grid(50.0)).unwrap();
        assert_eq!(v.ngp1, Condition::Triggered);
        assert_eq!(v.ngp2, Condition::NotApplicable);
        assert!(!v.necessary_scan);
    }

    #[test]
    fn sann_figure_has_no_ngp2() {
        let m = params(1.0, 0.05, 2.0, 0.5, 0.4);
        let v = ngp_check(&m, &facelift_closed_form(&m), &grid(50.0)).unwrap();
        assert!((v.sann_criterion.unwrap() - 0.08).abs() < 1e-15);
        assert_eq!(v.ngp1, Condition::NotTriggered);
        assert_eq!(v.ngp2, Condition::NotTriggered);
        assert!(v.necessary_scan);
    }

    #[test]
    fn large_marginal_cost_triggers_ngp2() {
        let m = params(1.0, 0.5, 2.0, 1.0, 0.4);
        let v = ngp_check(&m, &facelift_closed_form(&m), &grid(50.0)).unwrap();
        assert!((v.sann_criterion.unwrap() - 1.6).abs() < 1e-15);
        assert_eq!(v.ngp2, Condition::Triggered);
        // 1/(8ηh2²) − β/h2
        assert!((v.i0_at_origin.unwrap() - (0.25 - 0.4)).abs() < 1e-9);
    }

    #[test]
    fn criterion_boundary_is_exact() {
        let m = params(1.0, 0.25, 2.0, 0.5, 1.0);
        assert_eq!(sann_criterion_value(1.0, 0.25, 0.5), 1.0);
        // η passes through σ = √(2η/r), so the guarded form is exact only up to rounding.
        assert!((sann_criterion(&m).unwrap() - 1.0).abs() < 1e-15);
        assert!(m.i0(0.0, -2.0).value().unwrap().abs() < 1e-10);
        assert_eq!(sann_criterion_value(0.0, 0.3, 0.7), 0.0);
    }

    #[test]
    fn criterion_guard() {
        assert!(sann_criterion(&params(1.0, 0.05, 1.5, 0.5, 0.4)).is_err());
        assert!(sann_criterion(&params(0.75, 0.05, 2.0, 0.5, 0.4)).is_err());
    }

    #[test]
    fn coarse_grid_rejected() {
        let m = params(1.0, 0.05, 2.0, 0.5, 0.4);
        let short: Vec<f64> = (0..200).map(|i| i as f64 * 0.1).collect();
        assert!(matches!(ngp_check(&m, &facelift_closed_form(&m), &short), Err(Error::GridTooCoarse(_))));
    }

    #[test]
    fn curvature_blowup_makes_ngp2_inapplicable() {
        let m = params(1.0, 1.0, 1.5, 1.0, 0.01);
        let v = ngp_check(&m, &facelift_closed_form(&m), &grid(100.0)).unwrap();
        assert_eq!(v.ngp2, Condition::NotApplicable);
        assert_eq!(v.ngp3, Condition::NotApplicable);
    }

    #[test]
    fn onset_respects_bound() {
        for m in [params(1.0, 0.05, 2.0, 0.5, 0.4), params(0.75, 1.0, 1.5, 1.0, 0.01), params(1.0, 1.0, 1.5, 1.0, 0.01)] {
            let fb = facelift_closed_form(&m);
            let onset = stopping_onset(&m, &fb, 1e-3, 1e7).unwrap().unwrap();
            assert!(onset.y1 <= onset.bound * (1.0 + 1e-9), "{onset:?}");
            assert!(i0_on_facelift(&m, &fb, onset.y1 * (1.0 + 1e-6)) <= 0.0);
            assert!(i0_on_facelift(&m, &fb, onset.y1 * (1.0 - 1e-6)) > 0.0);
        }
    }
}
