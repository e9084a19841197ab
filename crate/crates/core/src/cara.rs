//! Finite-horizon variant with CARA utilities for both parties and lump-sum retirement pay.
//!
//! A Golden Parachute needs the dynamic programming operator applied to the obstacle
//! `U_P(x − y)` to be non-negative somewhere. With quadratic cost on `A = [0, ∞)` its sign does
//! not depend on `(x, y)`, and it is non-negative exactly when `β ≥ β̲`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::optimize::bisect;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaraParams {
    sigma: f64,
    h2: f64,
    beta: f64,
    psi: f64,
    eta_p: f64,
    t_horizon: f64,
}

impl CaraParams {
    pub fn new(sigma: f64, h2: f64, beta: f64, psi: f64, eta_p: f64, t_horizon: f64) -> Result<Self> {
        let positive = [("cara.sigma", sigma), ("cara.h2", h2), ("cara.psi", psi), ("cara.eta_p", eta_p), ("cara.t_horizon", t_horizon)];
        for (name, x) in positive {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::InvalidParameter { name, constraint: "finite and > 0" });
            }
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidParameter { name: "cara.beta", constraint: "finite and >= 0" });
        }
        Ok(Self { sigma, h2, beta, psi, eta_p, t_horizon })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn h2(&self) -> f64 {
        self.h2
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn psi(&self) -> f64 {
        self.psi
    }
    pub fn eta_p(&self) -> f64 {
        self.eta_p
    }
    pub fn t_horizon(&self) -> f64 {
        self.t_horizon
    }

    /// Same parameters with another marginal cost at zero effort.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.sigma, self.h2, beta, self.psi, self.eta_p, self.t_horizon)
    }

    /// `σ²·h2`.
    fn s2h(&self) -> f64 {
        self.sigma * self.sigma * self.h2
    }
}

/// Value of the operator `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MValue {
    Finite(f64),
    /// The supremum over sensitivities is infinite.
    Unbounded,
}

impl MValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            MValue::Finite(v) => Some(*v),
            MValue::Unbounded => None,
        }
    }
}

/// `sup_{z ≥ lo} {a z² + 2b z}` for `a < 0`.
fn concave_sup_above(a: f64, b: f64, lo: f64) -> f64 {
    let z = (-b / a).max(lo);
    a * z * z + 2.0 * b * z
}

/// `sup_{z < hi} {a z² + 2b z}` for `a < 0`; the boundary value when the vertex is not below `hi`.
fn concave_sup_below(a: f64, b: f64, hi: f64) -> f64 {
    let z = (-b / a).min(hi);
    a * z * z + 2.0 * b * z
}

/// `M(q1, q2, γ1, γ2) = sup_z {â(z)q1 + (½σ²ψz² + h(â(z)))q2 + ½σ²z²γ1 + σ²zγ2}` with
/// `â(z) = (z − β)⁺/h2`.
pub fn m_operator(cp: &CaraParams, q1: f64, q2: f64, g1: f64, g2: f64) -> MValue {
    let s2h = cp.s2h();
    let curv_low = s2h * (cp.psi * q2 + g1);
    let curv_high = curv_low + q2;
    if !(curv_low < 0.0 && curv_high < 0.0) {
        return MValue::Unbounded;
    }
    let beta = cp.beta;
    let high = concave_sup_above(curv_high, s2h * g2 + q1, beta) - beta * (2.0 * q1 + beta * q2);
    let low = concave_sup_below(curv_low, s2h * g2, beta);
    MValue::Finite(high.max(low) / (2.0 * cp.h2))
}

/// `(q1, q2, γ1, γ2)` of `(x, y) ↦ U_P(x − y)` at a point where `U_P = u_p < 0`.
pub fn obstacle_derivatives(cp: &CaraParams, u_p: f64) -> (f64, f64, f64, f64) {
    let e = cp.eta_p;
    (-e * u_p, e * u_p, e * e * u_p, -e * e * u_p)
}

/// Sign of the diffusion operator applied to the obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorSign {
    /// Immediate retirement is never optimal: no Golden Parachute.
    Negative,
    Zero,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionVerdict {
    /// `−½σ²v_xx − M` at `U_P(x − y) = −1`; other points scale it by `−U_P > 0`.
    pub value: f64,
    pub sign: OperatorSign,
}

/// Evaluates `−½σ²∂ₓₓ − M` on `U_P(x − y)` for marginal cost `beta`.
pub fn diffusion_sign_scan(cp: &CaraParams, beta: f64) -> Result<DiffusionVerdict> {
    let cp = cp.with_beta(beta)?;
    let (q1, q2, g1, g2) = obstacle_derivatives(&cp, -1.0);
    let m = m_operator(&cp, q1, q2, g1, g2)
        .value()
        .ok_or_else(|| Error::Domain("M unbounded on the CARA obstacle".into()))?;
    let value = -0.5 * cp.sigma * cp.sigma * g1 - m;
    let sign = if value < 0.0 {
        OperatorSign::Negative
    } else if value == 0.0 {
        OperatorSign::Zero
    } else {
        OperatorSign::Positive
    };
    Ok(DiffusionVerdict { value, sign })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaThresholds {
    /// `β̲`: a Golden Parachute needs `β ≥ β̲`.
    pub beta_lower: f64,
    /// `β̄`: above it the retirement-free sensitivity `z < β` is optimal in `M`.
    pub beta_bar: f64,
    pub gp_possible: bool,
    /// `1 > σ²h2·η(σ²h2·ψ − 1)`, equivalent to `β̲ > 0`.
    pub riskaversion_condition: bool,
}

pub fn beta_thresholds(cp: &CaraParams) -> BetaThresholds {
    let s2h = cp.s2h();
    let (psi, eta) = (cp.psi, cp.eta_p);
    let ratio = s2h * psi * (1.0 + s2h * eta) / (1.0 + s2h * (psi + eta));
    let beta_lower = (1.0 - ratio.sqrt()).max(0.0);
    let beta_bar = 1.0 - psi * cp.sigma * (cp.h2 / ((psi + eta) * (1.0 + s2h * (psi + eta)))).sqrt();
    BetaThresholds {
        beta_lower,
        beta_bar,
        gp_possible: cp.beta >= beta_lower,
        riskaversion_condition: 1.0 > s2h * eta * (s2h * psi - 1.0),
    }
}

/// Smallest `β ≥ 0` at which the operator sign turns non-negative, by bisection on
/// [`diffusion_sign_scan`] over `[0, 1]`.
pub fn sign_scan_root(cp: &CaraParams, tol: f64) -> Result<f64> {
    let sign = |b: f64| diffusion_sign_scan(cp, b).map(|v| v.value);
    if sign(0.0)? >= 0.0 {
        return Ok(0.0);
    }
    if sign(1.0)? < 0.0 {
        return Err(Error::NoBracket { lower: "operator sign at beta = 0 is negative".into(), upper: "negative at beta = 1".into() });
    }
    let root = bisect(|b| if sign(b).unwrap_or(f64::NAN) < 0.0 { -1.0 } else { 1.0 }, 0.0, 1.0, tol);
    root.ok_or_else(|| Error::NoBracket { lower: "beta = 0".into(), upper: "beta = 1".into() })
}
