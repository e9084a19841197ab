//! Problem data and the analytic primitives built on it.
//!
//! Utility is `u(π) = π^{1/γ}`, so the retirement reward is `F(y) = −y^γ`. The cost of effort is
//! `h(a) = ½·h2·a² + β·a` on `[0, ā]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::interp::{hermite, locate};
use crate::numerics::optimize::golden_newton_max;

/// Argument tolerance of the bounded scalar maximisations.
pub const ARG_TOL: f64 = 1e-10;

/// Quadratic-plus-linear effort cost on `[0, a_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    h2: f64,
    beta: f64,
    a_max: f64,
}

impl CostSpec {
    pub fn new(h2: f64, beta: f64, a_max: f64) -> Result<Self> {
        if !(h2.is_finite() && h2 >= 0.0) {
            return Err(Error::InvalidParameter { name: "h2", constraint: "finite and >= 0" });
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidParameter { name: "beta", constraint: "finite and >= 0" });
        }
        if !(a_max.is_finite() && a_max > 0.0) {
            return Err(Error::InvalidParameter { name: "a_max", constraint: "finite and > 0" });
        }
        if h2 + beta <= 0.0 {
            return Err(Error::InvalidParameter { name: "h2 + beta", constraint: "> 0 (cost not identically zero)" });
        }
        Ok(Self { h2, beta, a_max })
    }

    pub fn h2(&self) -> f64 {
        self.h2
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    /// `h(a)`.
    pub fn cost(&self, a: f64) -> f64 {
        0.5 * self.h2 * a * a + self.beta * a
    }

    /// `h′(a)`, the sensitivity that implements effort `a`.
    pub fn marginal(&self, a: f64) -> f64 {
        self.h2 * a + self.beta
    }

    /// Agent best response to sensitivity `z`.
    ///
    /// With `h2 = 0` and `z > β` the objective is increasing and the boundary effort `ā` is returned.
    pub fn a_hat(&self, z: f64) -> f64 {
        if z <= self.beta {
            return 0.0;
        }
        if self.h2 == 0.0 {
            return self.a_max;
        }
        ((z - self.beta) / self.h2).clamp(0.0, self.a_max)
    }

    /// `h*(z) = sup_a {z·a − h(a)}`.
    pub fn h_star(&self, z: f64) -> f64 {
        let a = self.a_hat(z);
        (z * a - self.cost(a)).max(0.0)
    }
}

/// Scalar problem data with the derived constants `δ = r/ρ` and `η = ½rσ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    r: f64,
    rho: f64,
    sigma: f64,
    gamma: f64,
    reservation: f64,
    cost: CostSpec,
    delta: f64,
    eta: f64,
}

fn positive(name: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, constraint: "finite and > 0" })
    }
}

impl ModelParams {
    /// `reservation` is the consumption level `R`; the agent's reservation utility is `u(R)`.
    pub fn new(r: f64, rho: f64, sigma: f64, gamma: f64, cost: CostSpec, reservation: f64) -> Result<Self> {
        positive("r", r)?;
        positive("rho", rho)?;
        positive("sigma", sigma)?;
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(Error::InvalidParameter { name: "gamma", constraint: "finite and > 1" });
        }
        if !(reservation.is_finite() && reservation >= 0.0) {
            return Err(Error::InvalidParameter { name: "R", constraint: "finite and >= 0" });
        }
        Ok(Self { r, rho, sigma, gamma, reservation, cost, delta: r / rho, eta: 0.5 * r * sigma * sigma })
    }

    /// Parameters in the `(δ, η)` normalisation with `r = 1`, `ρ = 1/δ`, `σ = sqrt(2η)`.
    pub fn from_delta_eta(delta: f64, eta: f64, gamma: f64, cost: CostSpec, reservation: f64) -> Result<Self> {
        positive("delta", delta)?;
        positive("eta", eta)?;
        Self::new(1.0, 1.0 / delta, (2.0 * eta).sqrt(), gamma, cost, reservation)
    }

    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn reservation(&self) -> f64 {
        self.reservation
    }
    pub fn cost(&self) -> &CostSpec {
        &self.cost
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Conjugate exponent `γ* = γ/(γ−1)`.
    pub fn gamma_star(&self) -> f64 {
        self.gamma / (self.gamma - 1.0)
    }

    /// `u(π) = π^{1/γ}`.
    pub fn utility(&self, payment: f64) -> f64 {
        payment.max(0.0).powf(1.0 / self.gamma)
    }

    /// Reservation utility `u(R)`.
    pub fn reservation_utility(&self) -> f64 {
        self.utility(self.reservation)
    }

    /// `F(y) = −y^γ`.
    pub fn f_eval(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("F requires y >= 0, got {y}")));
        }
        Ok(self.f(y))
    }

    /// `F` without the domain check; negative `y` is clamped to 0.
    pub fn f(&self, y: f64) -> f64 {
        -y.max(0.0).powf(self.gamma)
    }

    /// `F′(y)`.
    pub fn f_prime(&self, y: f64) -> f64 {
        -self.gamma * y.max(0.0).powf(self.gamma - 1.0)
    }

    /// `F*(p) = inf_{y ≥ 0} {yp − F(y)}`.
    pub fn f_star(&self, p: f64) -> f64 {
        if p >= 0.0 {
            0.0
        } else {
            -(self.gamma - 1.0) * (-p / self.gamma).powf(self.gamma_star())
        }
    }

    /// `(F*)′(p)`, the minimising `y` in the definition of `F*`.
    pub fn f_star_prime(&self, p: f64) -> f64 {
        if p >= 0.0 {
            0.0
        } else {
            (-p / self.gamma).powf(1.0 / (self.gamma - 1.0))
        }
    }

    /// `(F*)″(p)` for `p < 0`; zero for `p > 0`.
    pub fn f_star_second(&self, p: f64) -> f64 {
        if p >= 0.0 {
            0.0
        } else {
            let e = 1.0 / (self.gamma - 1.0);
            -e / self.gamma * (-p / self.gamma).powf(e - 1.0)
        }
    }

    /// `T F(y, p) = yp − F(y) − F*(p)`.
    pub fn t_f(&self, y: f64, p: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("T F requires y >= 0, got {y}")));
        }
        Ok(y * p - self.f(y) - self.f_star(p))
    }

    /// `G*(p) = sup_{a ∈ [0, ā]} {a + p·h(a)}`.
    pub fn g_star(&self, p: f64) -> f64 {
        let c = &self.cost;
        if p >= 0.0 {
            return c.a_max + p * c.cost(c.a_max);
        }
        let (_, value) = golden_newton_max(
            |a| a + p * c.cost(a),
            |a| 1.0 + p * c.marginal(a),
            |_| p * c.h2,
            0.0,
            c.a_max,
            ARG_TOL,
        );
        value.max(0.0)
    }

    /// The objective of `I₀` at effort `a`: `a + δ·h(a)·p + δ·η·h′(a)²·q`.
    pub fn i0_objective(&self, a: f64, p: f64, q: f64) -> f64 {
        let c = &self.cost;
        let z = c.marginal(a);
        a + self.delta * c.cost(a) * p + self.delta * self.eta * z * z * q
    }

    /// `I₀(p, q) = sup_{z ≥ β} {â(z) + δ·h(â(z))·p + δ·η·z²·q}`, `+∞` for `q > 0`.
    pub fn i0(&self, p: f64, q: f64) -> I0Value {
        if q > 0.0 || !q.is_finite() || !p.is_finite() {
            return I0Value::Unbounded;
        }
        let c = &self.cost;
        let de = self.delta * self.eta;
        let df = |a: f64| {
            let z = c.marginal(a);
            1.0 + self.delta * z * p + 2.0 * de * z * c.h2 * q
        };
        let d2f = |_: f64| self.delta * c.h2 * p + 2.0 * de * c.h2 * c.h2 * q;
        let (a, value) = golden_newton_max(|a| self.i0_objective(a, p, q), df, d2f, 0.0, c.a_max, ARG_TOL);
        I0Value::Finite { value, z: c.marginal(a), a }
    }
}

/// Value of the operator `I₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum I0Value {
    /// Supremum with its maximising sensitivity `z` and effort `a = â(z)`.
    Finite { value: f64, z: f64, a: f64 },
    /// Positive curvature: the supremum over sensitivities is infinite.
    Unbounded,
}

impl I0Value {
    pub fn value(&self) -> Option<f64> {
        match self {
            I0Value::Finite { value, .. } => Some(*value),
            I0Value::Unbounded => None,
        }
    }

    /// `max(I₀, 0)`, with the unbounded sentinel mapped to `None`.
    pub fn positive_part(&self) -> Option<f64> {
        self.value().map(|v| v.max(0.0))
    }
}

/// Sampled function on a strictly increasing grid, with first and second derivative samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    ys: Vec<f64>,
    vals: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl Curve {
    pub fn new(ys: Vec<f64>, vals: Vec<f64>, d1: Vec<f64>, d2: Vec<f64>) -> Result<Self> {
        let n = ys.len();
        if n < 2 || vals.len() != n || d1.len() != n || d2.len() != n {
            return Err(Error::Precondition(format!(
                "curve samples must share a length >= 2 (ys {n}, vals {}, d1 {}, d2 {})",
                vals.len(),
                d1.len(),
                d2.len()
            )));
        }
        if ys.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("curve grid must be strictly increasing".into()));
        }
        for (name, s) in [("ys", &ys), ("vals", &vals), ("d1", &d1), ("d2", &d2)] {
            if let Some(i) = s.iter().position(|x| !x.is_finite()) {
                return Err(Error::Precondition(format!("curve sample {name}[{i}] is not finite")));
            }
        }
        Ok(Self { ys, vals, d1, d2 })
    }

    /// Samples `f(y) -> (value, slope, curvature)` on `ys`.
    pub fn from_fn<F: Fn(f64) -> (f64, f64, f64)>(ys: Vec<f64>, f: F) -> Result<Self> {
        let (mut vals, mut d1, mut d2) = (Vec::with_capacity(ys.len()), Vec::with_capacity(ys.len()), Vec::with_capacity(ys.len()));
        for &y in &ys {
            let (v, p, q) = f(y);
            vals.push(v);
            d1.push(p);
            d2.push(q);
        }
        Self::new(ys, vals, d1, d2)
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }
    pub fn vals(&self) -> &[f64] {
        &self.vals
    }
    pub fn d1(&self) -> &[f64] {
        &self.d1
    }
    pub fn d2(&self) -> &[f64] {
        &self.d2
    }
    pub fn len(&self) -> usize {
        self.ys.len()
    }
    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }
    pub fn y_min(&self) -> f64 {
        self.ys[0]
    }
    pub fn y_max(&self) -> f64 {
        self.ys[self.ys.len() - 1]
    }

    /// Value, slope and curvature at `y` (clamped to the grid): cubic Hermite in value and slope,
    /// linear in curvature.
    pub fn eval(&self, y: f64) -> (f64, f64, f64) {
        let y = y.clamp(self.y_min(), self.y_max());
        let i = locate(&self.ys, y);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (v, p) = hermite(y0, y1, self.vals[i], self.vals[i + 1], self.d1[i], self.d1[i + 1], y);
        let w = (y - y0) / (y1 - y0);
        let q = (1.0 - w) * self.d2[i] + w * self.d2[i + 1];
        (v, p, q)
    }

    pub fn value_at(&self, y: f64) -> f64 {
        self.eval(y).0
    }

    /// Largest second difference of the value samples, normalised by the local spacing.
    pub fn max_second_difference(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 1..self.len() - 1 {
            let (h0, h1) = (self.ys[i] - self.ys[i - 1], self.ys[i + 1] - self.ys[i]);
            let s0 = (self.vals[i] - self.vals[i - 1]) / h0;
            let s1 = (self.vals[i + 1] - self.vals[i]) / h1;
            worst = worst.max(2.0 * (s1 - s0) / (h0 + h1));
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(gamma: f64) -> ModelParams {
        ModelParams::new(1.0, 1.0, 0.5, gamma, CostSpec::new(0.5, 0.4, 10.0).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn f_examples() {
        assert_eq!(params(2.0).f_eval(0.0).unwrap(), 0.0);
        assert_eq!(params(2.0).f_eval(3.0).unwrap(), -9.0);
        assert_eq!(params(3.0).f_eval(2.0).unwrap(), -8.0);
        assert!(matches!(params(2.0).f_eval(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn f_star_examples() {
        let m = params(2.0);
        assert_eq!(m.f_star(1.0), 0.0);
        assert!((m.f_star(-2.0) + 1.0).abs() < 1e-15);
        let grid = (0..=100_000).map(|k| k as f64 * 1e-4).map(|y| y * -2.0 + y * y).fold(f64::INFINITY, f64::min);
        assert!((grid + 1.0).abs() < 1e-7);
    }

    #[test]
    fn cost_examples() {
        let c = CostSpec::new(0.5, 0.4, 10.0).unwrap();
        assert_eq!(c.a_hat(0.4), 0.0);
        assert_eq!(c.h_star(0.4), 0.0);
        assert!((c.a_hat(1.4) - 2.0).abs() < 1e-12);
        assert!((c.h_star(1.4) - 1.0).abs() < 1e-12);
        let c = CostSpec::new(1.0, 0.0, 1.0).unwrap();
        assert_eq!(c.a_hat(5.0), 1.0);
        assert!((c.h_star(5.0) - 4.5).abs() < 1e-12);
        let linear = CostSpec::new(0.0, 0.3, 2.0).unwrap();
        assert_eq!(linear.a_hat(0.5), 2.0);
        assert!(CostSpec::new(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn i0_examples() {
        let m = ModelParams::from_delta_eta(1.0, 0.05, 2.0, CostSpec::new(0.5, 0.4, 1e3).unwrap(), 0.0).unwrap();
        assert!((m.i0(0.0, -2.0).value().unwrap() - 9.2).abs() < 1e-9);
        assert_eq!(m.i0(0.0, 1.0), I0Value::Unbounded);
        let m2 = params(2.0);
        assert!((m2.i0(0.0, 0.0).value().unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn g_star_examples() {
        let m = ModelParams::new(1.0, 1.0, 1.0, 2.0, CostSpec::new(1.0, 0.0, 1.0).unwrap(), 0.0).unwrap();
        assert_eq!(m.g_star(0.0), 1.0);
        assert!((m.g_star(1.0) - 1.5).abs() < 1e-15);
        assert!((m.g_star(-1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn t_f_examples() {
        let m = params(2.0);
        assert!(m.t_f(1.0, -2.0).unwrap().abs() < 1e-15);
        assert_eq!(m.t_f(0.0, 0.0).unwrap(), 0.0);
        assert!((m.t_f(1.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn derived_constants() {
        let m = ModelParams::new(1.5, 0.5, 0.4, 2.0, CostSpec::new(1.0, 0.1, 1.0).unwrap(), 0.0).unwrap();
        assert_eq!(m.delta(), 1.5 / 0.5);
        assert_eq!(m.eta(), 0.5 * 1.5 * 0.4 * 0.4);
    }

    #[test]
    fn curve_validation_and_eval() {
        let ys: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let c = Curve::from_fn(ys, |y| (y * y * y, 3.0 * y * y, 6.0 * y)).unwrap();
        let (v, p, q) = c.eval(1.234);
        assert!((v - 1.234f64.powi(3)).abs() < 1e-12);
        assert!((p - 3.0 * 1.234f64.powi(2)).abs() < 1e-11);
        assert!((q - 6.0 * 1.234).abs() < 1e-12);
        assert!(Curve::new(vec![0.0, 0.0], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(Curve::new(vec![0.0, 1.0], vec![0.0, f64::NAN], vec![0.0; 2], vec![0.0; 2]).is_err());
    }
}
