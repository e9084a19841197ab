//! The face-lifted retirement reward `F̄`.
//!
//! For power utility `F̄(y) = −c·y^γ`. The coefficient is available in closed form, and is
//! cross-checked against a quadrature of the conjugate `F̄*` and a dynamic-programming solve of the
//! underlying deterministic control problem.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Curve, ModelParams};
use crate::numerics::optimize::brent_root;
use crate::numerics::quad;

/// Shape of `F̄` relative to `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaceliftRegime {
    /// `ρ ≥ γr`: `F̄ ≡ 0`.
    Zero,
    /// `ρ = r`: `F̄ = F`.
    EqualsF,
    /// `F̄ = −c·y^γ` with `c ∈ (0, 1)`.
    NonTrivial,
}

/// `F̄` in power-law form together with its samples on a working grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceliftResult {
    pub regime: FaceliftRegime,
    pub coeff: f64,
    pub gamma: f64,
    pub curve: Curve,
}

/// Default working grid: 401 uniform points on `[0, 10]`.
pub fn default_grid() -> Vec<f64> {
    (0..=400).map(|i| i as f64 * 0.025).collect()
}

impl FaceliftResult {
    /// `F̄(y)`.
    pub fn value(&self, y: f64) -> f64 {
        -self.coeff * y.max(0.0).powf(self.gamma)
    }

    /// `F̄′(y)`.
    pub fn slope(&self, y: f64) -> f64 {
        -self.coeff * self.gamma * y.max(0.0).powf(self.gamma - 1.0)
    }

    /// `F̄″(y)`; `−∞` at `y = 0` when `γ < 2` and the regime is not `Zero`.
    pub fn curvature(&self, y: f64) -> f64 {
        if self.coeff == 0.0 {
            return 0.0;
        }
        -self.coeff * self.gamma * (self.gamma - 1.0) * y.max(0.0).powf(self.gamma - 2.0)
    }

    /// `y` at which `F̄′(y) = slope` for a negative `slope`.
    pub fn slope_inverse(&self, slope: f64) -> Option<f64> {
        if self.coeff == 0.0 || slope >= 0.0 {
            return None;
        }
        Some((-slope / (self.coeff * self.gamma)).powf(1.0 / (self.gamma - 1.0)))
    }

    /// Samples `F̄` on `ys`. A non-finite curvature at `y = 0` is replaced by the sample at the
    /// next grid point so that the curve stays finite.
    pub fn sample(&self, ys: Vec<f64>) -> Result<Curve> {
        let n = ys.len();
        let mut vals = Vec::with_capacity(n);
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        for &y in &ys {
            vals.push(self.value(y));
            d1.push(self.slope(y));
            d2.push(self.curvature(y));
        }
        if n >= 2 && !d2[0].is_finite() {
            d2[0] = d2[1];
        }
        Curve::new(ys, vals, d1, d2)
    }
}

/// Closed-form coefficient `c = ((δγ−1)/(γ−1))^{γ−1}·δ^{−γ}` and its regime.
pub fn closed_form_coefficient(params: &ModelParams) -> (FaceliftRegime, f64) {
    let (gamma, delta) = (params.gamma(), params.delta());
    if delta * gamma <= 1.0 {
        (FaceliftRegime::Zero, 0.0)
    } else if params.r() == params.rho() {
        (FaceliftRegime::EqualsF, 1.0)
    } else {
        let c = ((delta * gamma - 1.0) / (gamma - 1.0)).powf(gamma - 1.0) * delta.powf(-gamma);
        (FaceliftRegime::NonTrivial, c)
    }
}

/// `F̄` from the closed form on the default working grid.
pub fn facelift_closed_form(params: &ModelParams) -> FaceliftResult {
    facelift_closed_form_on(params, default_grid()).expect("default grid is valid")
}

/// `F̄` from the closed form sampled on `ys`.
pub fn facelift_closed_form_on(params: &ModelParams, ys: Vec<f64>) -> Result<FaceliftResult> {
    let (regime, coeff) = closed_form_coefficient(params);
    let mut out = FaceliftResult {
        regime,
        coeff,
        gamma: params.gamma(),
        curve: Curve::new(vec![0.0, 1.0], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2])?,
    };
    out.curve = out.sample(ys)?;
    Ok(out)
}

/// Face-lift ODE residual `w − δyw′ + F*(δw′)` of the closed form at `y`.
pub fn ode_residual(params: &ModelParams, fbar: &FaceliftResult, y: f64) -> f64 {
    let w = fbar.value(y);
    let dw = fbar.slope(y);
    w - params.delta() * y * dw + params.f_star(params.delta() * dw)
}

const QUAD_REL_TOL: f64 = 1e-9;
const TAIL_REL_TOL: f64 = 1e-14;
const MAX_TAIL_PANELS: usize = 4000;

/// Integral representation of the conjugate `F̄*` and its derivatives.
#[derive(Debug, Clone, Copy)]
pub struct ConjugateIntegral<'a> {
    params: &'a ModelParams,
    k: f64,
}

impl<'a> ConjugateIntegral<'a> {
    pub fn new(params: &'a ModelParams) -> Result<Self> {
        let delta = params.delta();
        if params.r() == params.rho() {
            return Err(Error::Precondition("conjugate integral requires rho != r".into()));
        }
        if delta * params.gamma() <= 1.0 {
            return Err(Error::Precondition("conjugate integral requires rho < gamma * r".into()));
        }
        Ok(Self { params, k: 1.0 / (1.0 - delta) })
    }

    /// `F̄*(p)`.
    pub fn value(&self, p: f64) -> Result<f64> {
        if p >= 0.0 {
            return Ok(0.0);
        }
        let m = self.params;
        let k = self.k;
        let upper = m.delta() * -p;
        // Substitute x = −u, so the integrand is u^{−k−1}·F*(−u) on positive u.
        let g = |u: f64| u.powf(-k - 1.0) * m.f_star(-u);
        let integral = if m.delta() > 1.0 {
            let r = quad::integrate(g, 0.0, upper, QUAD_REL_TOL, 0.0, 4000);
            if !r.converged {
                return Err(Error::Quadrature { at: p, estimate: r.error });
            }
            -r.value
        } else {
            let mut total = 0.0;
            let mut a = upper;
            let mut done = false;
            for _ in 0..MAX_TAIL_PANELS {
                let b = 2.0 * a;
                let r = quad::integrate(g, a, b, QUAD_REL_TOL, 0.0, 4000);
                if !r.converged {
                    return Err(Error::Quadrature { at: p, estimate: r.error });
                }
                total += r.value;
                a = b;
                if r.value.abs() < TAIL_REL_TOL * total.abs() {
                    done = true;
                    break;
                }
            }
            if !done {
                return Err(Error::Quadrature { at: p, estimate: f64::NAN });
            }
            total
        };
        Ok(k * upper.powf(k) * integral)
    }

    /// `(F̄*(p), F̄*′(p), F̄*″(p))` for `p < 0`.
    pub fn with_derivatives(&self, p: f64) -> Result<(f64, f64, f64)> {
        if p >= 0.0 {
            return Ok((0.0, 0.0, 0.0));
        }
        let m = self.params;
        let (k, delta) = (self.k, m.delta());
        let g = self.value(p)?;
        let gap = g - m.f_star(delta * p);
        let d1 = k / p * gap;
        let d2 = -k / (p * p) * gap + k / p * (d1 - delta * m.f_star_prime(delta * p));
        Ok((g, d1, d2))
    }

    /// `F̄(y) = inf_{p ≤ 0} {yp − F̄*(p)}`, by a root of `y − F̄*′(p)`.
    pub fn primal(&self, y: f64) -> Result<f64> {
        if y <= 0.0 {
            return Ok(0.0);
        }
        let slope = |p: f64| self.with_derivatives(p).map(|t| t.1);
        let mut lo = -1.0;
        let mut tries = 0;
        while slope(lo)? < y {
            lo *= 2.0;
            tries += 1;
            if tries > 200 {
                return Err(Error::NoBracket { lower: format!("p = {lo}"), upper: "p = 0".into() });
            }
        }
        let mut hi = lo / 2.0;
        for _ in 0..2000 {
            if slope(hi)? <= y {
                break;
            }
            hi /= 2.0;
        }
        // Quadrature errors inside the root finder are surfaced after the fact.
        let failure = std::cell::Cell::new(None);
        let root = brent_root(
            |p| match slope(p) {
                Ok(s) => y - s,
                Err(e) => {
                    failure.set(Some(e));
                    0.0
                }
            },
            lo,
            hi,
            1e-15,
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        let p = root.ok_or_else(|| Error::NoBracket { lower: format!("p = {lo}"), upper: format!("p = {hi}") })?;
        Ok(y * p - self.value(p)?)
    }
}

/// Samples `F̄*` on `p_grid` by quadrature, with derivatives from the integral identity.
pub fn facelift_conjugate(params: &ModelParams, p_grid: &[f64]) -> Result<Curve> {
    let ci = ConjugateIntegral::new(params)?;
    let samples: Vec<(f64, f64, f64)> = p_grid.par_iter().map(|&p| ci.with_derivatives(p)).collect::<Result<_>>()?;
    Curve::new(
        p_grid.to_vec(),
        samples.iter().map(|s| s.0).collect(),
        samples.iter().map(|s| s.1).collect(),
        samples.iter().map(|s| s.2).collect(),
    )
}

/// Discrete Legendre-Fenchel transform of a sampled function.
///
/// A concave input gives `g*(p) = inf_y {yp − g(y)}`, a convex input `sup_y {yp − g(y)}`. The
/// output grid consists of the input slope samples; a flat input is padded to `[s−1, s, s+1]`.
pub fn legendre(curve: &Curve, concave: bool) -> Result<Curve> {
    let ys = curve.ys();
    let vals = curve.vals();
    let sign = if concave { 1.0 } else { -1.0 };
    for i in 1..ys.len() - 1 {
        let s0 = (vals[i] - vals[i - 1]) / (ys[i] - ys[i - 1]);
        let s1 = (vals[i + 1] - vals[i]) / (ys[i + 1] - ys[i]);
        let excess = sign * (s1 - s0);
        if excess > 1e-8 * (1.0 + s0.abs() + s1.abs()) {
            return Err(Error::NotConcave { index: i, excess });
        }
    }
    let mut ps: Vec<f64> = curve.d1().to_vec();
    ps.sort_by(f64::total_cmp);
    ps.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
    if ps.len() < 2 {
        let s = ps[0];
        ps = vec![s - 1.0, s, s + 1.0];
    }
    let transform = |p: f64| {
        let mut best = f64::INFINITY;
        let mut arg = 0.0;
        for (&y, &v) in ys.iter().zip(vals) {
            let cand = sign * (y * p - v);
            if cand < best {
                best = cand;
                arg = y;
            }
        }
        (sign * best, arg)
    };
    let (out_vals, out_d1): (Vec<f64>, Vec<f64>) = ps.iter().map(|&p| transform(p)).unzip();
    let n = ps.len();
    let d2: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = if i == 0 { (0, 1) } else if i == n - 1 { (n - 2, n - 1) } else { (i - 1, i + 1) };
            (out_d1[b] - out_d1[a]) / (ps[b] - ps[a])
        })
        .collect();
    Curve::new(ps, out_vals, out_d1, d2)
}

/// Resolution of the dynamic-programming oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpOracleConfig {
    /// Horizon of the backward induction; `ρ·t_max` must exceed 18.
    pub t_max: f64,
    pub dt: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub points_per_decade: usize,
    /// Payments are `θ·y` with `θ ∈ {0} ∪ geometric[theta_min, theta_max]`.
    pub theta_min: f64,
    pub theta_max: f64,
    pub n_theta: usize,
}

impl Default for DpOracleConfig {
    fn default() -> Self {
        Self {
            t_max: 40.0,
            dt: 0.05,
            y_min: 1e-4,
            y_max: 1e6,
            points_per_decade: 60,
            theta_min: 0.01,
            theta_max: 10.0,
            n_theta: 80,
        }
    }
}

/// Value estimates from the dynamic-programming oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpOracleResult {
    pub y0: Vec<f64>,
    pub values: Vec<f64>,
    /// Some chosen action left the top of the grid and was settled by stopping there
    /// (the estimate stays a lower bound).
    pub top_constrained: bool,
}

/// Backward induction on the deterministic face-lift control problem.
///
/// Over a step of length `dt` with constant payment `p`, the state follows the exact solution
/// `y(t) = p + (y−p)·e^{rt}` and the principal collects `(1 − e^{−ρt})·F(p)`. Hitting zero ends
/// the problem with value 0. At each node the principal may also stop and take `F(y)`. A step
/// that leaves the top of the grid is forced to stop at its end point.
pub fn facelift_dp_oracle(params: &ModelParams, y0: &[f64], cfg: &DpOracleConfig) -> Result<DpOracleResult> {
    if !(cfg.dt > 0.0 && cfg.t_max > cfg.dt) {
        return Err(Error::Precondition("dp oracle needs 0 < dt < t_max".into()));
    }
    if params.rho() * cfg.t_max < 18.0 {
        return Err(Error::Precondition(format!(
            "dp oracle horizon too short: rho * t_max = {} < 18",
            params.rho() * cfg.t_max
        )));
    }
    if cfg.points_per_decade < 10 || cfg.n_theta < 2 || !(cfg.y_min > 0.0 && cfg.y_max > cfg.y_min) {
        return Err(Error::GridTooCoarse("dp oracle grid settings".into()));
    }
    for &y in y0 {
        if !(y == 0.0 || (cfg.y_min..=cfg.y_max).contains(&y)) {
            return Err(Error::GridExit(format!("initial state {y} outside [{}, {}]", cfg.y_min, cfg.y_max)));
        }
    }
    let decades = (cfg.y_max / cfg.y_min).log10();
    let n_pos = (decades * cfg.points_per_decade as f64).ceil() as usize + 1;
    let log_step = (cfg.y_max / cfg.y_min).ln() / (n_pos - 1) as f64;
    let mut grid = Vec::with_capacity(n_pos + 1);
    grid.push(0.0);
    grid.extend((0..n_pos).map(|i| cfg.y_min * (log_step * i as f64).exp()));
    let ln_y_min = cfg.y_min.ln();

    let thetas: Vec<f64> = std::iter::once(0.0)
        .chain((0..cfg.n_theta).map(|j| {
            cfg.theta_min * (cfg.theta_max / cfg.theta_min).powf(j as f64 / (cfg.n_theta - 1) as f64)
        }))
        .collect();

    let (r, rho, dt) = (params.r(), params.rho(), cfg.dt);
    let growth = (r * dt).exp();
    let disc = (-rho * dt).exp();
    let n_steps = (cfg.t_max / dt).ceil() as usize;

    // Log-log interpolation between positive nodes, linear towards y = 0.
    let interp = |vals: &[f64], y: f64| -> (f64, bool) {
        if y <= 0.0 {
            return (0.0, false);
        }
        if y > cfg.y_max * (1.0 + 1e-12) {
            return (params.f(y), true);
        }
        if y >= cfg.y_max {
            return (vals[vals.len() - 1], false);
        }
        if y <= cfg.y_min {
            let w = y / cfg.y_min;
            return (w * vals[1], false);
        }
        let pos = (y.ln() - ln_y_min) / log_step;
        let i = (pos.floor() as usize).min(n_pos - 2);
        let w = pos - i as f64;
        let (va, vb) = (vals[i + 1], vals[i + 2]);
        let v = if va < 0.0 && vb < 0.0 {
            -((1.0 - w) * (-va).ln() + w * (-vb).ln()).exp()
        } else {
            let (ya, yb) = (grid[i + 1], grid[i + 2]);
            let wl = (y - ya) / (yb - ya);
            (1.0 - wl) * va + wl * vb
        };
        (v, false)
    };

    let mut values: Vec<f64> = grid.iter().map(|&y| params.f(y)).collect();
    let mut top_constrained = false;
    for _ in 0..n_steps {
        let prev = values;
        let updated: Vec<(f64, bool)> = grid
            .par_iter()
            .map(|&y| {
                if y == 0.0 {
                    return (0.0, false);
                }
                let mut best = params.f(y);
                let mut clamped = false;
                for &theta in &thetas {
                    let p = theta * y;
                    let fp = params.f(p);
                    let y_next = p + (y - p) * growth;
                    let (cand, hit_top) = if y_next <= 0.0 {
                        let t0 = (p / (p - y)).ln() / r;
                        ((1.0 - (-rho * t0).exp()) * fp, false)
                    } else {
                        let (v, hit_top) = interp(&prev, y_next);
                        ((1.0 - disc) * fp + disc * v, hit_top)
                    };
                    if cand > best {
                        best = cand;
                        clamped = hit_top;
                    }
                }
                (best, clamped)
            })
            .collect();
        top_constrained |= updated.iter().any(|u| u.1);
        values = updated.into_iter().map(|u| u.0).collect();
    }
    let out: Vec<f64> = y0.iter().map(|&y| interp(&values, y).0).collect();
    Ok(DpOracleResult { y0: y0.to_vec(), values: out, top_constrained })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CostSpec;

    fn params(gamma: f64, r: f64, rho: f64) -> ModelParams {
        ModelParams::new(r, rho, 0.3, gamma, CostSpec::new(0.5, 0.4, 10.0).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let f = facelift_closed_form(&params(2.0, 1.0, 1.0));
        assert_eq!(f.regime, FaceliftRegime::EqualsF);
        assert_eq!(f.coeff, 1.0);
        let f = facelift_closed_form(&params(3.0, 1.0, 2.0));
        assert_eq!(f.regime, FaceliftRegime::NonTrivial);
        assert!((f.coeff - 0.5).abs() < 1e-15);
        let f = facelift_closed_form(&params(2.0, 1.0, 0.5));
        assert!((f.coeff - 0.75).abs() < 1e-15);
        assert_eq!(facelift_closed_form(&params(2.0, 1.0, 2.0)).regime, FaceliftRegime::Zero);
    }

    #[test]
    fn closed_form_solves_ode() {
        for (g, r, rho) in [(2.0, 1.0, 0.5), (3.0, 1.0, 2.0), (1.5, 1.0, 4.0 / 3.0), (3.0, 1.0, 0.5)] {
            let m = params(g, r, rho);
            let f = facelift_closed_form(&m);
            for &y in &[0.1, 0.5, 1.0, 3.0, 7.0] {
                let res = ode_residual(&m, &f, y);
                assert!(res.abs() < 1e-12 * (1.0 + f.value(y).abs()), "({g},{r},{rho}) y={y}: {res}");
            }
        }
    }

    #[test]
    fn conjugate_examples() {
        let m = params(2.0, 1.0, 0.5);
        let ci = ConjugateIntegral::new(&m).unwrap();
        assert!((ci.value(-1.0).unwrap() + 1.0 / 3.0).abs() < 1e-10);
        assert_eq!(ci.value(0.0).unwrap(), 0.0);
        assert!(ConjugateIntegral::new(&params(2.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn conjugate_derivatives_match_differences() {
        let m = params(1.5, 1.0, 4.0 / 3.0);
        let ci = ConjugateIntegral::new(&m).unwrap();
        let p = -0.7;
        let h = 1e-4;
        let (_, d1, d2) = ci.with_derivatives(p).unwrap();
        let (vp, vm, v0) = (ci.value(p + h).unwrap(), ci.value(p - h).unwrap(), ci.value(p).unwrap());
        assert!((d1 - (vp - vm) / (2.0 * h)).abs() < 1e-7 * (1.0 + d1.abs()));
        assert!((d2 - (vp - 2.0 * v0 + vm) / (h * h)).abs() < 1e-4 * (1.0 + d2.abs()));
    }

    #[test]
    fn legendre_examples() {
        let m = params(2.0, 1.0, 1.0);
        let ys: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.005).collect();
        let f = Curve::from_fn(ys.clone(), |y| (m.f(y), m.f_prime(y), -2.0)).unwrap();
        let fs = legendre(&f, true).unwrap();
        assert!((fs.value_at(-2.0) + 1.0).abs() < 1e-4);

        let zero = Curve::from_fn(ys.clone(), |_| (0.0, 0.0, 0.0)).unwrap();
        assert_eq!(legendre(&zero, true).unwrap().value_at(0.0), 0.0);

        let fb = facelift_closed_form_on(&params(3.0, 1.0, 2.0), ys).unwrap();
        let conj = legendre(&fb.curve, true).unwrap();
        let coeff = -conj.value_at(-4.0) / 4f64.powf(1.5);
        assert!((coeff - 8.0 / 6f64.powf(1.5)).abs() < 1e-4, "{coeff}");

        let convex = Curve::from_fn(vec![0.0, 1.0, 2.0], |y| (y * y, 2.0 * y, 2.0)).unwrap();
        assert!(legendre(&convex, true).is_err());
    }
}
