//! Dormand-Prince 5(4) integrator with continuous output.

use std::ops::ControlFlow;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Tolerances and step bounds.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, h_init: 0.0, h_max: f64::INFINITY, h_min: 1e-14, max_steps: 2_000_000 }
    }
}

/// An accepted step, with dense output on `[x0, x1]`.
#[derive(Debug, Clone, Copy)]
pub struct Step<const N: usize> {
    pub x0: f64,
    pub x1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    pub f0: [f64; N],
    pub f1: [f64; N],
    dense: Dense<N>,
}

#[derive(Debug, Clone, Copy)]
enum Dense<const N: usize> {
    /// Dormand-Prince continuous extension coefficients.
    Dopri([[f64; N]; 5]),
    /// Collocation polynomial `y0 + q1 t + q2 t^2 + q3 t^3` in the scaled step variable.
    Collocation([[f64; N]; 3]),
}

impl<const N: usize> Step<N> {
    pub(crate) fn collocation(x0: f64, x1: f64, y0: [f64; N], y1: [f64; N], f0: [f64; N], f1: [f64; N], q: [[f64; N]; 3]) -> Self {
        Self { x0, x1, y0, y1, f0, f1, dense: Dense::Collocation(q) }
    }

    /// Continuous extension at `x` in `[x0, x1]`.
    pub fn eval(&self, x: f64) -> [f64; N] {
        let h = self.x1 - self.x0;
        let theta = (x - self.x0) / h;
        match &self.dense {
            Dense::Dopri(r) => {
                let theta1 = 1.0 - theta;
                std::array::from_fn(|i| {
                    r[0][i] + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i])))
                })
            }
            Dense::Collocation(q) => {
                std::array::from_fn(|i| self.y0[i] + theta * (q[0][i] + theta * (q[1][i] + theta * q[2][i])))
            }
        }
    }

    /// Derivative of the continuous extension at `x` in `[x0, x1]`.
    pub fn eval_derivative(&self, x: f64) -> [f64; N] {
        let h = self.x1 - self.x0;
        let theta = (x - self.x0) / h;
        match &self.dense {
            Dense::Dopri(r) => {
                let theta1 = 1.0 - theta;
                std::array::from_fn(|i| {
                    (r[1][i]
                        + r[2][i] * (1.0 - 2.0 * theta)
                        + r[3][i] * theta * (2.0 - 3.0 * theta)
                        + r[4][i] * 2.0 * theta * theta1 * (1.0 - 2.0 * theta))
                        / h
                })
            }
            Dense::Collocation(q) => {
                std::array::from_fn(|i| (q[0][i] + theta * (2.0 * q[1][i] + 3.0 * theta * q[2][i])) / h)
            }
        }
    }
}

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OdeEnd {
    /// Reached the requested end point.
    Completed,
    /// The observer asked to stop after the step ending at `x`.
    Stopped { x: f64 },
    /// Step size fell below the minimum at `x`.
    StepUnderflow { x: f64 },
    /// The step budget was exhausted at `x`.
    TooManySteps { x: f64 },
    /// The right-hand side returned a non-finite value at `x`.
    NonFinite { x: f64 },
}

pub(crate) fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

/// Integrates `y' = f(x, y)` from `x0` to `x_end > x0`, calling `observer` after every accepted step.
pub fn integrate<const N: usize, F, O>(f: F, x0: f64, y0: [f64; N], x_end: f64, opts: &OdeOptions, mut observer: O) -> OdeEnd
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    O: FnMut(&Step<N>) -> ControlFlow<()>,
{
    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, &y);
    if k1.iter().any(|v| !v.is_finite()) {
        return OdeEnd::NonFinite { x };
    }
    let span = x_end - x0;
    let mut h = if opts.h_init > 0.0 { opts.h_init } else { initial_step(&f, x, &y, &k1, opts) };
    h = h.min(opts.h_max).min(span);
    let mut steps = 0usize;
    let mut fac_old: f64 = 1e-4;
    while x < x_end {
        if steps >= opts.max_steps {
            return OdeEnd::TooManySteps { x };
        }
        steps += 1;
        let last = x + h >= x_end;
        if last {
            h = x_end - x;
        }
        let k2 = f(x + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(x + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(x + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(x + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(x + h, &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(x + h, &y_new);

        let finite = [&k2, &k3, &k4, &k5, &k6, &k7].iter().all(|k| k.iter().all(|v| v.is_finite()))
            && y_new.iter().all(|v| v.is_finite());
        let err = if finite {
            let mut acc = 0.0;
            for i in 0..N {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                acc += (e / sc) * (e / sc);
            }
            (acc / N as f64).sqrt()
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            let ydiff: [f64; N] = std::array::from_fn(|i| y_new[i] - y[i]);
            let bspl: [f64; N] = std::array::from_fn(|i| h * k1[i] - ydiff[i]);
            let rcont = [
                y,
                ydiff,
                bspl,
                std::array::from_fn(|i| ydiff[i] - h * k7[i] - bspl[i]),
                std::array::from_fn(|i| {
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
                }),
            ];
            let step = Step { x0: x, x1: x + h, y0: y, y1: y_new, f0: k1, f1: k7, dense: Dense::Dopri(rcont) };
            x = if last { x_end } else { x + h };
            y = y_new;
            k1 = k7;
            if observer(&step).is_break() {
                return OdeEnd::Stopped { x };
            }
            // Lund-stabilised step control.
            let fac11 = err.max(1e-10).powf(0.17);
            let fac = (fac11 / fac_old.powf(0.04) / 0.9).clamp(0.1, 5.0);
            fac_old = err.max(1e-4);
            h = (h / fac).min(opts.h_max);
        } else {
            if !finite {
                if h <= opts.h_min {
                    return OdeEnd::NonFinite { x };
                }
                h *= 0.25;
            } else {
                let fac11 = err.powf(0.2);
                h /= (fac11 / 0.9).min(5.0);
            }
            if h < opts.h_min {
                return OdeEnd::StepUnderflow { x };
            }
        }
    }
    OdeEnd::Completed
}

pub(crate) fn initial_step<const N: usize, F>(f: &F, x: f64, y: &[f64; N], f0: &[f64; N], opts: &OdeOptions) -> f64
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let sc: [f64; N] = std::array::from_fn(|i| opts.atol + opts.rtol * y[i].abs());
    let norm = |v: &[f64; N]| (v.iter().zip(&sc).map(|(a, s)| (a / s) * (a / s)).sum::<f64>() / N as f64).sqrt();
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = axpy(y, h0, &[(1.0, f0)]);
    let f1 = f(x + h0, &y1);
    let diff: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_with_dense_output() {
        let opts = OdeOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        let mut worst: f64 = 0.0;
        let end = integrate(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            [0.0, 1.0],
            10.0,
            &opts,
            |s| {
                for k in 1..8 {
                    let x = s.x0 + (s.x1 - s.x0) * k as f64 / 8.0;
                    let v = s.eval(x);
                    worst = worst.max((v[0] - x.sin()).abs()).max((v[1] - x.cos()).abs());
                }
                ControlFlow::Continue(())
            },
        );
        assert_eq!(end, OdeEnd::Completed);
        assert!(worst < 1e-8, "dense output error {worst}");
    }

    #[test]
    fn dense_derivative_matches_rhs() {
        let opts = OdeOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        let mut worst: f64 = 0.0;
        integrate(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [0.0, 1.0], 5.0, &opts, |s| {
            for k in 0..=4 {
                let x = s.x0 + (s.x1 - s.x0) * k as f64 / 4.0;
                let d = s.eval_derivative(x);
                worst = worst.max((d[0] - x.cos()).abs()).max((d[1] + x.sin()).abs());
            }
            ControlFlow::Continue(())
        });
        assert!(worst < 1e-6, "derivative error {worst}");
    }

    #[test]
    fn observer_can_stop() {
        let opts = OdeOptions::default();
        let end = integrate(|_, y: &[f64; 1]| [y[0]], 0.0, [1.0], 5.0, &opts, |s| {
            if s.y1[0] > 2.0 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        match end {
            OdeEnd::Stopped { x } => assert!(x > 2f64.ln() && x < 5.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
