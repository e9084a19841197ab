//! Three-stage Radau IIA (order 5) with simplified Newton iterations, for stiff problems.
//!
//! Shares [`OdeOptions`], [`OdeEnd`] and [`Step`] with the explicit integrator.

use std::ops::ControlFlow;

use super::ode::{initial_step, OdeEnd, OdeOptions, Step};

const S6: f64 = 2.449_489_742_783_178;
const C: [f64; 3] = [(4.0 - S6) / 10.0, (4.0 + S6) / 10.0, 1.0];
const A: [[f64; 3]; 3] = [
    [(88.0 - 7.0 * S6) / 360.0, (296.0 - 169.0 * S6) / 1800.0, (-2.0 + 3.0 * S6) / 225.0],
    [(296.0 + 169.0 * S6) / 1800.0, (88.0 + 7.0 * S6) / 360.0, (-2.0 - 3.0 * S6) / 225.0],
    [(16.0 - S6) / 36.0, (16.0 + S6) / 36.0, 1.0 / 9.0],
];
/// Embedded error weights.
const E: [f64; 3] = [(-13.0 - 7.0 * S6) / 3.0, (-13.0 + 7.0 * S6) / 3.0, -1.0 / 3.0];
const NEWTON_MAXITER: usize = 6;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

fn mu_real() -> f64 {
    3.0 + 3f64.powf(2.0 / 3.0) - 3f64.powf(1.0 / 3.0)
}

/// Dense LU with partial pivoting, row-major `n x n`.
struct Lu {
    n: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl Lu {
    fn new(n: usize, mut a: Vec<f64>) -> Option<Self> {
        let mut piv = vec![0; n];
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))?;
            if a[p * n + k] == 0.0 || !a[p * n + k].is_finite() {
                return None;
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
            }
            let d = a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k] / d;
                a[i * n + k] = l;
                for j in k + 1..n {
                    a[i * n + j] -= l * a[k * n + j];
                }
            }
        }
        Some(Self { n, a, piv })
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.a[i * n + j] * b[j]).sum();
            b[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.a[i * n + j] * b[j]).sum();
            b[i] = (b[i] - s) / self.a[i * n + i];
        }
    }
}

fn rms_norm(v: impl Iterator<Item = f64>, count: usize) -> f64 {
    (v.map(|x| x * x).sum::<f64>() / count as f64).sqrt()
}

fn jacobian<const N: usize, F>(f: &F, x: f64, y: &[f64; N], f0: &[f64; N]) -> [[f64; N]; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut jac = [[0.0; N]; N];
    for j in 0..N {
        let dy = f64::EPSILON.sqrt() * y[j].abs().max(1e-8);
        let mut yp = *y;
        yp[j] += dy;
        let dy = yp[j] - y[j];
        let fp = f(x, &yp);
        for i in 0..N {
            jac[i][j] = (fp[i] - f0[i]) / dy;
        }
    }
    jac
}

/// Maps stage increments `z[i]` at nodes `C[i]` to monomial coefficients of the collocation polynomial.
fn collocation_coefficients<const N: usize>(z: &[[f64; N]; 3]) -> [[f64; N]; 3] {
    let v: Vec<f64> = C.iter().flat_map(|&c| [c, c * c, c * c * c]).collect();
    let lu = Lu::new(3, v).expect("Radau nodes are distinct");
    let mut q = [[0.0; N]; 3];
    for i in 0..N {
        let mut b = [z[0][i], z[1][i], z[2][i]];
        lu.solve(&mut b);
        for k in 0..3 {
            q[k][i] = b[k];
        }
    }
    q
}

fn eval_poly<const N: usize>(q: &[[f64; N]; 3], theta: f64) -> [f64; N] {
    std::array::from_fn(|i| theta * (q[0][i] + theta * (q[1][i] + theta * q[2][i])))
}

enum Newton<const N: usize> {
    Converged { z: [[f64; N]; 3], iterations: usize },
    Failed,
}

#[allow(clippy::too_many_arguments)]
fn newton<const N: usize, F>(
    f: &F,
    x: f64,
    y: &[f64; N],
    h: f64,
    lu: &Lu,
    mut z: [[f64; N]; 3],
    scale: &[f64; N],
    tol: f64,
) -> Newton<N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut prev_norm: Option<f64> = None;
    let mut rate: Option<f64> = None;
    for k in 0..NEWTON_MAXITER {
        let fz: [[f64; N]; 3] = std::array::from_fn(|s| {
            let ys: [f64; N] = std::array::from_fn(|i| y[i] + z[s][i]);
            f(x + C[s] * h, &ys)
        });
        if fz.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
            return Newton::Failed;
        }
        let mut rhs = vec![0.0; 3 * N];
        for s in 0..3 {
            for i in 0..N {
                rhs[s * N + i] = -z[s][i] + h * (0..3).map(|t| A[s][t] * fz[t][i]).sum::<f64>();
            }
        }
        lu.solve(&mut rhs);
        let norm = rms_norm((0..3 * N).map(|k| rhs[k] / scale[k % N]), 3 * N);
        for s in 0..3 {
            for i in 0..N {
                z[s][i] += rhs[s * N + i];
            }
        }
        if let Some(p) = prev_norm {
            rate = Some(norm / p);
        }
        if let Some(r) = rate {
            if r >= 1.0 || r.powi((NEWTON_MAXITER - k) as i32) / (1.0 - r) * norm > tol {
                return Newton::Failed;
            }
        }
        if norm == 0.0 || rate.is_some_and(|r| r / (1.0 - r) * norm < tol) {
            return Newton::Converged { z, iterations: k + 1 };
        }
        prev_norm = Some(norm);
    }
    Newton::Failed
}

/// Integrates `y' = f(x, y)` from `x0` to `x_end > x0` with Radau IIA, calling `observer`
/// after every accepted step. Same contract as [`super::ode::integrate`]; the Jacobian is
/// approximated by forward differences.
pub fn integrate<const N: usize, F, O>(f: F, x0: f64, y0: [f64; N], x_end: f64, opts: &OdeOptions, observer: O) -> OdeEnd
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    O: FnMut(&Step<N>) -> ControlFlow<()>,
{
    integrate_with_jacobian(&f, |x, y, fx| jacobian(&f, x, y, fx), x0, y0, x_end, opts, observer)
}

/// As [`integrate`] with a caller-supplied Jacobian `jac(x, y, f(x, y))[i][j] = ∂f_i/∂y_j`.
pub fn integrate_with_jacobian<const N: usize, F, J, O>(
    f: F,
    jac: J,
    x0: f64,
    y0: [f64; N],
    x_end: f64,
    opts: &OdeOptions,
    mut observer: O,
) -> OdeEnd
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    J: Fn(f64, &[f64; N], &[f64; N]) -> [[f64; N]; N],
    O: FnMut(&Step<N>) -> ControlFlow<()>,
{
    let mut x = x0;
    let mut y = y0;
    let mut f0 = f(x, &y);
    if f0.iter().any(|v| !v.is_finite()) {
        return OdeEnd::NonFinite { x };
    }
    let span = x_end - x0;
    let mut h = if opts.h_init > 0.0 { opts.h_init } else { initial_step(&f, x, &y, &f0, opts) };
    h = h.min(opts.h_max).min(span);
    let newton_tol = (10.0 * f64::EPSILON / opts.rtol).max(0.03f64.min(opts.rtol.sqrt()));
    let mu = mu_real();
    let mut prev_poly: Option<([[f64; N]; 3], f64)> = None;
    let mut steps = 0usize;
    let mut rejected = false;
    let mut first = true;

    while x < x_end {
        if steps >= opts.max_steps {
            return OdeEnd::TooManySteps { x };
        }
        steps += 1;
        let jac = jac(x, &y, &f0);
        let scale: [f64; N] = std::array::from_fn(|i| opts.atol + opts.rtol * y[i].abs());
        loop {
            if h < opts.h_min {
                return OdeEnd::StepUnderflow { x };
            }
            let last = x + h >= x_end;
            if last {
                h = x_end - x;
            }
            let mut m = vec![0.0; 9 * N * N];
            for s in 0..3 {
                for t in 0..3 {
                    for i in 0..N {
                        for j in 0..N {
                            let id = if s == t && i == j { 1.0 } else { 0.0 };
                            m[(s * N + i) * 3 * N + t * N + j] = id - h * A[s][t] * jac[i][j];
                        }
                    }
                }
            }
            let Some(lu) = Lu::new(3 * N, m) else {
                h *= 0.5;
                continue;
            };
            let guess: [[f64; N]; 3] = match &prev_poly {
                Some((q, h_prev)) => std::array::from_fn(|s| {
                    let base = eval_poly(q, 1.0);
                    let ext = eval_poly(q, 1.0 + C[s] * h / h_prev);
                    std::array::from_fn(|i| ext[i] - base[i])
                }),
                None => [[0.0; N]; 3],
            };
            let (z, iterations) = match newton(&f, x, &y, h, &lu, guess, &scale, newton_tol) {
                Newton::Converged { z, iterations } => (z, iterations),
                Newton::Failed => {
                    h *= 0.5;
                    prev_poly = None;
                    rejected = true;
                    continue;
                }
            };
            let y_new: [f64; N] = std::array::from_fn(|i| y[i] + z[2][i]);

            let mut em = vec![0.0; N * N];
            for i in 0..N {
                for j in 0..N {
                    em[i * N + j] = if i == j { mu / h } else { 0.0 } - jac[i][j];
                }
            }
            let Some(elu) = Lu::new(N, em) else {
                h *= 0.5;
                continue;
            };
            let ze: [f64; N] = std::array::from_fn(|i| (0..3).map(|s| E[s] * z[s][i]).sum::<f64>() / h);
            let err_scale: [f64; N] = std::array::from_fn(|i| opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs()));
            let mut err: Vec<f64> = (0..N).map(|i| f0[i] + ze[i]).collect();
            elu.solve(&mut err);
            let mut err_norm = rms_norm((0..N).map(|i| err[i] / err_scale[i]), N);
            if err_norm > 1.0 && (first || rejected) {
                let yp: [f64; N] = std::array::from_fn(|i| y[i] + err[i]);
                let fp = f(x, &yp);
                err = (0..N).map(|i| fp[i] + ze[i]).collect();
                elu.solve(&mut err);
                err_norm = rms_norm((0..N).map(|i| err[i] / err_scale[i]), N);
            }
            if !err_norm.is_finite() {
                h *= 0.25;
                rejected = true;
                continue;
            }
            let safety = 0.9 * (2 * NEWTON_MAXITER + 1) as f64 / (2 * NEWTON_MAXITER + iterations) as f64;
            if err_norm > 1.0 {
                h *= MIN_FACTOR.max(safety * err_norm.powf(-0.25));
                rejected = true;
                continue;
            }

            let f1 = f(x + h, &y_new);
            if f1.iter().any(|v| !v.is_finite()) {
                return OdeEnd::NonFinite { x: x + h };
            }
            let q = collocation_coefficients(&z);
            let x1 = if last { x_end } else { x + h };
            let step = Step::collocation(x, x1, y, y_new, f0, f1, q);
            let factor = if err_norm == 0.0 { MAX_FACTOR } else { MAX_FACTOR.min(safety * err_norm.powf(-0.25)) };
            let factor = if rejected { factor.min(1.0) } else { factor };
            prev_poly = Some((q, h));
            x = x1;
            y = y_new;
            f0 = f1;
            first = false;
            rejected = false;
            if observer(&step).is_break() {
                return OdeEnd::Stopped { x };
            }
            h = (h * factor).min(opts.h_max);
            break;
        }
    }
    OdeEnd::Completed
}
