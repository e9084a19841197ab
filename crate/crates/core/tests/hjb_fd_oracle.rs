//! Finite-difference oracle for the free-boundary problem, independent of the shooting solver.
//!
//! The variational inequality `max{F̄ − v, H(v) − v} = 0`, with
//! `H(v) = sup_{a,η} {a + F(η) + δ(y + h(a) − η)v′ + δη_σ h′(a)² v″}`, is discretised
//! with upwind first differences and solved by policy iteration over (stop, effort, payment).

use pasolve_core::facelift::facelift_closed_form;
use pasolve_core::hjb::{shoot, Classification, HjbConfig};
use pasolve_core::{CostSpec, ModelParams};

struct FdSolution {
    ys: Vec<f64>,
    v: Vec<f64>,
    /// First node chosen for stopping after the continuation region.
    y_stop: f64,
}

/// Effort maximising `a + δh(a)p + δη_σ h′(a)²q` on `[0, ā]` for quadratic cost.
fn best_effort(m: &ModelParams, p: f64, q: f64) -> f64 {
    let c = m.cost();
    let (d, e) = (m.delta(), m.eta());
    let quad = d * (0.5 * c.h2() * p + e * c.h2() * c.h2() * q);
    let lin = 1.0 + d * c.beta() * p + 2.0 * d * e * c.beta() * c.h2() * q;
    let obj = |a: f64| quad * a * a + lin * a;
    if quad < 0.0 {
        (-lin / (2.0 * quad)).clamp(0.0, c.a_max())
    } else if obj(c.a_max()) > obj(0.0) {
        c.a_max()
    } else {
        0.0
    }
}

/// Payment utility maximising `−η^γ − δηp`.
fn best_payment(m: &ModelParams, p: f64) -> f64 {
    if p >= 0.0 {
        0.0
    } else {
        (-m.delta() * p / m.gamma()).powf(1.0 / (m.gamma() - 1.0))
    }
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let (mut c, mut d) = (vec![0.0; n], vec![0.0; n]);
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let w = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / w;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / w;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

fn fd_solve(m: &ModelParams, y_top: f64, n: usize) -> FdSolution {
    let fbar = facelift_closed_form(m);
    let c = m.cost();
    let h = y_top / n as f64;
    let ys: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let obstacle: Vec<f64> = ys.iter().map(|&y| fbar.value(y)).collect();
    let mut v = obstacle.clone();
    let (d, e) = (m.delta(), m.eta());
    for _ in 0..500 {
        let mut lower = vec![0.0; n + 1];
        let mut diag = vec![1.0; n + 1];
        let mut upper = vec![0.0; n + 1];
        let mut rhs = vec![0.0; n + 1];
        rhs[0] = 0.0;
        rhs[n] = obstacle[n];
        for i in 1..n {
            let y = ys[i];
            let (fwd, bwd) = ((v[i + 1] - v[i]) / h, (v[i] - v[i - 1]) / h);
            let q = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
            // Forward and backward candidates count only with a drift of the matching sign; the
            // zero-drift candidate pays exactly y + h(a).
            let mut best: Option<(f64, f64, f64, f64)> = None;
            for (p, branch) in [(fwd, 1), (bwd, -1), (0.5 * (fwd + bwd), 0)] {
                let a = best_effort(m, p, q);
                let eta_pay = if branch == 0 { y + c.cost(a) } else { best_payment(m, p) };
                let mu = if branch == 0 { 0.0 } else { d * (y + c.cost(a) - eta_pay) };
                if (branch == 1 && mu <= 0.0) || (branch == -1 && mu >= 0.0) {
                    continue;
                }
                let z = c.marginal(a);
                let diff = d * e * z * z;
                let flow = a - eta_pay.powf(m.gamma());
                let ham = flow + mu.max(0.0) * fwd - (-mu).max(0.0) * bwd + diff * q;
                if best.is_none_or(|b| ham > b.0) {
                    best = Some((ham, flow, mu, diff));
                }
            }
            let (ham, flow, mu, diff) = best.expect("some candidate is consistent");
            if obstacle[i] - v[i] >= ham - v[i] {
                rhs[i] = obstacle[i];
            } else {
                let (up, dn) = (mu.max(0.0) / h + diff / (h * h), (-mu).max(0.0) / h + diff / (h * h));
                diag[i] = 1.0 + up + dn;
                upper[i] = -up;
                lower[i] = -dn;
                rhs[i] = flow;
            }
        }
        let next = thomas(&lower, &diag, &upper, &rhs);
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if change < 1e-13 {
            break;
        }
    }
    let y_stop = (1..n).find(|&i| i > n / 100 && (v[i] - obstacle[i]).abs() < 1e-14).map_or(y_top, |i| ys[i]);
    FdSolution { ys, v, y_stop }
}

fn check_against_shooting(m: &ModelParams, y_top: f64, n: usize, v_tol: f64, gp_tol: f64) {
    let fb = shoot(m, &HjbConfig::default()).unwrap();
    let Classification::Tangent { y_gp } = fb.classification else { panic!("{:?}", fb.classification) };
    assert!(y_top > 1.3 * y_gp);
    let coarse = fd_solve(m, y_top, n);
    let fine = fd_solve(m, y_top, 2 * n);
    let fbar = facelift_closed_form(m);
    let value = |y: f64| if y <= y_gp { fb.curve.value_at(y) } else { fbar.value(y) };
    let mut worst = 0.0f64;
    for (i, &y) in coarse.ys.iter().enumerate() {
        let extrapolated = 2.0 * fine.v[2 * i] - coarse.v[i];
        worst = worst.max((extrapolated - value(y)).abs());
    }
    println!("max |v_fd - v_shoot| = {worst:.2e}; stopping from {:.4} (fine {:.4}) vs y_gp {y_gp:.4}", coarse.y_stop, fine.y_stop);
    assert!(worst < v_tol, "value mismatch {worst:e}");
    assert!((fine.y_stop - y_gp).abs() < gp_tol, "stopping boundary {} vs {y_gp}", fine.y_stop);
}

#[test]
fn sann_value_matches_finite_differences() {
    let m = ModelParams::from_delta_eta(1.0, 0.05, 2.0, CostSpec::new(0.5, 0.4, 50.0).unwrap(), 0.0).unwrap();
    check_against_shooting(&m, 1.6, 1600, 5e-5, 5e-3);
}

#[test]
fn second_tangent_configuration_matches_finite_differences() {
    let m = ModelParams::from_delta_eta(1.0, 0.1, 2.0, CostSpec::new(1.0, 0.2, 50.0).unwrap(), 0.0).unwrap();
    let y_gp = shoot(&m, &HjbConfig::default()).unwrap().classification.y_gp().unwrap();
    check_against_shooting(&m, 1.6 * y_gp, 1600, 5e-5, 5e-3 * y_gp);
}
