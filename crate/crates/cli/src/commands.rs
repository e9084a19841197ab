//! Subcommands: thin wrappers that run a library routine and emit its artifacts.

use std::path::PathBuf;

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use pasolve_core::cara::{beta_thresholds, diffusion_sign_scan, sign_scan_root, OperatorSign};
use pasolve_core::facelift::{facelift_closed_form, facelift_closed_form_on, ode_residual, ConjugateIntegral, FaceliftRegime, FaceliftResult};
use pasolve_core::firstbest::{fb_solve, FirstBestBranch};
use pasolve_core::gp_conditions::{ngp_check, stopping_onset};
use pasolve_core::hjb::{default_y_max, residual_check, shoot, Classification, FreeBoundaryResult, HjbConfig};
use pasolve_core::mcsim::{feedback_controls_truncated, simulate_policy, UpperExit};
use pasolve_core::ModelParams;

use crate::config::{Preset, RunConfig};
use crate::error::Result;
use crate::output::{Emitter, Plot, Series, Table};

/// How a command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// The solver finished but could not settle the question asked, e.g. no tangency found.
    Ambiguous,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Ambiguous => 2,
        }
    }

    fn combine(self, other: Status) -> Status {
        if self == Status::Ambiguous || other == Status::Ambiguous {
            Status::Ambiguous
        } else {
            Status::Success
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub files: Vec<PathBuf>,
}

/// Default abscissa range for face-lift tables when `grid.y_max` is unset.
pub const FACELIFT_Y_MAX: f64 = 10.0;
/// Sample count of the CARA operator-sign sweep over `β ∈ [0, 1]`.
pub const CARA_SWEEP_POINTS: usize = 201;
pub const CARA_ROOT_TOL: f64 = 1e-12;

fn uniform(y_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| y_max * i as f64 / (n - 1) as f64).collect()
}

/// Fields shared by every summary: provenance, resolved config and the δ mapping.
fn header(command: &str, cfg: &RunConfig, params: Option<&ModelParams>) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), json!(command));
    m.insert("version".into(), json!({ "pasolve": env!("CARGO_PKG_VERSION"), "pasolve_core": pasolve_core::VERSION }));
    m.insert("config".into(), cfg.to_value());
    m.insert("defaults_applied".into(), json!(cfg.defaulted));
    if let Some(p) = params {
        m.insert(
            "delta_mapping".into(),
            json!({
                "convention": "delta = r / rho, eta = r * sigma^2 / 2",
                "r": p.r(), "rho": p.rho(), "sigma": p.sigma(),
                "delta": p.delta(), "eta": p.eta(),
            }),
        );
    }
    m
}

fn hjb_config(cfg: &RunConfig) -> HjbConfig {
    HjbConfig { y_max: cfg.grid.y_max, output_points: cfg.grid.n_points, ..HjbConfig::default() }
}

fn classification_json(c: &Classification) -> Value {
    match *c {
        Classification::Tangent { y_gp } => json!({ "name": c.name(), "y_gp": y_gp }),
        Classification::NoTangencyWithinHorizon { y_max, terminal_gap } => {
            json!({ "name": c.name(), "y_max": y_max, "terminal_gap": terminal_gap })
        }
    }
}

fn status_of(c: &Classification) -> Status {
    match c {
        Classification::Tangent { .. } => Status::Success,
        Classification::NoTangencyWithinHorizon { .. } => Status::Ambiguous,
    }
}

/// Diagnostics of a solved free boundary shared by `solve` and `figures`.
fn solve_diagnostics(params: &ModelParams, fb: &FreeBoundaryResult, fbar: &FaceliftResult, hc: &HjbConfig) -> Value {
    let rep = residual_check(params, &fb.curve, fbar);
    let min_gap = fb.curve.ys().iter().zip(fb.curve.vals()).map(|(&y, &v)| v - fbar.value(y)).fold(f64::INFINITY, f64::min);
    json!({
        "classification": classification_json(&fb.classification),
        "b_star": fb.b_star,
        "bracket_width": fb.bracket_width,
        "horizon": fb.horizon,
        "y_hat": fb.y_hat,
        "v_p": fb.v_p,
        "smooth_fit_residual": fb.smooth_fit_residual,
        "value_is_facelift": fb.value_is_facelift,
        "bisections": fb.bisections,
        "facelift": { "regime": format!("{:?}", fbar.regime), "coeff": fbar.coeff },
        "residual": rep,
        "min_gap_v_minus_fbar": min_gap,
        "max_second_difference": fb.curve.max_second_difference(),
        "tolerances": { "classification": hc.tol, "rtol": hc.rtol, "atol": hc.atol },
    })
}

fn solve_table(params: &ModelParams, fb: &FreeBoundaryResult, fbar: &FaceliftResult) -> Table {
    let y_gp = fb.classification.y_gp();
    let mut t = Table::new(vec!["y", "v", "dv", "ddv", "F", "Fbar", "regime"]);
    let c = &fb.curve;
    for i in 0..c.len() {
        let y = c.ys()[i];
        let regime = if y_gp.is_some_and(|g| y >= g) { "stopping" } else { "continuation" };
        t.push(vec![y.into(), c.vals()[i].into(), c.d1()[i].into(), c.d2()[i].into(), params.f(y).into(), fbar.value(y).into(), regime.into()]);
    }
    t
}

pub fn cmd_facelift(cfg: &RunConfig) -> Result<Outcome> {
    let params = cfg.model_params()?;
    let ys = uniform(cfg.grid.y_max.unwrap_or(FACELIFT_Y_MAX), cfg.grid.n_points);
    let fbar = facelift_closed_form_on(&params, ys.clone())?;
    let conj = ConjugateIntegral::new(&params).ok();
    let mut t = Table::new(vec!["y", "F", "Fbar", "Fbar_conjugate", "ode_residual"]);
    let (mut max_rel, mut max_res) = (0.0f64, 0.0f64);
    for &y in &ys {
        let exact = fbar.value(y);
        let quad = match &conj {
            Some(ci) if y > 0.0 => ci.primal(y)?,
            _ => f64::NAN,
        };
        if quad.is_finite() && exact != 0.0 {
            max_rel = max_rel.max(((quad - exact) / exact).abs());
        }
        let res = ode_residual(&params, &fbar, y);
        max_res = max_res.max(res.abs());
        t.push(vec![y.into(), params.f(y).into(), exact.into(), quad.into(), res.into()]);
    }
    let mut s = header("facelift", cfg, Some(&params));
    s.insert("regime".into(), json!(format!("{:?}", fbar.regime)));
    s.insert("coeff".into(), json!(fbar.coeff));
    s.insert("conjugate_route".into(), json!(conj.is_some()));
    s.insert("max_rel_diff_conjugate".into(), if conj.is_some() { json!(max_rel) } else { Value::Null });
    s.insert("max_abs_ode_residual".into(), json!(max_res));

    let mut out = Emitter::new(cfg)?;
    out.csv("facelift", &t)?;
    out.json("facelift", &Value::Object(s))?;
    out.svg(
        "facelift",
        &Plot {
            title: format!("face-lift, regime {:?}", fbar.regime),
            x_label: "y",
            x: ys,
            series: vec![
                Series { label: "F", color: "blue", y: t.column("F").unwrap_or_default() },
                Series { label: "Fbar", color: "green", y: t.column("Fbar").unwrap_or_default() },
            ],
            markers: vec![],
        },
    )?;
    Ok(Outcome { status: Status::Success, files: out.written().to_vec() })
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<Outcome> {
    let params = cfg.model_params()?;
    let hc = hjb_config(cfg);
    let fb = shoot(&params, &hc)?;
    let fbar = facelift_closed_form(&params);
    let table = solve_table(&params, &fb, &fbar);
    let mut s = header("solve", cfg, Some(&params));
    if let Value::Object(d) = solve_diagnostics(&params, &fb, &fbar, &hc) {
        s.extend(d);
    }
    let mut out = Emitter::new(cfg)?;
    out.csv("solve", &table)?;
    out.json("solve", &Value::Object(s))?;
    out.svg("solve", &value_plot(&format!("solve: {}", fb.classification.name()), &table, &fb))?;
    Ok(Outcome { status: status_of(&fb.classification), files: out.written().to_vec() })
}

fn value_plot(title: &str, table: &Table, fb: &FreeBoundaryResult) -> Plot {
    let mut markers = vec![(fb.y_hat, "y_hat")];
    if let Some(g) = fb.classification.y_gp() {
        markers.push((g, "y_gp"));
    }
    Plot {
        title: title.to_string(),
        x_label: "y",
        x: table.column("y").unwrap_or_default(),
        series: vec![
            Series { label: "v", color: "red", y: table.column("v").unwrap_or_default() },
            Series { label: "F", color: "blue", y: table.column("F").unwrap_or_default() },
            Series { label: "Fbar", color: "green", y: table.column("Fbar").unwrap_or_default() },
        ],
        markers,
    }
}

pub fn cmd_ngp(cfg: &RunConfig) -> Result<Outcome> {
    let params = cfg.model_params()?;
    let fbar = facelift_closed_form(&params);
    let y_max = cfg.grid.y_max.unwrap_or_else(|| default_y_max(&params, &fbar, &HjbConfig::default()));
    let ys = uniform(y_max, cfg.grid.n_points);
    let verdict = ngp_check(&params, &fbar, &ys)?;
    let onset = if params.cost().beta() > 0.0 { stopping_onset(&params, &fbar, ys[1], y_max)? } else { None };
    let mut t = Table::new(vec!["y", "Fbar", "dFbar", "ddFbar", "I0"]);
    for &y in &ys {
        let (p, q) = (fbar.slope(y), fbar.curvature(y));
        let i0 = params.i0(p, q).value().unwrap_or(f64::INFINITY);
        t.push(vec![y.into(), fbar.value(y).into(), p.into(), q.into(), i0.into()]);
    }
    let mut s = header("ngp", cfg, Some(&params));
    s.insert("ngp1".into(), json!(verdict.ngp1));
    s.insert("ngp2".into(), json!(verdict.ngp2));
    s.insert("ngp3".into(), json!(verdict.ngp3));
    s.insert("excludes_gp".into(), json!(verdict.excludes_gp()));
    s.insert("necessary_scan".into(), json!(verdict.necessary_scan));
    s.insert("sann_criterion".into(), json!(verdict.sann_criterion));
    s.insert("i0_at_origin".into(), json!(verdict.i0_at_origin));
    s.insert("trailing_sup".into(), json!(verdict.trailing_sup));
    s.insert("stopping_onset".into(), json!(onset));
    s.insert("y_grid".into(), json!({ "y_max": y_max, "n_points": ys.len() }));
    let mut out = Emitter::new(cfg)?;
    out.csv("ngp", &t)?;
    out.json("ngp", &Value::Object(s))?;
    out.svg(
        "ngp",
        &Plot {
            title: "I0 along the face-lift".into(),
            x_label: "y",
            x: ys,
            series: vec![Series { label: "I0", color: "black", y: t.column("I0").unwrap_or_default() }],
            markers: onset.map(|o| vec![(o.y1, "y1")]).unwrap_or_default(),
        },
    )?;
    Ok(Outcome { status: Status::Success, files: out.written().to_vec() })
}

pub fn cmd_firstbest(cfg: &RunConfig) -> Result<Outcome> {
    let params = cfg.model_params()?;
    let res = fb_solve(&params)?;
    let mut t = Table::new(vec!["t", "payment", "effort"]);
    for p in &res.policy {
        t.push(vec![p.t.into(), p.payment.into(), p.effort.into()]);
    }
    // Second-best value for comparison, when the free-boundary problem is non-degenerate.
    let fbar = facelift_closed_form(&params);
    let second = if fbar.regime == FaceliftRegime::Zero {
        json!({ "value": params.cost().a_max(), "note": "rho >= gamma r: supremum a_max, not attained" })
    } else {
        match shoot(&params, &hjb_config(cfg)) {
            Ok(fb) => match fb.v_p {
                Some(v) => json!({ "value": v, "classification": fb.classification.name(), "first_best_dominates": res.value >= v }),
                None => json!({
                    "value": null,
                    "classification": fb.classification.name(),
                    "note": "u(R) lies beyond the resolved horizon",
                }),
            },
            Err(e) => json!({ "value": null, "error": e.to_string() }),
        }
    };
    let mut s = header("firstbest", cfg, Some(&params));
    s.insert("branch".into(), json!(res.branch));
    s.insert("degenerate".into(), json!(res.degenerate));
    s.insert("lambda_star".into(), json!(res.lambda_star));
    s.insert("value".into(), json!(res.value));
    s.insert("value_dual".into(), json!(res.value_dual));
    s.insert("kkt_residual".into(), json!(res.residual));
    s.insert("reservation_utility".into(), json!(params.reservation_utility()));
    s.insert("second_best".into(), second);
    let mut out = Emitter::new(cfg)?;
    if res.branch == FirstBestBranch::Interior {
        out.csv("firstbest", &t)?;
    }
    out.json("firstbest", &Value::Object(s))?;
    if res.branch == FirstBestBranch::Interior {
        out.svg(
            "firstbest",
            &Plot {
                title: "first-best policy".into(),
                x_label: "t",
                x: t.column("t").unwrap_or_default(),
                series: vec![
                    Series { label: "payment", color: "red", y: t.column("payment").unwrap_or_default() },
                    Series { label: "effort", color: "blue", y: t.column("effort").unwrap_or_default() },
                ],
                markers: vec![],
            },
        )?;
    }
    Ok(Outcome { status: Status::Success, files: out.written().to_vec() })
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let params = cfg.model_params()?;
    let fb = shoot(&params, &hjb_config(cfg))?;
    let fbar = facelift_closed_form(&params);
    let policy = feedback_controls_truncated(&params, &fb)?;
    let y0 = cfg.sim.y0.unwrap_or(fb.y_hat);
    let sim_cfg = cfg.sim_config();
    let terminal = |y: f64| fbar.value(y);
    let res = simulate_policy(&params, &policy, &terminal, y0, &sim_cfg)?;
    let target = fb.curve.value_at(y0);

    let mut t = Table::new(vec!["y", "z", "payment", "effort"]);
    for &y in fb.curve.ys().iter().filter(|&&y| y <= policy.upper()) {
        let (z, _, pay) = policy.controls(y);
        t.push(vec![y.into(), z.into(), pay.into(), policy.effort(&params, y).into()]);
    }
    let mut s = header("simulate", cfg, Some(&params));
    s.insert("classification".into(), classification_json(&fb.classification));
    s.insert("upper_exit".into(), json!(format!("{:?}", policy.upper_exit())));
    s.insert("y0".into(), json!(y0));
    s.insert("principal".into(), json!({ "estimate": res.principal_value, "target_v_y0": target, "z_score": res.principal_value.z_score(target) }));
    s.insert("agent".into(), json!({ "estimate": res.agent_value, "target_y0": y0, "z_score": res.agent_value.z_score(y0) }));
    s.insert("tau".into(), json!(res.tau_stats));
    s.insert("absorbed_at_zero_fraction".into(), json!(res.absorbed_at_zero_fraction));
    s.insert("min_state".into(), json!(res.min_state));
    s.insert("horizon_biased".into(), json!(res.horizon_biased));
    s.insert("workers".into(), json!(rayon::current_num_threads()));
    let mut out = Emitter::new(cfg)?;
    out.csv("simulate", &t)?;
    out.json("simulate", &Value::Object(s))?;
    out.svg(
        "simulate",
        &Plot {
            title: "feedback controls".into(),
            x_label: "y",
            x: t.column("y").unwrap_or_default(),
            series: vec![
                Series { label: "z", color: "red", y: t.column("z").unwrap_or_default() },
                Series { label: "payment", color: "blue", y: t.column("payment").unwrap_or_default() },
            ],
            markers: vec![(y0, "y0")],
        },
    )?;
    let status = if policy.upper_exit() == UpperExit::Truncated { Status::Ambiguous } else { Status::Success };
    Ok(Outcome { status, files: out.written().to_vec() })
}

pub fn cmd_cara(cfg: &RunConfig) -> Result<Outcome> {
    let cp = cfg.cara_params()?;
    let th = beta_thresholds(&cp);
    let root = sign_scan_root(&cp, CARA_ROOT_TOL)?;
    let at_beta = diffusion_sign_scan(&cp, cp.beta())?;
    let mut t = Table::new(vec!["beta", "operator", "sign"]);
    for i in 0..CARA_SWEEP_POINTS {
        let b = i as f64 / (CARA_SWEEP_POINTS - 1) as f64;
        let v = diffusion_sign_scan(&cp, b)?;
        let sign = match v.sign {
            OperatorSign::Negative => "negative",
            OperatorSign::Zero => "zero",
            OperatorSign::Positive => "positive",
        };
        t.push(vec![b.into(), v.value.into(), sign.into()]);
    }
    let mut s = header("cara", cfg, None);
    s.insert("thresholds".into(), json!(th));
    s.insert("sign_scan_root".into(), json!(root));
    s.insert("root_minus_beta_lower".into(), json!(root - th.beta_lower));
    s.insert("tolerances".into(), json!({ "root": CARA_ROOT_TOL }));
    s.insert("operator_at_beta".into(), json!(at_beta));
    let mut out = Emitter::new(cfg)?;
    out.csv("cara", &t)?;
    out.json("cara", &Value::Object(s))?;
    out.svg(
        "cara",
        &Plot {
            title: "operator on the CARA obstacle".into(),
            x_label: "beta",
            x: t.column("beta").unwrap_or_default(),
            series: vec![Series { label: "operator", color: "black", y: t.column("operator").unwrap_or_default() }],
            markers: vec![(th.beta_lower, "beta_lower"), (th.beta_bar.clamp(0.0, 1.0), "beta_bar")],
        },
    )?;
    Ok(Outcome { status: Status::Success, files: out.written().to_vec() })
}

/// Regime each preset is expected to show.
pub fn expected_classification(p: Preset) -> &'static str {
    match p {
        Preset::Sann | Preset::Gp34 => "Tangent",
        Preset::Nogp | Preset::Nogpd => "NoTangencyWithinHorizon",
    }
}

/// `v − F̄` is non-increasing from its maximum to the end of the resolved horizon.
pub fn gap_shrinking(fb: &FreeBoundaryResult, fbar: &FaceliftResult) -> bool {
    let end = match fb.classification {
        Classification::NoTangencyWithinHorizon { y_max, .. } => y_max,
        Classification::Tangent { y_gp } => y_gp,
    };
    let gaps: Vec<f64> = fb.curve.ys().iter().zip(fb.curve.vals()).filter(|(&y, _)| y <= end).map(|(&y, &v)| v - fbar.value(y)).collect();
    let Some(peak) = gaps.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i) else {
        return false;
    };
    gaps[peak..].windows(2).all(|w| w[1] <= w[0])
}

struct FigureRun {
    status: Status,
    files: Vec<PathBuf>,
    summary: Value,
}

fn figure(preset: Preset, base: &RunConfig) -> Result<FigureRun> {
    let mut cfg = base.clone();
    preset.apply(&mut cfg);
    let params = cfg.model_params()?;
    let hc = hjb_config(&cfg);
    let fb = shoot(&params, &hc)?;
    let fbar = facelift_closed_form(&params);
    let solve = solve_table(&params, &fb, &fbar);
    let mut t = Table::new(vec!["y", "v", "F", "Fbar"]);
    for row in &solve.rows {
        t.push(vec![row[0].clone(), row[1].clone(), row[4].clone(), row[5].clone()]);
    }

    let ys = fb.curve.ys();
    let vals = fb.curve.vals();
    let above_f = ys.iter().zip(vals).all(|(&y, &v)| v >= params.f(y) - hc.tol);
    let fbar_above_f = fbar.regime == FaceliftRegime::NonTrivial && fbar.coeff < 1.0;
    let shrinking = gap_shrinking(&fb, &fbar);
    let expected = expected_classification(preset);
    let matches = fb.classification.name() == expected;
    let reproduced = matches
        && match preset {
            Preset::Sann => above_f && fb.v_p.is_some_and(|v| v > 0.0),
            Preset::Nogp => shrinking,
            Preset::Gp34 => fbar_above_f,
            Preset::Nogpd => true,
        };
    let v = preset.values();
    let mut s = header("figures", &cfg, Some(&params));
    s.insert("preset".into(), json!(preset.name()));
    s.insert("preset_values".into(), json!(v));
    if let Value::Object(d) = solve_diagnostics(&params, &fb, &fbar, &hc) {
        s.extend(d);
    }
    s.insert(
        "checks".into(),
        json!({
            "expected_classification": expected,
            "v_above_F": above_f,
            "fbar_strictly_above_F": fbar_above_f,
            "gap_shrinking": shrinking,
            "reproduced": reproduced,
        }),
    );
    let stem = format!("figure_{}", preset.name());
    let mut out = Emitter::new(&cfg)?;
    out.csv(&stem, &t)?;
    out.json(&stem, &Value::Object(s.clone()))?;
    let title = format!("{}: {} (delta = {})", preset.name(), fb.classification.name(), v.delta);
    out.svg(&stem, &value_plot(&title, &solve, &fb))?;
    Ok(FigureRun { status: status_of(&fb.classification), files: out.written().to_vec(), summary: Value::Object(s) })
}

/// Solves the given presets concurrently; the status is ambiguous if any is.
pub fn cmd_figures(cfg: &RunConfig, presets: &[Preset]) -> Result<Outcome> {
    let runs: Vec<Result<FigureRun>> = presets.par_iter().map(|&p| figure(p, cfg)).collect();
    let mut status = Status::Success;
    let mut files = Vec::new();
    let mut index = Vec::new();
    for r in runs {
        let r = r?;
        status = status.combine(r.status);
        files.extend(r.files);
        index.push(json!({
            "preset": r.summary["preset"],
            "classification": r.summary["classification"],
            "reproduced": r.summary["checks"]["reproduced"],
        }));
    }
    if presets.len() > 1 {
        let mut s = header("figures", cfg, None);
        s.insert("figures".into(), Value::Array(index));
        let mut out = Emitter::new(cfg)?;
        out.json("figures", &Value::Object(s))?;
        files.extend(out.written().iter().cloned());
    }
    Ok(Outcome { status, files })
}
