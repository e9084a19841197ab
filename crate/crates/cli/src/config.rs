//! Run configuration: a JSON document read key by key so that errors name the offending path.

use serde::Serialize;
use serde_json::{Map, Value};

use pasolve_core::cara::CaraParams;
use pasolve_core::mcsim::SimConfig;
use pasolve_core::{CostSpec, ModelParams};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelSection {
    pub r: f64,
    pub rho: f64,
    pub sigma: f64,
    pub gamma: f64,
    #[serde(rename = "R")]
    pub reservation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostSection {
    pub h2: f64,
    pub beta: f64,
    pub a_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSection {
    /// `None` lets the solver pick its horizon.
    pub y_max: Option<f64>,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimSection {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub t_cap: f64,
    /// Initial agent utility; `None` starts at the principal's preferred `ŷ`.
    pub y0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSection {
    pub dir: String,
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaraSection {
    pub sigma: f64,
    pub h2: f64,
    pub beta: f64,
    pub psi: f64,
    pub eta_p: f64,
    pub t_horizon: f64,
}

/// Fully resolved configuration; serialising it gives a document that parses back to itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostSection>,
    pub grid: GridSection,
    pub sim: SimSection,
    pub output: OutputSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cara: Option<CaraSection>,
    /// Keys filled from defaults.
    #[serde(skip)]
    pub defaulted: Vec<String>,
}

pub const DEFAULT_N_POINTS: usize = 2001;
pub const DEFAULT_PATHS: usize = 100_000;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_SEED: u64 = 20240601;
pub const DEFAULT_T_CAP: f64 = 120.0;
pub const DEFAULT_OUT_DIR: &str = "out";

/// Reads one section, recording every key it consumes.
struct Section<'a> {
    path: &'static str,
    map: &'a Map<String, Value>,
    defaulted: &'a mut Vec<String>,
}

impl<'a> Section<'a> {
    fn key(&self, k: &str) -> String {
        format!("{}.{k}", self.path)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(CliError::Config(format!("unknown key `{}`", self.key(k)))),
            None => Ok(()),
        }
    }

    fn number(&self, k: &str) -> Result<Option<f64>> {
        match self.map.get(k) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(_) => Err(CliError::Config(format!("`{}` must be a number", self.key(k)))),
        }
    }

    fn required(&self, k: &str) -> Result<f64> {
        self.number(k)?.ok_or_else(|| CliError::Config(format!("missing key `{}`", self.key(k))))
    }

    fn or_default(&mut self, k: &str, default: f64) -> Result<f64> {
        match self.number(k)? {
            Some(x) => Ok(x),
            None => {
                self.defaulted.push(self.key(k));
                Ok(default)
            }
        }
    }

    fn count(&mut self, k: &str, default: u64) -> Result<u64> {
        match self.map.get(k) {
            None | Some(Value::Null) => {
                self.defaulted.push(self.key(k));
                Ok(default)
            }
            Some(v) => v
                .as_u64()
                .ok_or_else(|| CliError::Config(format!("`{}` must be a non-negative integer", self.key(k)))),
        }
    }
}

fn section<'a>(root: &'a Map<String, Value>, name: &'static str, defaulted: &'a mut Vec<String>) -> Result<Option<Section<'a>>> {
    match root.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Object(map)) => Ok(Some(Section { path: name, map, defaulted })),
        Some(_) => Err(CliError::Config(format!("`{name}` must be an object"))),
    }
}

static EMPTY: std::sync::LazyLock<Map<String, Value>> = std::sync::LazyLock::new(Map::new);

/// Like [`section`], with an absent section read as empty so every key takes its default.
fn section_or_empty<'a>(root: &'a Map<String, Value>, name: &'static str, defaulted: &'a mut Vec<String>) -> Result<Section<'a>> {
    match root.get(name) {
        None | Some(Value::Null) => Ok(Section { path: name, map: &EMPTY, defaulted }),
        Some(Value::Object(map)) => Ok(Section { path: name, map, defaulted }),
        Some(_) => Err(CliError::Config(format!("`{name}` must be an object"))),
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config is not valid JSON: {e}")))?;
        Self::from_value(&value)
    }

    pub fn from_value(value: &Value) -> Result<Self> {
        let root = value.as_object().ok_or_else(|| CliError::Config("config must be a JSON object".into()))?;
        if let Some(k) = root.keys().find(|k| !["model", "cost", "grid", "sim", "output", "cara"].contains(&k.as_str())) {
            return Err(CliError::Config(format!("unknown key `{k}`")));
        }
        let mut defaulted = Vec::new();

        let model = match section(root, "model", &mut defaulted)? {
            None => None,
            Some(mut s) => {
                s.check_keys(&["r", "rho", "sigma", "gamma", "R"])?;
                Some(ModelSection {
                    r: s.required("r")?,
                    rho: s.required("rho")?,
                    sigma: s.required("sigma")?,
                    gamma: s.required("gamma")?,
                    reservation: s.or_default("R", 0.0)?,
                })
            }
        };

        let cost = match section(root, "cost", &mut defaulted)? {
            None => None,
            Some(s) => {
                s.check_keys(&["h2", "beta", "a_max"])?;
                Some(CostSection { h2: s.required("h2")?, beta: s.required("beta")?, a_max: s.required("a_max")? })
            }
        };

        let grid = {
            let mut s = section_or_empty(root, "grid", &mut defaulted)?;
            s.check_keys(&["y_max", "n_points"])?;
            let y_max = s.number("y_max")?;
            if y_max.is_none() {
                s.defaulted.push("grid.y_max".into());
            }
            let n_points = s.count("n_points", DEFAULT_N_POINTS as u64)? as usize;
            if n_points < 3 {
                return Err(CliError::Config("`grid.n_points` must be >= 3".into()));
            }
            if let Some(y) = y_max {
                if !(y.is_finite() && y > 0.0) {
                    return Err(CliError::Config("`grid.y_max` must be finite and > 0".into()));
                }
            }
            GridSection { y_max, n_points }
        };

        let sim = {
            let mut s = section_or_empty(root, "sim", &mut defaulted)?;
            s.check_keys(&["paths", "dt", "seed", "t_cap", "y0"])?;
            let paths = s.count("paths", DEFAULT_PATHS as u64)? as usize;
            let dt = s.or_default("dt", DEFAULT_DT)?;
            let seed = s.count("seed", DEFAULT_SEED)?;
            let t_cap = s.or_default("t_cap", DEFAULT_T_CAP)?;
            let y0 = s.number("y0")?;
            if y0.is_none() {
                s.defaulted.push("sim.y0".into());
            }
            SimSection { paths, dt, seed, t_cap, y0 }
        };

        let output = {
            let s = section_or_empty(root, "output", &mut defaulted)?;
            s.check_keys(&["dir", "formats"])?;
            let dir = match s.map.get("dir") {
                None | Some(Value::Null) => {
                    s.defaulted.push("output.dir".into());
                    DEFAULT_OUT_DIR.to_string()
                }
                Some(Value::String(d)) => d.clone(),
                Some(_) => return Err(CliError::Config("`output.dir` must be a string".into())),
            };
            let formats = match s.map.get("formats") {
                None | Some(Value::Null) => {
                    s.defaulted.push("output.formats".into());
                    vec![Format::Csv, Format::Json, Format::Svg]
                }
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|v| match v.as_str() {
                        Some("csv") => Ok(Format::Csv),
                        Some("json") => Ok(Format::Json),
                        Some("svg") => Ok(Format::Svg),
                        _ => Err(CliError::Config(format!("`output.formats` entries must be \"csv\", \"json\" or \"svg\", got {v}"))),
                    })
                    .collect::<Result<Vec<_>>>()?,
                Some(_) => return Err(CliError::Config("`output.formats` must be an array".into())),
            };
            OutputSection { dir, formats }
        };

        let cara = match section(root, "cara", &mut defaulted)? {
            None => None,
            Some(s) => {
                s.check_keys(&["sigma", "h2", "beta", "psi", "eta_p", "t_horizon"])?;
                Some(CaraSection {
                    sigma: s.required("sigma")?,
                    h2: s.required("h2")?,
                    beta: s.required("beta")?,
                    psi: s.required("psi")?,
                    eta_p: s.required("eta_p")?,
                    t_horizon: s.required("t_horizon")?,
                })
            }
        };

        Ok(RunConfig { model, cost, grid, sim, output, cara, defaulted })
    }

    /// Model parameters; constraint violations are reported under their config key.
    pub fn model_params(&self) -> Result<ModelParams> {
        let m = self.model.ok_or_else(|| CliError::Config("missing section `model`".into()))?;
        let c = self.cost.ok_or_else(|| CliError::Config("missing section `cost`".into()))?;
        let cost = CostSpec::new(c.h2, c.beta, c.a_max).map_err(|e| CliError::prefixed("cost", e))?;
        ModelParams::new(m.r, m.rho, m.sigma, m.gamma, cost, m.reservation).map_err(|e| CliError::prefixed("model", e))
    }

    pub fn cara_params(&self) -> Result<CaraParams> {
        let c = self.cara.ok_or_else(|| CliError::Config("missing section `cara`".into()))?;
        CaraParams::new(c.sigma, c.h2, c.beta, c.psi, c.eta_p, c.t_horizon).map_err(CliError::from_core_named)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig { n_paths: self.sim.paths, dt: self.sim.dt, seed: self.sim.seed, t_cap: self.sim.t_cap }
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serialises")
    }
}

/// Named parameter sets of the four figures, all with `r = 1`, `ρ = 1/δ` and `σ = √(2η)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Sann,
    Nogp,
    Gp34,
    Nogpd,
}

/// `(δ, η)` together with the model and cost sections a preset stands for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PresetValues {
    pub delta: f64,
    pub eta: f64,
    pub model: ModelSection,
    pub cost: CostSection,
}

pub const PRESET_A_MAX: f64 = 50.0;

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Sann, Preset::Nogp, Preset::Gp34, Preset::Nogpd];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Sann => "sann",
            Preset::Nogp => "nogp",
            Preset::Gp34 => "gp34",
            Preset::Nogpd => "nogpd",
        }
    }

    pub fn values(self) -> PresetValues {
        // (γ, η, h2, β, δ)
        let (gamma, eta, h2, beta, delta) = match self {
            Preset::Sann => (2.0, 0.05, 0.5, 0.4, 1.0),
            Preset::Nogp => (1.5, 1.0, 1.0, 0.01, 1.0),
            Preset::Gp34 => (1.5, 1.0, 1.0, 0.01, 0.75),
            Preset::Nogpd => (3.0, 1.0, 1.0, 0.01, 2.0),
        };
        PresetValues {
            delta,
            eta,
            model: ModelSection { r: 1.0, rho: 1.0 / delta, sigma: (2.0 * eta).sqrt(), gamma, reservation: 0.0 },
            cost: CostSection { h2, beta, a_max: PRESET_A_MAX },
        }
    }

    /// Fills the model and cost sections, replacing any given in the file.
    pub fn apply(self, cfg: &mut RunConfig) {
        let v = self.values();
        cfg.model = Some(v.model);
        cfg.cost = Some(v.cost);
        cfg.defaulted.retain(|k| !k.starts_with("model.") && !k.starts_with("cost."));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"{
        "model": {"r": 1, "rho": 1, "sigma": 0.5, "gamma": 2, "R": 0},
        "cost": {"h2": 0.5, "beta": 0.4, "a_max": 50},
        "grid": {"y_max": 3, "n_points": 101},
        "sim": {"paths": 10, "dt": 0.001, "seed": 1, "t_cap": 60},
        "output": {"dir": "x", "formats": ["csv"]}
    }"#;

    #[test]
    fn missing_rho_is_named() {
        let text = FULL.replace("\"rho\": 1, ", "");
        let err = RunConfig::from_json_str(&text).unwrap_err().to_string();
        assert!(err.contains("model.rho"), "{err}");
    }

    #[test]
    fn wrong_type_is_named() {
        let text = FULL.replace("\"beta\": 0.4", "\"beta\": \"high\"");
        let err = RunConfig::from_json_str(&text).unwrap_err().to_string();
        assert!(err.contains("cost.beta"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = FULL.replace("\"gamma\"", "\"gama\"");
        let err = RunConfig::from_json_str(&text).unwrap_err().to_string();
        assert!(err.contains("model.gama"), "{err}");
    }

    #[test]
    fn constraint_violation_names_key() {
        let text = FULL.replace("\"gamma\": 2", "\"gamma\": 0.5");
        let cfg = RunConfig::from_json_str(&text).unwrap();
        let err = cfg.model_params().unwrap_err().to_string();
        assert!(err.contains("model.gamma"), "{err}");
    }

    #[test]
    fn defaults_recorded() {
        let cfg = RunConfig::from_json_str(r#"{"model": {"r": 1, "rho": 1, "sigma": 0.5, "gamma": 2}, "cost": {"h2": 1, "beta": 0, "a_max": 1}}"#).unwrap();
        for k in ["model.R", "grid.y_max", "grid.n_points", "sim.paths", "sim.seed", "output.dir", "output.formats"] {
            assert!(cfg.defaulted.iter().any(|d| d == k), "{k} not recorded in {:?}", cfg.defaulted);
        }
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::from_json_str(FULL).unwrap();
        let again = RunConfig::from_value(&cfg.to_value()).unwrap();
        assert_eq!(cfg.model, again.model);
        assert_eq!(cfg.cost, again.cost);
        assert_eq!(cfg.grid, again.grid);
        assert_eq!(cfg.sim, again.sim);
        assert_eq!(cfg.output, again.output);
    }

    #[test]
    fn preset_mapping() {
        let v = Preset::Gp34.values();
        assert_eq!(v.model.r, 1.0);
        assert!((v.model.rho - 4.0 / 3.0).abs() < 1e-15);
        assert!((0.5 * v.model.sigma * v.model.sigma - 1.0).abs() < 1e-15);
    }
}
