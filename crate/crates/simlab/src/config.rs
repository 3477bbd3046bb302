//! Experiment configs: JSON file values overlaid with command-line flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use semiprof_core::experiment::{GarchExperimentConfig, TransformExperimentConfig};
use semiprof_core::garchm::{GarchMethod, Noise, Setup};
use semiprof_core::toy::{ToyInitGrid, TOY_TOL};
use semiprof_core::Method;

use crate::cli::{GarchArgs, QuadArgs, ToyArgs, TransformArgs};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub alphas: Vec<f64>,
    pub c_values: Vec<f64>,
    pub tol: f64,
    pub methods: Vec<Method>,
    pub paths: bool,
    pub path_alpha: f64,
    pub path_c: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            alphas: (0..10).map(|k| tidy(0.2 * k as f64)).collect(),
            c_values: ToyInitGrid::default().c_values,
            tol: TOY_TOL,
            methods: Method::ALL.to_vec(),
            paths: false,
            path_alpha: 1.6,
            path_c: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadConfig {
    pub p: usize,
    pub q: usize,
    pub trials: usize,
    pub cond_max: f64,
    pub seed: u64,
    pub random_dims: bool,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            p: 3,
            q: 10,
            trials: 200,
            cond_max: 1e3,
            seed: 1,
            random_dims: false,
        }
    }
}

/// Rounds away binary noise from grid arithmetic such as `3 × 0.2`.
fn tidy(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("invalid grid `{text}`: {why}"));
    let text = text.trim();
    if text.contains(':') {
        let parts: Vec<f64> = text
            .split(':')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("expected numbers"))?;
        let [start, stop, step] = parts[..] else {
            return Err(bad("expected start:stop:step"));
        };
        if !(step > 0.0) || stop < start || !start.is_finite() || !stop.is_finite() {
            return Err(bad("need step > 0 and stop ≥ start"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|k| tidy(start + k as f64 * step)).collect())
    } else {
        let values: Vec<f64> = text
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("expected a comma-separated list of numbers"))?;
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(bad("empty or non-finite"));
        }
        Ok(values)
    }
}

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

fn parse_list<T, E: std::fmt::Display>(items: &[String], parse: impl Fn(&str) -> Result<T, E>) -> Result<Vec<T>, CliError> {
    items
        .iter()
        .map(|s| parse(s).map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

pub fn toy_config(args: &ToyArgs, file: Option<&Path>) -> Result<ToyConfig, CliError> {
    let mut cfg: ToyConfig = load(file)?;
    if let Some(g) = &args.alpha_grid {
        cfg.alphas = parse_grid(g)?;
    }
    if let Some(g) = &args.c_grid {
        cfg.c_values = parse_grid(g)?;
    }
    if let Some(t) = args.tol {
        cfg.tol = t;
    }
    if let Some(m) = &args.methods {
        cfg.methods = parse_list(m, str::parse::<Method>)?;
    }
    cfg.paths |= args.paths;
    if let Some(a) = args.path_alpha {
        cfg.path_alpha = a;
    }
    if let Some(c) = args.path_c {
        cfg.path_c = c;
    }
    if cfg.alphas.iter().any(|a| !(a.abs() < 2.0)) || cfg.c_values.iter().any(|c| !(*c > 0.0)) {
        return Err(CliError::Usage("toy grids need |α| < 2 and C > 0".into()));
    }
    if !(cfg.tol > 0.0) || cfg.methods.is_empty() || cfg.alphas.is_empty() || cfg.c_values.is_empty() {
        return Err(CliError::Usage("toy run needs tol > 0, a method and non-empty grids".into()));
    }
    Ok(cfg)
}

pub fn transform_config(args: &TransformArgs, file: Option<&Path>) -> Result<TransformExperimentConfig, CliError> {
    let mut cfg: TransformExperimentConfig = load(file)?;
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = &args.methods {
        cfg.methods = parse_list(m, str::parse::<Method>)?;
    }
    if let Some(h) = args.h_scale {
        cfg.h_scale = h;
    }
    if let Some(t) = args.tol {
        cfg.tol = t;
    }
    if let Some(m) = args.max_iter {
        cfg.max_iter = m;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn garch_config(args: &GarchArgs, file: Option<&Path>) -> Result<GarchExperimentConfig, CliError> {
    let mut cfg: GarchExperimentConfig = load(file)?;
    if let Some(s) = &args.setup {
        cfg.setup = s.parse::<Setup>().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(t) = args.t {
        cfg.t = t;
    }
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = &args.methods {
        cfg.methods = parse_list(m, str::parse::<GarchMethod>)?;
    }
    if let Some(n) = &args.noise {
        cfg.noise = n.parse::<Noise>().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(b) = args.burn_in {
        cfg.burn_in = b;
    }
    if let Some(t) = args.tol {
        cfg.tol = t;
    }
    if let Some(m) = args.max_iter {
        cfg.max_iter = m;
    }
    if cfg.t < 50 {
        return Err(CliError::Usage(format!("T must be at least 50, got {}", cfg.t)));
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn quad_config(args: &QuadArgs, file: Option<&Path>) -> Result<QuadConfig, CliError> {
    let mut cfg: QuadConfig = load(file)?;
    if let Some(p) = args.p {
        cfg.p = p;
    }
    if let Some(q) = args.q {
        cfg.q = q;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(c) = args.cond_max {
        cfg.cond_max = c;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.random_dims |= args.random_dims;
    if cfg.p == 0 || cfg.q == 0 || cfg.trials == 0 || !(cfg.cond_max >= 1.0) {
        return Err(CliError::Usage("quadcheck needs p, q, trials ≥ 1 and cond_max ≥ 1".into()));
    }
    Ok(cfg)
}
