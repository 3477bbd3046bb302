//! Seeded Monte Carlo replication for the transformation and GARCH-M models.
//!
//! Replicate `b` draws all of its randomness from [`replicate_seed`]`(seed, b, stream)`,
//! so results do not depend on how replicates are scheduled across threads.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::garchm::{garchm_solve, generate_garchm, GarchMethod, GarchSolveConfig, GarchTheta, Noise, Setup, DEFAULT_BURN_IN};
use crate::metrics::{aggregate_metrics, Aggregates};
use crate::solver::{run_solver, InitLambdaMode, Method, ParameterState, Solver, SolverConfig};
use crate::transform::{generate_transform_data, transform_system, TransformModelSpec, REFERENCE_THETA};

/// Largest tolerated share of failed replicates per method.
pub const MAX_FAILURE_RATE: f64 = 0.05;

const STREAM_DATA: u64 = 0;
const STREAM_INIT: u64 = 1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replicate `rep` and random stream `stream` under `master`.
pub fn replicate_seed(master: u64, rep: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ rep) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// FNV-1a hash rendered as 16 hex digits.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub method: String,
    pub rep: usize,
    pub estimates: Vec<f64>,
    pub iterations: usize,
    pub seconds: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrapolation_warnings: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub metrics: Aggregates,
    /// Replicates left out of `metrics` because they failed or did not converge.
    pub excluded: usize,
    pub mean_iterations: f64,
    pub mean_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub experiment: String,
    pub n_or_t: usize,
    pub reps: usize,
    pub seed: u64,
    pub config_hash: String,
    pub truth: Vec<f64>,
    pub coords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub meta: ReportMeta,
    pub per_rep: Vec<RepRecord>,
    /// Keyed by method name; methods with no converged replicate are absent.
    pub aggregates: BTreeMap<String, MethodSummary>,
}

impl ReplicationReport {
    /// Assembles a report, aggregating converged replicates per method in
    /// the order the methods first appear in `per_rep`.
    pub fn from_records(meta: ReportMeta, per_rep: Vec<RepRecord>) -> Self {
        let mut aggregates = BTreeMap::new();
        for method in method_order(&per_rep) {
            let rows: Vec<&RepRecord> = per_rep.iter().filter(|r| r.method == method).collect();
            let ok: Vec<&RepRecord> = rows.iter().copied().filter(|r| r.converged).collect();
            let est: Vec<Vec<f64>> = ok.iter().map(|r| r.estimates.clone()).collect();
            let Ok(metrics) = aggregate_metrics(&est, &meta.truth) else {
                continue;
            };
            let k = ok.len() as f64;
            let total_seconds: f64 = ok.iter().map(|r| r.seconds).sum();
            aggregates.insert(
                method,
                MethodSummary {
                    metrics,
                    excluded: rows.len() - ok.len(),
                    mean_iterations: ok.iter().map(|r| r.iterations as f64).sum::<f64>() / k,
                    mean_seconds: total_seconds / k,
                    total_seconds,
                },
            );
        }
        Self { meta, per_rep, aggregates }
    }

    pub fn methods(&self) -> Vec<String> {
        method_order(&self.per_rep)
    }

    /// Fails when any method loses more than `max_rate` of its replicates.
    pub fn check_failures(&self, max_rate: f64) -> Result<()> {
        for method in self.methods() {
            let rows = self.per_rep.iter().filter(|r| r.method == method);
            let (total, failed) = rows.fold((0, 0), |(t, f), r| (t + 1, f + usize::from(!r.converged)));
            if failed > 0 && failed as f64 > max_rate * total as f64 {
                return Err(Error::TooManyFailures { failed, total });
            }
        }
        Ok(())
    }
}

fn method_order(rows: &[RepRecord]) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for r in rows {
        if !seen.contains(&r.method) {
            seen.push(r.method.clone());
        }
    }
    seen
}

fn failed_record(method: &str, rep: usize, p: usize, err: &Error) -> RepRecord {
    RepRecord {
        method: method.to_string(),
        rep,
        estimates: vec![f64::NAN; p],
        iterations: 0,
        seconds: 0.0,
        converged: false,
        extrapolation_warnings: None,
        error: Some(err.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformExperimentConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub h_scale: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub theta_star: Vec<f64>,
}

impl Default for TransformExperimentConfig {
    fn default() -> Self {
        Self {
            n: 500,
            reps: 100,
            seed: 20240,
            methods: Method::ALL.to_vec(),
            h_scale: 1.0,
            tol: 1e-8,
            max_iter: 200,
            theta_star: REFERENCE_THETA.to_vec(),
        }
    }
}

impl TransformExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.reps == 0 || self.methods.is_empty() || self.theta_star.is_empty() {
            return Err(Error::Domain("transform experiment needs n ≥ 2, reps ≥ 1, a method and θ*".into()));
        }
        if !(self.h_scale > 0.0) || !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Domain("h_scale, tol and max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Records for one transformation-model replicate, one per method.
pub fn transform_replicate(cfg: &TransformExperimentConfig, rep: usize) -> Vec<RepRecord> {
    let p = cfg.theta_star.len();
    let fail_all = |e: &Error| cfg.methods.iter().map(|m| failed_record(m.short_name(), rep, p, e)).collect();
    let seed = replicate_seed(cfg.seed, rep as u64, STREAM_DATA);
    let system = match generate_transform_data(cfg.n, &cfg.theta_star, seed).and_then(|data| {
        let spec = TransformModelSpec::rule_of_thumb(&data, cfg.h_scale);
        transform_system(data, spec)
    }) {
        Ok(s) => s,
        Err(e) => return fail_all(&e),
    };
    let base = SolverConfig {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        init_lambda_mode: InitLambdaMode::Given,
        ..SolverConfig::default()
    };
    let theta0 = DVector::zeros(p);
    let lambda0 = match Solver::new(&system, base.clone()).init_lambda(&theta0) {
        Ok(l) => l,
        Err(e) => return fail_all(&e),
    };
    let init = ParameterState::new(theta0, lambda0);
    cfg.methods
        .iter()
        .map(|&method| {
            let solver_cfg = SolverConfig { method, ..base.clone() };
            match run_solver(&system, &init, &solver_cfg) {
                Ok(r) => RepRecord {
                    method: method.short_name().to_string(),
                    rep,
                    estimates: r.final_state.theta.as_slice().to_vec(),
                    iterations: r.iterations,
                    seconds: r.total_time,
                    converged: r.converged,
                    extrapolation_warnings: None,
                    error: None,
                },
                Err(e) => failed_record(method.short_name(), rep, p, &e),
            }
        })
        .collect()
}

/// Runs every replicate on the current rayon pool without the failure check.
pub fn run_transform_replicates(cfg: &TransformExperimentConfig) -> Result<ReplicationReport> {
    cfg.validate()?;
    let per_rep: Vec<RepRecord> = (0..cfg.reps)
        .into_par_iter()
        .map(|b| transform_replicate(cfg, b))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let meta = ReportMeta {
        experiment: "transform".into(),
        n_or_t: cfg.n,
        reps: cfg.reps,
        seed: cfg.seed,
        config_hash: config_hash(&format!("{cfg:?}")),
        truth: cfg.theta_star.clone(),
        coords: (1..=cfg.theta_star.len()).map(|j| format!("theta{j}")).collect(),
    };
    Ok(ReplicationReport::from_records(meta, per_rep))
}

/// [`run_transform_replicates`] followed by the failure-rate check.
pub fn run_transform_experiment(cfg: &TransformExperimentConfig) -> Result<ReplicationReport> {
    let report = run_transform_replicates(cfg)?;
    report.check_failures(MAX_FAILURE_RATE)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GarchExperimentConfig {
    pub setup: Setup,
    #[serde(rename = "T", alias = "t")]
    pub t: usize,
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<GarchMethod>,
    pub noise: Noise,
    pub burn_in: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Standard deviation of the Gaussian perturbation of the truth used as θ⁽⁰⁾.
    pub init_sd: f64,
}

impl Default for GarchExperimentConfig {
    fn default() -> Self {
        let solve = GarchSolveConfig::default();
        Self {
            setup: Setup::A,
            t: 500,
            reps: 100,
            seed: 20240,
            methods: GarchMethod::ALL.to_vec(),
            noise: Noise::default(),
            burn_in: DEFAULT_BURN_IN,
            tol: solve.tol,
            max_iter: solve.max_iter,
            init_sd: 0.01,
        }
    }
}

impl GarchExperimentConfig {
    pub fn truth(&self) -> GarchTheta {
        GarchTheta::design(self.setup)
    }

    pub fn solve_config(&self) -> GarchSolveConfig {
        GarchSolveConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            ..GarchSolveConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 || self.methods.is_empty() || !(self.init_sd >= 0.0) {
            return Err(Error::Domain("GARCH-M experiment needs reps ≥ 1, a method and init_sd ≥ 0".into()));
        }
        self.solve_config().validate()
    }
}

/// θ⁽⁰⁾ = truth + N(0, sd²) per coordinate, redrawn until stationary.
pub fn perturbed_init(truth: GarchTheta, sd: f64, seed: u64) -> GarchTheta {
    if sd == 0.0 {
        return truth;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sd).expect("finite positive sd");
    let x = truth.to_array();
    loop {
        let cand = GarchTheta::from_array(x.map(|v| v + normal.sample(&mut rng)));
        if cand.is_stationary() {
            return cand;
        }
    }
}

/// Explosive simulated paths are redrawn from fresh streams, at most this often.
pub const MAX_REDRAWS: u64 = 20;

const STREAM_REDRAW: u64 = 16;

/// Series for replicate `rep`, redrawing deterministically if a path explodes.
pub fn simulate_replicate(cfg: &GarchExperimentConfig, rep: usize) -> Result<crate::garchm::GarchSeries> {
    let truth = cfg.truth();
    let mut last = None;
    for attempt in 0..=MAX_REDRAWS {
        let stream = if attempt == 0 { STREAM_DATA } else { STREAM_REDRAW + attempt };
        let seed = replicate_seed(cfg.seed, rep as u64, stream);
        match generate_garchm(cfg.setup, cfg.t, truth, cfg.noise, cfg.burn_in, seed) {
            Ok(s) => return Ok(s),
            Err(e @ Error::Domain(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

pub fn garchm_replicate(cfg: &GarchExperimentConfig, rep: usize) -> Vec<RepRecord> {
    let truth = cfg.truth();
    let series = simulate_replicate(cfg, rep);
    let series = match series {
        Ok(s) => s,
        Err(e) => return cfg.methods.iter().map(|m| failed_record(m.short_name(), rep, 3, &e)).collect(),
    };
    let init = perturbed_init(truth, cfg.init_sd, replicate_seed(cfg.seed, rep as u64, STREAM_INIT));
    let solve_cfg = cfg.solve_config();
    cfg.methods
        .iter()
        .map(|&method| match garchm_solve(&series.y, method, init, &solve_cfg) {
            Ok(r) => RepRecord {
                method: method.short_name().to_string(),
                rep,
                estimates: r.theta.to_array().to_vec(),
                iterations: r.iterations,
                seconds: r.seconds,
                converged: r.converged,
                extrapolation_warnings: Some(r.extrapolation_warnings),
                error: None,
            },
            Err(e) => failed_record(method.short_name(), rep, 3, &e),
        })
        .collect()
}

pub fn run_garchm_replicates(cfg: &GarchExperimentConfig) -> Result<ReplicationReport> {
    cfg.validate()?;
    cfg.truth().check()?;
    let per_rep: Vec<RepRecord> = (0..cfg.reps)
        .into_par_iter()
        .map(|b| garchm_replicate(cfg, b))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let meta = ReportMeta {
        experiment: format!("garchm-{}", cfg.setup),
        n_or_t: cfg.t,
        reps: cfg.reps,
        seed: cfg.seed,
        config_hash: config_hash(&format!("{cfg:?}")),
        truth: cfg.truth().to_array().to_vec(),
        coords: vec!["omega".into(), "alpha".into(), "beta".into()],
    };
    Ok(ReplicationReport::from_records(meta, per_rep))
}

pub fn run_garchm_experiment(cfg: &GarchExperimentConfig) -> Result<ReplicationReport> {
    let report = run_garchm_replicates(cfg)?;
    report.check_failures(MAX_FAILURE_RATE)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicate_seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = (0..1000).map(|b| replicate_seed(7, b, 0)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
        assert_ne!(replicate_seed(7, 3, 0), replicate_seed(7, 3, 1));
        assert_ne!(replicate_seed(7, 3, 0), replicate_seed(8, 3, 0));
        assert_eq!(replicate_seed(7, 3, 0), replicate_seed(7, 3, 0));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(config_hash(""), "cbf29ce484222325");
        assert_eq!(config_hash("a"), "af63dc4c8601ec8c");
    }

    #[test]
    fn perturbed_init_is_stationary_and_seeded() {
        let truth = GarchTheta::design(Setup::A);
        for s in 0..200 {
            assert!(perturbed_init(truth, 0.01, s).is_stationary());
        }
        assert_eq!(perturbed_init(truth, 0.01, 5), perturbed_init(truth, 0.01, 5));
        assert_eq!(perturbed_init(truth, 0.0, 5), truth);
    }

    #[test]
    fn failure_policy() {
        let meta = ReportMeta {
            experiment: "x".into(),
            n_or_t: 1,
            reps: 20,
            seed: 0,
            config_hash: String::new(),
            truth: vec![0.0],
            coords: vec!["x".into()],
        };
        let rec = |rep, converged| RepRecord {
            method: "ip".into(),
            rep,
            estimates: vec![if converged { 0.1 } else { f64::NAN }],
            iterations: 2,
            seconds: 0.0,
            converged,
            extrapolation_warnings: None,
            error: None,
        };
        let one_bad: Vec<_> = (0..20).map(|b| rec(b, b != 4)).collect();
        let r = ReplicationReport::from_records(meta.clone(), one_bad);
        assert!(r.check_failures(MAX_FAILURE_RATE).is_ok());
        assert_eq!(r.aggregates["ip"].excluded, 1);
        assert_eq!(r.aggregates["ip"].metrics.replicates, 19);
        let two_bad: Vec<_> = (0..20).map(|b| rec(b, b % 10 != 0)).collect();
        let r = ReplicationReport::from_records(meta, two_bad);
        assert!(matches!(r.check_failures(MAX_FAILURE_RATE), Err(Error::TooManyFailures { failed: 2, total: 20 })));
    }
}
