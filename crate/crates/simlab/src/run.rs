//! Experiment drivers behind the subcommands.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use semiprof_core::experiment::replicate_seed;
use semiprof_core::quadratic::random_quadratic;
use semiprof_core::toy::{toy_initial_point, toy_path, toy_step_experiment, ToyStepRow};
use semiprof_core::{run_solver, EstimatingSystem, InitLambdaMode, Method, ParameterState, SolverConfig};

use crate::config::{QuadConfig, ToyConfig};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyOutput {
    /// Mean steps per `(method, α, C)` over the γ grid.
    pub cells: Vec<ToyStepRow>,
    /// Mean steps per `(method, α)` over every starting point.
    pub by_alpha: Vec<(Method, f64, f64)>,
    /// `(method, step, x, y)` from one starting point, when requested.
    pub paths: Vec<(Method, usize, f64, f64)>,
}

pub fn run_toy(cfg: &ToyConfig) -> Result<ToyOutput, CliError> {
    let cells = toy_step_experiment(&cfg.alphas, &cfg.c_values, cfg.tol, &cfg.methods)?;
    let mut by_alpha = Vec::new();
    for &m in &cfg.methods {
        for &a in &cfg.alphas {
            let steps: Vec<f64> = cells
                .iter()
                .filter(|r| r.method == m && r.alpha == a)
                .map(|r| r.mean_steps)
                .collect();
            by_alpha.push((m, a, steps.iter().sum::<f64>() / steps.len() as f64));
        }
    }
    let mut paths = Vec::new();
    if cfg.paths {
        let start = toy_initial_point(cfg.path_alpha, cfg.path_c, 0.2 * PI);
        for &m in &cfg.methods {
            for (k, x, y) in toy_path(cfg.path_alpha, start, m, cfg.tol)? {
                paths.push((m, k, x, y));
            }
        }
    }
    Ok(ToyOutput { cells, by_alpha, paths })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadTrial {
    pub trial: usize,
    pub p: usize,
    pub q: usize,
    pub ip_iterations: usize,
    pub ip_residual: f64,
    pub nr_iterations: usize,
    /// Largest pairwise θ gap between the three limit points; NaN if one failed.
    pub theta_gap: f64,
}

impl QuadTrial {
    pub fn ip_ok(&self) -> bool {
        self.ip_iterations <= 2 && self.ip_residual <= QUAD_TOL
    }

    pub fn nr_ok(&self) -> bool {
        self.nr_iterations == 1
    }

    pub fn agree_ok(&self) -> bool {
        self.theta_gap <= QUAD_AGREEMENT
    }
}

pub const QUAD_TOL: f64 = 1e-10;
pub const QUAD_AGREEMENT: f64 = 1e-6;

fn quad_trial(cfg: &QuadConfig, trial: usize) -> Result<QuadTrial, CliError> {
    let seed = replicate_seed(cfg.seed, trial as u64, 0);
    let (p, q) = if cfg.random_dims {
        let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(cfg.seed, trial as u64, 1));
        (rng.random_range(1..=cfg.p), rng.random_range(1..=cfg.q))
    } else {
        (cfg.p, cfg.q)
    };
    let qp = random_quadratic(p, q, cfg.cond_max, seed);
    let init = ParameterState::new(
        start_block(p, seed, 2.0),
        start_block(q, seed ^ 0x9e37_79b9, 2.0),
    );
    let solve = |method: Method, max_iter: usize| {
        let c = SolverConfig {
            method,
            tol: QUAD_TOL,
            max_iter,
            init_lambda_mode: InitLambdaMode::Given,
            ..SolverConfig::default()
        };
        run_solver(&qp, &init, &c)
    };
    let ip = solve(Method::ImplicitProfiling, 50)?;
    let nr = solve(Method::NewtonRaphson, 50)?;
    let naive = solve(Method::NaiveIteration, 100_000)?;
    let s = &ip.final_state;
    let ip_residual = qp
        .psi(&s.theta, &s.lambda)
        .amax()
        .max(qp.phi(&s.theta, &s.lambda).amax());
    let theta_gap = if ip.converged && nr.converged && naive.converged {
        let t = [&ip, &nr, &naive].map(|r| r.final_state.theta.clone());
        (&t[0] - &t[1]).amax().max((&t[0] - &t[2]).amax()).max((&t[1] - &t[2]).amax())
    } else {
        f64::NAN
    };
    Ok(QuadTrial {
        trial,
        p,
        q,
        ip_iterations: if ip.converged { ip.iterations } else { usize::MAX },
        ip_residual,
        nr_iterations: if nr.converged { nr.iterations } else { usize::MAX },
        theta_gap,
    })
}

/// Starting block drawn uniformly from `[-scale, scale]`.
fn start_block(len: usize, seed: u64, scale: f64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(len, |_, _| rng.random_range(-scale..=scale))
}

pub fn run_quadcheck(cfg: &QuadConfig) -> Result<Vec<QuadTrial>, CliError> {
    (0..cfg.trials).into_par_iter().map(|t| quad_trial(cfg, t)).collect()
}
