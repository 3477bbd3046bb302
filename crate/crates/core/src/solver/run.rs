use std::time::Instant;

use nalgebra::DVector;

use super::steps::Solver;
use super::system::EstimatingSystem;
use super::{InitLambdaMode, Method, ParameterState, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::vec_inf_norm;

/// State after one outer iteration.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub theta: DVector<f64>,
    pub lambda: DVector<f64>,
    /// Residual norms measured at this iteration's convergence check.
    pub residual_psi: f64,
    pub residual_phi: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub method: Method,
    pub final_state: ParameterState,
    pub converged: bool,
    pub iterations: usize,
    pub residual_psi: f64,
    pub residual_phi: f64,
    pub trace: Vec<TraceRecord>,
    pub total_time: f64,
}

fn residuals<S: EstimatingSystem + ?Sized>(
    system: &S,
    state: &ParameterState,
    last_finite: &ParameterState,
    iterations: usize,
) -> Result<(DVector<f64>, f64, f64)> {
    let psi = system.psi(&state.theta, &state.lambda);
    let phi = system.phi(&state.theta, &state.lambda);
    let (rp, rf) = (vec_inf_norm(&psi), vec_inf_norm(&phi));
    if !(rp.is_finite() && rf.is_finite() && state.is_finite()) {
        return Err(Error::Divergence {
            context: "residual evaluation".into(),
            iterations,
            last_finite: last_finite.stacked().as_slice().to_vec(),
        });
    }
    Ok((psi, rp, rf))
}

/// Iterates the configured method until `‖Ψ‖∞ ≤ tol` and `‖Φ‖∞ ≤ tol`.
///
/// Newton-Raphson tests convergence after every stacked step. The sweep
/// methods test it after the λ half-step, at `(θ⁽ᵏ⁾, λ⁽ᵏ⁺¹⁾)`, where Ψ is
/// evaluated for the θ half-step anyway; a sweep whose check passes ends
/// there and still counts as an iteration. Exhausting `max_iter` yields
/// `converged = false` rather than an error.
pub fn run_solver<S: EstimatingSystem + ?Sized>(
    system: &S,
    init: &ParameterState,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    init.validate(system.theta_dim(), system.lambda_dim())?;
    let solver = Solver::new(system, cfg.clone());
    let start = Instant::now();

    let mut state = init.clone();
    if cfg.init_lambda_mode == InitLambdaMode::SolvePhi {
        state.lambda = solver.init_lambda_from(&state.theta, &state.lambda)?;
    }

    let (_, mut rpsi, mut rphi) = residuals(system, &state, &state, 0)?;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let tol = cfg.tol;

    let converged = loop {
        if rpsi <= tol && rphi <= tol {
            break true;
        }
        if iterations == cfg.max_iter {
            break false;
        }
        let step_start = Instant::now();
        let next = match cfg.method {
            Method::NewtonRaphson => {
                let next = solver.newton_step(&state)?;
                let (_, p, f) = residuals(system, &next, &state, iterations)?;
                rpsi = p;
                rphi = f;
                next
            }
            Method::ImplicitProfiling | Method::NaiveIteration => {
                let lambda = solver.lambda_update(&state.theta, &state.lambda)?;
                let mid = ParameterState::new(state.theta.clone(), lambda);
                let (psi, p, f) = residuals(system, &mid, &state, iterations)?;
                rpsi = p;
                rphi = f;
                if p <= tol && f <= tol {
                    mid
                } else {
                    let theta = if cfg.method == Method::ImplicitProfiling {
                        solver.ip_theta_update(&mid, &psi)?
                    } else {
                        solver.naive_theta_update(&mid, &psi)?
                    };
                    let next = ParameterState::new(theta, mid.lambda);
                    if !next.is_finite() {
                        return Err(Error::Divergence {
                            context: "θ-step".into(),
                            iterations,
                            last_finite: state.stacked().as_slice().to_vec(),
                        });
                    }
                    next
                }
            }
        };
        iterations += 1;
        trace.push(TraceRecord {
            theta: next.theta.clone(),
            lambda: next.lambda.clone(),
            residual_psi: rpsi,
            residual_phi: rphi,
            seconds: step_start.elapsed().as_secs_f64(),
        });
        state = next;
    };

    if !converged && cfg.method != Method::NewtonRaphson && iterations > 0 {
        // The last check was at the mid-sweep point; report the final state.
        let (_, p, f) = residuals(system, &state, &state, iterations)?;
        rpsi = p;
        rphi = f;
    }

    Ok(SolveReport {
        method: cfg.method,
        final_state: state,
        converged,
        iterations,
        residual_psi: rpsi,
        residual_phi: rphi,
        trace,
        total_time: start.elapsed().as_secs_f64(),
    })
}
