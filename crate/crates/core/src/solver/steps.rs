use nalgebra::{DMatrix, DVector};

use super::system::{EstimatingSystem, Jacobians, LambdaStructure};
use super::{ParameterState, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{solve_dense, solve_dense_vec, solve_diagonal, vec_inf_norm};

/// Single-step operations of the three methods, bound to one system.
pub struct Solver<'a, S: ?Sized> {
    pub(crate) system: &'a S,
    pub(crate) cfg: SolverConfig,
}

impl<'a, S: EstimatingSystem + ?Sized> Solver<'a, S> {
    pub fn new(system: &'a S, cfg: SolverConfig) -> Self {
        Self { system, cfg }
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn jacobians(&self) -> Jacobians<'a, S> {
        Jacobians::new(self.system, self.cfg.fd_step)
    }

    /// Solves `∂Φ/∂λ · x = rhs` honoring the declared structure.
    fn solve_phi_lambda(
        &self,
        theta: &DVector<f64>,
        lambda: &DVector<f64>,
        rhs: &DMatrix<f64>,
        context: &str,
    ) -> Result<DMatrix<f64>> {
        let jac = self.jacobians();
        match self.system.lambda_structure() {
            LambdaStructure::Diagonal => {
                let d = jac.phi_lambda_diag(theta, lambda)?;
                solve_diagonal(&d, rhs, context)
            }
            LambdaStructure::Dense => solve_dense(&jac.phi_lambda(theta, lambda)?, rhs, context),
        }
    }

    /// One Newton update of λ on `Φ(θ, ·)` with θ held fixed.
    pub fn lambda_update(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> Result<DVector<f64>> {
        let phi = self.system.phi(theta, lambda);
        self.lambda_update_with(theta, lambda, &phi)
    }

    fn lambda_update_with(
        &self,
        theta: &DVector<f64>,
        lambda: &DVector<f64>,
        phi: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let rhs = DMatrix::from_column_slice(phi.len(), 1, phi.as_slice());
        let delta = self.solve_phi_lambda(theta, lambda, &rhs, "∂Φ/∂λ (λ-step)")?;
        let mut next = lambda - DVector::from_column_slice(delta.as_slice());
        self.system.project_lambda(&mut next);
        Ok(next)
    }

    /// Solves `Φ(θ⁽⁰⁾, λ) = 0` for λ by Newton iteration, starting from `lambda0`.
    pub fn init_lambda_from(&self, theta0: &DVector<f64>, lambda0: &DVector<f64>) -> Result<DVector<f64>> {
        let mut lambda = lambda0.clone();
        let mut phi = self.system.phi(theta0, &lambda);
        let mut best = (vec_inf_norm(&phi), lambda.clone());
        for _ in 0..self.cfg.init_lambda_max_iter {
            let r = vec_inf_norm(&phi);
            if !r.is_finite() {
                break;
            }
            if r < best.0 {
                best = (r, lambda.clone());
            }
            if r <= self.cfg.tol {
                return Ok(lambda);
            }
            lambda = self.lambda_update_with(theta0, &lambda, &phi)?;
            phi = self.system.phi(theta0, &lambda);
        }
        let r = vec_inf_norm(&phi);
        if r <= self.cfg.tol {
            return Ok(lambda);
        }
        if r < best.0 {
            best = (r, lambda);
        }
        Err(Error::InitLambda {
            iterations: self.cfg.init_lambda_max_iter,
            residual: best.0,
            best: best.1.as_slice().to_vec(),
        })
    }

    /// Algorithm step 2: λ⁽⁰⁾ from `Φ(θ⁽⁰⁾, λ⁽⁰⁾) = 0`, started at λ = 0.
    pub fn init_lambda(&self, theta0: &DVector<f64>) -> Result<DVector<f64>> {
        self.init_lambda_from(theta0, &DVector::zeros(self.system.lambda_dim()))
    }

    /// `d = dλ/dθ` from `(∂Φ/∂λ) d = -∂Φ/∂θ`, a q×p matrix.
    pub fn implicit_gradient(&self, state: &ParameterState) -> Result<DMatrix<f64>> {
        let phi_theta = self.jacobians().phi_theta(&state.theta, &state.lambda)?;
        self.solve_phi_lambda(&state.theta, &state.lambda, &(-phi_theta), "∂Φ/∂λ (implicit gradient)")
    }

    /// Profiled Hessian `∂Ψ/∂θ + (∂Ψ/∂λ) d` at the state where `d` was computed.
    pub fn ip_hessian(&self, state: &ParameterState, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let jac = self.jacobians();
        let psi_theta = jac.psi_theta(&state.theta, &state.lambda)?;
        let psi_lambda = jac.psi_lambda(&state.theta, &state.lambda)?;
        Ok(psi_theta + psi_lambda * d)
    }

    /// θ half-step of implicit profiling at `(θ⁽ᵏ⁾, λ⁽ᵏ⁺¹⁾)`.
    pub(crate) fn ip_theta_update(&self, mid: &ParameterState, psi: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.implicit_gradient(mid)?;
        let h = self.ip_hessian(mid, &d)?;
        let delta = solve_dense_vec(&h, psi, "IP Hessian (θ-step)")?;
        Ok(&mid.theta - delta)
    }

    /// θ half-step of naive iteration, using `∂Ψ/∂θ` only.
    pub(crate) fn naive_theta_update(&self, mid: &ParameterState, psi: &DVector<f64>) -> Result<DVector<f64>> {
        let h = self.jacobians().psi_theta(&mid.theta, &mid.lambda)?;
        let delta = solve_dense_vec(&h, psi, "∂Ψ/∂θ (naive θ-step)")?;
        Ok(&mid.theta - delta)
    }

    /// One implicit-profiling sweep: λ-step, then θ-step with the profiled
    /// Hessian evaluated at `(θ⁽ᵏ⁾, λ⁽ᵏ⁺¹⁾)`.
    pub fn ip_step(&self, state: &ParameterState) -> Result<ParameterState> {
        let lambda = self.lambda_update(&state.theta, &state.lambda)?;
        let mid = ParameterState::new(state.theta.clone(), lambda);
        let psi = self.system.psi(&mid.theta, &mid.lambda);
        let theta = self.ip_theta_update(&mid, &psi)?;
        Ok(ParameterState::new(theta, mid.lambda))
    }

    /// One naive sweep; the cross-blocks `∂Ψ/∂λ` and `∂Φ/∂θ` are never used.
    pub fn naive_step(&self, state: &ParameterState) -> Result<ParameterState> {
        let lambda = self.lambda_update(&state.theta, &state.lambda)?;
        let mid = ParameterState::new(state.theta.clone(), lambda);
        let psi = self.system.psi(&mid.theta, &mid.lambda);
        let theta = self.naive_theta_update(&mid, &psi)?;
        Ok(ParameterState::new(theta, mid.lambda))
    }

    /// Full Newton step on the stacked vector β.
    pub fn newton_step(&self, state: &ParameterState) -> Result<ParameterState> {
        let p = state.theta.len();
        let jac = self.jacobians().stacked(&state.theta, &state.lambda)?;
        let psi = self.system.psi(&state.theta, &state.lambda);
        let phi = self.system.phi(&state.theta, &state.lambda);
        let g = DVector::from_iterator(p + phi.len(), psi.iter().chain(phi.iter()).copied());
        let delta = solve_dense_vec(&jac, &g, "stacked Jacobian (Newton step)")?;
        let mut next = ParameterState::from_stacked(&(state.stacked() - delta), p);
        self.system.project_lambda(&mut next.lambda);
        Ok(next)
    }
}
