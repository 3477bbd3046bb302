use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::fd_jacobian;

/// Shape of `∂Φ/∂λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaStructure {
    Dense,
    /// Off-diagonal entries are identically zero; λ solves become row-wise.
    Diagonal,
}

/// Callback bundle for a two-block estimating system.
///
/// Only `psi` and `phi` are required. Any Jacobian block left as `None` is
/// replaced by a central finite difference.
pub trait EstimatingSystem: Sync {
    fn theta_dim(&self) -> usize;
    fn lambda_dim(&self) -> usize;

    /// θ-block equations, length p.
    fn psi(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64>;
    /// λ-block equations, length q.
    fn phi(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64>;

    fn jac_psi_theta(&self, _theta: &DVector<f64>, _lambda: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
    fn jac_psi_lambda(&self, _theta: &DVector<f64>, _lambda: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
    fn jac_phi_theta(&self, _theta: &DVector<f64>, _lambda: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
    fn jac_phi_lambda(&self, _theta: &DVector<f64>, _lambda: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
    /// Diagonal of `∂Φ/∂λ`, for systems declaring [`LambdaStructure::Diagonal`].
    fn jac_phi_lambda_diag(&self, _theta: &DVector<f64>, _lambda: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    fn lambda_structure(&self) -> LambdaStructure {
        LambdaStructure::Dense
    }

    /// Hook applied to every λ produced by a Newton update.
    fn project_lambda(&self, _lambda: &mut DVector<f64>) {}
}

/// Jacobian blocks of a system with the finite-difference fallback applied.
pub struct Jacobians<'a, S: ?Sized> {
    system: &'a S,
    fd_step: f64,
}

impl<'a, S: EstimatingSystem + ?Sized> Jacobians<'a, S> {
    pub fn new(system: &'a S, fd_step: f64) -> Self {
        Self { system, fd_step }
    }

    pub fn psi_theta(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self.system.jac_psi_theta(theta, lambda) {
            Some(j) => Ok(j),
            None => fd_jacobian(|t| Ok(self.system.psi(t, lambda)), theta, self.fd_step),
        }
    }

    pub fn psi_lambda(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self.system.jac_psi_lambda(theta, lambda) {
            Some(j) => Ok(j),
            None => fd_jacobian(|l| Ok(self.system.psi(theta, l)), lambda, self.fd_step),
        }
    }

    pub fn phi_theta(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self.system.jac_phi_theta(theta, lambda) {
            Some(j) => Ok(j),
            None => fd_jacobian(|t| Ok(self.system.phi(t, lambda)), theta, self.fd_step),
        }
    }

    pub fn phi_lambda(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        if let Some(j) = self.system.jac_phi_lambda(theta, lambda) {
            return Ok(j);
        }
        if self.system.lambda_structure() == LambdaStructure::Diagonal {
            if let Some(d) = self.system.jac_phi_lambda_diag(theta, lambda) {
                return Ok(DMatrix::from_diagonal(&d));
            }
        }
        fd_jacobian(|l| Ok(self.system.phi(theta, l)), lambda, self.fd_step)
    }

    /// Diagonal of `∂Φ/∂λ`; only meaningful under [`LambdaStructure::Diagonal`].
    pub fn phi_lambda_diag(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> Result<DVector<f64>> {
        if let Some(d) = self.system.jac_phi_lambda_diag(theta, lambda) {
            return Ok(d);
        }
        if let Some(j) = self.system.jac_phi_lambda(theta, lambda) {
            return Ok(j.diagonal());
        }
        // With a diagonal Jacobian, perturbing every coordinate at once
        // recovers the diagonal in two evaluations.
        let mut plus = lambda.clone();
        let mut minus = lambda.clone();
        let mut h = DVector::zeros(lambda.len());
        for i in 0..lambda.len() {
            h[i] = self.fd_step * lambda[i].abs().max(1.0);
            plus[i] += h[i];
            minus[i] -= h[i];
        }
        let fp = self.system.phi(theta, &plus);
        let fm = self.system.phi(theta, &minus);
        Ok(DVector::from_fn(lambda.len(), |i, _| (fp[i] - fm[i]) / (2.0 * h[i])))
    }

    /// Full `(p+q)×(p+q)` Jacobian of the stacked system `G = (Ψ, Φ)`.
    pub fn stacked(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        let p = theta.len();
        let q = lambda.len();
        let mut j = DMatrix::zeros(p + q, p + q);
        j.view_mut((0, 0), (p, p)).copy_from(&self.psi_theta(theta, lambda)?);
        j.view_mut((0, p), (p, q)).copy_from(&self.psi_lambda(theta, lambda)?);
        j.view_mut((p, 0), (q, p)).copy_from(&self.phi_theta(theta, lambda)?);
        j.view_mut((p, p), (q, q)).copy_from(&self.phi_lambda(theta, lambda)?);
        Ok(j)
    }
}
