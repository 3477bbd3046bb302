//! Semiparametric transformation model `E(δ | C, Z) = π(λ(C) + θᵀZ)`.
//!
//! λ is represented by its values at the observed follow-up times, so
//! q = n. The λ-block holds the n kernel-smoothed equations
//! `Φ_i = n⁻¹ Σ_j K_h(C_j − C_i)[δ_j − π(λ_i + θᵀZ_j)]`, the θ-block the p
//! covariate equations `Ψ = n⁻¹ Σ_j Z_j[δ_j − π(λ_j + θᵀZ_j)]`. Each Φ_i
//! depends on λ through λ_i only, so `∂Φ/∂λ` is diagonal.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::solver::{EstimatingSystem, LambdaStructure};

/// λ is kept inside this box so `exp` cannot overflow.
pub const LAMBDA_CLAMP: f64 = 30.0;

/// θ used in the simulation study, p = 10.
pub const REFERENCE_THETA: [f64; 10] = [0.7, 0.7, 0.7, -0.5, -0.5, -0.5, 0.3, 0.3, 0.3, 0.0];

/// Upper end of the uniform follow-up distribution.
pub const FOLLOW_UP_MAX: f64 = 12.0;

#[inline]
pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logistic_deriv(u: f64) -> f64 {
    let p = logistic(u);
    p * (1.0 - p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformData {
    /// n×p covariates.
    pub z: DMatrix<f64>,
    /// Follow-up times.
    pub c: DVector<f64>,
    /// Event indicators in {0, 1}.
    pub delta: DVector<f64>,
}

impl TransformData {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn event_fraction(&self) -> f64 {
        self.delta.mean()
    }
}

/// Event time from the inverse-logistic transform:
/// `T = 4 exp((ln u − ln(1 − u) − zᵀθ) / 3)`.
pub fn event_time(u: f64, linear_predictor: f64) -> f64 {
    4.0 * ((u.ln() - (1.0 - u).ln() - linear_predictor) / 3.0).exp()
}

pub fn generate_transform_data(n: usize, theta_star: &[f64], seed: u64) -> Result<TransformData> {
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    if theta_star.is_empty() || theta_star.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("θ* must be a non-empty finite vector".into()));
    }
    let p = theta_star.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DMatrix::zeros(n, p);
    let mut c = DVector::zeros(n);
    let mut delta = DVector::zeros(n);
    for i in 0..n {
        let mut lp = 0.0;
        for j in 0..p {
            let v: f64 = rng.sample(StandardNormal);
            z[(i, j)] = v;
            lp += v * theta_star[j];
        }
        // u in the open interval so both logs stay finite.
        let u: f64 = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        c[i] = rng.random::<f64>() * FOLLOW_UP_MAX;
        delta[i] = if event_time(u, lp) <= c[i] { 1.0 } else { 0.0 };
    }
    Ok(TransformData { z, c, delta })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Gaussian,
}

impl Kernel {
    /// `K_h(u)` including the `1/h` scaling.
    pub fn weight(self, u: f64, h: f64) -> f64 {
        match self {
            Kernel::Gaussian => (-0.5 * (u / h).powi(2)).exp() / (h * (2.0 * PI).sqrt()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformModelSpec {
    pub bandwidth: f64,
    pub kernel: Kernel,
}

impl TransformModelSpec {
    /// `h = h_scale · sd(C) · n^(-1/5)` with the Gaussian kernel.
    pub fn rule_of_thumb(data: &TransformData, h_scale: f64) -> Self {
        let n = data.n() as f64;
        let sd = if data.n() > 1 { data.c.variance().sqrt() * (n / (n - 1.0)).sqrt() } else { 1.0 };
        let sd = if sd > 0.0 { sd } else { 1.0 };
        Self {
            bandwidth: h_scale * sd * n.powf(-0.2),
            kernel: Kernel::Gaussian,
        }
    }
}

/// The transformation model as an [`EstimatingSystem`].
#[derive(Debug, Clone)]
pub struct TransformSystem {
    data: TransformData,
    spec: TransformModelSpec,
    /// `K_h(C_j − C_i)` at row i, column j.
    kernel: DMatrix<f64>,
}

pub fn transform_system(data: TransformData, spec: TransformModelSpec) -> Result<TransformSystem> {
    TransformSystem::new(data, spec)
}

impl TransformSystem {
    pub fn new(data: TransformData, spec: TransformModelSpec) -> Result<Self> {
        if !(spec.bandwidth > 0.0) || !spec.bandwidth.is_finite() {
            return Err(Error::Domain(format!("bandwidth must be positive, got {}", spec.bandwidth)));
        }
        let n = data.n();
        if n == 0 || data.z.nrows() != n || data.delta.len() != n {
            return Err(Error::Domain("inconsistent transformation-model data".into()));
        }
        let events = data.delta.sum();
        if events <= 0.0 || events >= n as f64 {
            // Every kernel equation then asks π(·) to equal 0 or 1 exactly.
            return Err(Error::Domain(
                "all event indicators are equal; the λ equations have no finite root".into(),
            ));
        }
        let kernel = DMatrix::from_fn(n, n, |i, j| spec.kernel.weight(data.c[j] - data.c[i], spec.bandwidth));
        Ok(Self { data, spec, kernel })
    }

    pub fn data(&self) -> &TransformData {
        &self.data
    }

    pub fn spec(&self) -> &TransformModelSpec {
        &self.spec
    }

    fn linear_predictor(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.data.z * theta
    }

    /// `W_ij = K_h(C_j − C_i) π'(λ_i + θᵀZ_j)`.
    fn weighted_derivs(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> DMatrix<f64> {
        let s = self.linear_predictor(theta);
        let n = self.data.n();
        DMatrix::from_fn(n, n, |i, j| self.kernel[(i, j)] * logistic_deriv(lambda[i] + s[j]))
    }

    /// `π'(λ_i + θᵀZ_i)` for every observation.
    fn own_derivs(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        let s = self.linear_predictor(theta);
        DVector::from_fn(self.data.n(), |i, _| logistic_deriv(lambda[i] + s[i]))
    }

    /// Closed-form rows `d_i = −Σ_j W_ij Z_j / Σ_j W_ij` of `dλ/dθ`.
    pub fn implicit_gradient(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        let w = self.weighted_derivs(theta, lambda);
        let num = &w * &self.data.z;
        let den = w.column_sum();
        let mut d = DMatrix::zeros(self.data.n(), self.data.p());
        for i in 0..self.data.n() {
            if !(den[i] > 0.0) {
                return Err(Error::IsolatedPoint { index: i });
            }
            for k in 0..self.data.p() {
                d[(i, k)] = -num[(i, k)] / den[i];
            }
        }
        Ok(d)
    }

    /// Profiled Hessian `−n⁻¹ Σ_i π'_i Z_i (Z_i + d_i)ᵀ`: the total derivative
    /// of Ψ along λ(θ), i.e. `−n⁻¹` times the displayed form
    /// `Σ Z_iZ_iᵀπ'_i + Σ Z_i d_iᵀ π'_i`.
    pub fn ip_hessian(&self, theta: &DVector<f64>, lambda: &DVector<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
        let pd = self.own_derivs(theta, lambda);
        let n = self.data.n() as f64;
        let weighted_z = DMatrix::from_fn(self.data.n(), self.data.p(), |i, k| pd[i] * self.data.z[(i, k)]);
        -(weighted_z.transpose() * (&self.data.z + d)) / n
    }
}

pub fn transform_implicit_gradient(
    system: &TransformSystem,
    theta: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    system.implicit_gradient(theta, lambda)
}

pub fn transform_ip_hessian(
    system: &TransformSystem,
    theta: &DVector<f64>,
    lambda: &DVector<f64>,
    d: &DMatrix<f64>,
) -> DMatrix<f64> {
    system.ip_hessian(theta, lambda, d)
}

impl EstimatingSystem for TransformSystem {
    fn theta_dim(&self) -> usize {
        self.data.p()
    }

    fn lambda_dim(&self) -> usize {
        self.data.n()
    }

    fn psi(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        let s = self.linear_predictor(theta);
        let n = self.data.n();
        let resid = DVector::from_fn(n, |j, _| self.data.delta[j] - logistic(lambda[j] + s[j]));
        self.data.z.tr_mul(&resid) / n as f64
    }

    fn phi(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        let s = self.linear_predictor(theta);
        let n = self.data.n();
        DVector::from_fn(n, |i, _| {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.kernel[(i, j)] * (self.data.delta[j] - logistic(lambda[i] + s[j]));
            }
            acc / n as f64
        })
    }

    fn jac_psi_theta(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> Option<DMatrix<f64>> {
        let pd = self.own_derivs(theta, lambda);
        let n = self.data.n();
        let weighted_z = DMatrix::from_fn(n, self.data.p(), |i, k| pd[i] * self.data.z[(i, k)]);
        Some(-(weighted_z.transpose() * &self.data.z) / n as f64)
    }

    fn jac_psi_lambda(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> Option<DMatrix<f64>> {
        let pd = self.own_derivs(theta, lambda);
        let n = self.data.n();
        Some(DMatrix::from_fn(self.data.p(), n, |k, j| -pd[j] * self.data.z[(j, k)] / n as f64))
    }

    fn jac_phi_theta(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> Option<DMatrix<f64>> {
        let w = self.weighted_derivs(theta, lambda);
        Some(-(w * &self.data.z) / self.data.n() as f64)
    }

    fn jac_phi_lambda(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.jac_phi_lambda_diag(theta, lambda).map(|d| DMatrix::from_diagonal(&d))
    }

    fn jac_phi_lambda_diag(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> Option<DVector<f64>> {
        let w = self.weighted_derivs(theta, lambda);
        Some(-w.column_sum() / self.data.n() as f64)
    }

    fn lambda_structure(&self) -> LambdaStructure {
        LambdaStructure::Diagonal
    }

    fn project_lambda(&self, lambda: &mut DVector<f64>) {
        lambda.apply(|v| *v = v.clamp(-LAMBDA_CLAMP, LAMBDA_CLAMP));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fd_jacobian;
    use crate::solver::{Solver, SolverConfig};
    use crate::ParameterState;
    use approx::assert_abs_diff_eq;

    fn small_system(seed: u64) -> TransformSystem {
        let data = generate_transform_data(30, &[0.5, -0.5, 0.3], seed).unwrap();
        let spec = TransformModelSpec::rule_of_thumb(&data, 1.0);
        TransformSystem::new(data, spec).unwrap()
    }

    fn point(sys: &TransformSystem) -> (DVector<f64>, DVector<f64>) {
        let theta = DVector::from_column_slice(&[0.2, -0.1, 0.4]);
        let lambda = DVector::from_fn(sys.lambda_dim(), |i, _| -1.0 + 0.07 * i as f64);
        (theta, lambda)
    }

    fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let scale = b.amax().max(1e-12);
        (a - b).amax() / scale
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert_abs_diff_eq!(logistic(3.0) + logistic(-3.0), 1.0, epsilon = 1e-15);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) == 1.0);
        assert_abs_diff_eq!(logistic_deriv(0.0), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn event_time_inverts_the_transform() {
        for (u, lp) in [(0.3, 0.0), (0.9, 1.2), (0.05, -0.7)] {
            let t: f64 = event_time(u, lp);
            assert_abs_diff_eq!(logistic(3.0 * (t / 4.0).ln() + lp), u, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(event_time(0.5, 0.0), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn simulation_shapes_and_determinism() {
        let a = generate_transform_data(200, &REFERENCE_THETA, 11).unwrap();
        let b = generate_transform_data(200, &REFERENCE_THETA, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.n(), a.p()), (200, 10));
        assert!(a.c.iter().all(|&c| (0.0..FOLLOW_UP_MAX).contains(&c)));
        assert!(a.delta.iter().all(|&d| d == 0.0 || d == 1.0));
        let f = a.event_fraction();
        assert!(f > 0.0 && f < 1.0);
        assert!(generate_transform_data(0, &REFERENCE_THETA, 1).is_err());
        assert!(generate_transform_data(5, &[], 1).is_err());
    }

    #[test]
    fn gaussian_kernel_integrates_to_one() {
        let h = 0.7;
        let step = 1e-3;
        let total: f64 = (-10_000..=10_000).map(|k| Kernel::Gaussian.weight(k as f64 * step, h) * step).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let mut data = generate_transform_data(20, &[0.3], 2).unwrap();
        let spec = TransformModelSpec::rule_of_thumb(&data, 1.0);
        assert!(TransformSystem::new(data.clone(), TransformModelSpec { bandwidth: 0.0, ..spec }).is_err());
        data.delta.fill(1.0);
        assert!(matches!(TransformSystem::new(data.clone(), spec), Err(Error::Domain(_))));
        data.delta.fill(0.0);
        assert!(TransformSystem::new(data, spec).is_err());
    }

    #[test]
    fn analytic_blocks_match_finite_differences() {
        let sys = small_system(5);
        let (theta, lambda) = point(&sys);
        let fd_t = |f: &dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>| {
            fd_jacobian(|t| Ok(f(t, &lambda)), &theta, 1e-6).unwrap()
        };
        let fd_l = |f: &dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>| {
            fd_jacobian(|l| Ok(f(&theta, l)), &lambda, 1e-6).unwrap()
        };
        let psi = |t: &DVector<f64>, l: &DVector<f64>| sys.psi(t, l);
        let phi = |t: &DVector<f64>, l: &DVector<f64>| sys.phi(t, l);
        assert!(max_rel(&sys.jac_psi_theta(&theta, &lambda).unwrap(), &fd_t(&psi)) < 1e-5);
        assert!(max_rel(&sys.jac_phi_theta(&theta, &lambda).unwrap(), &fd_t(&phi)) < 1e-5);
        assert!(max_rel(&sys.jac_psi_lambda(&theta, &lambda).unwrap(), &fd_l(&psi)) < 1e-5);
        let fd_phi_l = fd_l(&phi);
        assert!(max_rel(&sys.jac_phi_lambda(&theta, &lambda).unwrap(), &fd_phi_l) < 1e-5);
        for i in 0..fd_phi_l.nrows() {
            for j in 0..fd_phi_l.ncols() {
                if i != j {
                    assert!(fd_phi_l[(i, j)].abs() < 1e-7, "off-diagonal ({i},{j}) = {}", fd_phi_l[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn closed_forms_match_the_generic_solver() {
        let sys = small_system(8);
        let (theta, lambda) = point(&sys);
        let solver = Solver::new(&sys, SolverConfig::default());
        let state = ParameterState::new(theta.clone(), lambda.clone());
        let d_generic = solver.implicit_gradient(&state).unwrap();
        let d = sys.implicit_gradient(&theta, &lambda).unwrap();
        assert!((&d - &d_generic).amax() < 1e-10);
        let h_generic = solver.ip_hessian(&state, &d_generic).unwrap();
        assert!((sys.ip_hessian(&theta, &lambda, &d) - h_generic).amax() < 1e-10);
    }

    #[test]
    fn ip_hessian_is_the_profiled_derivative() {
        let sys = small_system(13);
        let solver = Solver::new(&sys, SolverConfig { tol: 1e-13, ..SolverConfig::default() });
        let theta = DVector::from_column_slice(&[0.3, -0.2, 0.1]);
        let lambda = solver.init_lambda(&theta).unwrap();
        let profiled = |t: &DVector<f64>| -> Result<DVector<f64>> {
            let l = solver.init_lambda_from(t, &lambda)?;
            Ok(sys.psi(t, &l))
        };
        let fd = fd_jacobian(profiled, &theta, 1e-5).unwrap();
        let d = sys.implicit_gradient(&theta, &lambda).unwrap();
        let h = sys.ip_hessian(&theta, &lambda, &d);
        assert!((&h - &fd).amax() < 1e-4 * fd.amax().max(1.0), "{h} vs {fd}");
    }

    #[test]
    fn uncoupled_hessian_is_a_weighted_gram_matrix() {
        let sys = small_system(21);
        let (theta, lambda) = point(&sys);
        let h = -sys.ip_hessian(&theta, &lambda, &DMatrix::zeros(30, 3));
        assert!((&h - h.transpose()).amax() < 1e-15);
        assert!(h.symmetric_eigenvalues().min() >= -1e-14);
    }
}
