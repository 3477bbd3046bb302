//! Generic quadratic loss `Q(β) = gᵀβ + ½ βᵀHβ` split into (θ, λ) blocks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::{solve_dense, solve_dense_vec};
use crate::solver::{EstimatingSystem, ParameterState};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    pub g1: DVector<f64>,
    pub g2: DVector<f64>,
    pub h11: DMatrix<f64>,
    pub h12: DMatrix<f64>,
    pub h21: DMatrix<f64>,
    pub h22: DMatrix<f64>,
}

impl QuadraticProblem {
    /// Splits a stacked `(g, H)` after the first `p` coordinates.
    pub fn from_stacked(g: &DVector<f64>, h: &DMatrix<f64>, p: usize) -> Self {
        let n = g.len();
        let q = n - p;
        Self {
            g1: g.rows(0, p).into_owned(),
            g2: g.rows(p, q).into_owned(),
            h11: h.view((0, 0), (p, p)).into_owned(),
            h12: h.view((0, p), (p, q)).into_owned(),
            h21: h.view((p, 0), (q, p)).into_owned(),
            h22: h.view((p, p), (q, q)).into_owned(),
        }
    }

    pub fn p(&self) -> usize {
        self.g1.len()
    }

    pub fn q(&self) -> usize {
        self.g2.len()
    }

    pub fn stacked_h(&self) -> DMatrix<f64> {
        let (p, q) = (self.p(), self.q());
        let mut h = DMatrix::zeros(p + q, p + q);
        h.view_mut((0, 0), (p, p)).copy_from(&self.h11);
        h.view_mut((0, p), (p, q)).copy_from(&self.h12);
        h.view_mut((p, 0), (q, p)).copy_from(&self.h21);
        h.view_mut((p, p), (q, q)).copy_from(&self.h22);
        h
    }

    pub fn stacked_g(&self) -> DVector<f64> {
        DVector::from_iterator(self.p() + self.q(), self.g1.iter().chain(self.g2.iter()).copied())
    }

    /// Stationary point `β* = -H⁻¹g`.
    pub fn minimizer(&self) -> Result<ParameterState> {
        let beta = -solve_dense_vec(&self.stacked_h(), &self.stacked_g(), "stacked H")?;
        Ok(ParameterState::from_stacked(&beta, self.p()))
    }

    /// `λ` solving `G₂(θ, λ) = 0` for fixed θ: `-H₂₂⁻¹(g₂ + H₂₁θ)`.
    pub fn profile_lambda(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-solve_dense_vec(&self.h22, &(&self.g2 + &self.h21 * theta), "H22")?)
    }

    pub fn loss(&self, state: &ParameterState) -> f64 {
        let beta = state.stacked();
        self.stacked_g().dot(&beta) + 0.5 * beta.dot(&(self.stacked_h() * &beta))
    }

    /// Newton increment `β⁺ - β` assembled from the block inverse
    /// `[[F, -F H₁₂H₂₂⁻¹], [-H₂₂⁻¹H₂₁F, H₂₂⁻¹(I + H₂₁F H₁₂H₂₂⁻¹)]]`.
    pub fn block_newton_increment(&self, state: &ParameterState) -> Result<DVector<f64>> {
        let f = schur_f(self)?;
        let h22_inv = solve_dense(&self.h22, &DMatrix::identity(self.q(), self.q()), "H22")?;
        let g1 = &self.g1 + &self.h11 * &state.theta + &self.h12 * &state.lambda;
        let g2 = &self.g2 + &self.h21 * &state.theta + &self.h22 * &state.lambda;
        let a = &self.h12 * &h22_inv;
        let top = &f * &g1 - &f * &a * &g2;
        let eye = DMatrix::identity(self.q(), self.q());
        let bottom = -&h22_inv * &self.h21 * &f * &g1 + &h22_inv * (eye + &self.h21 * &f * &a) * &g2;
        let step = DVector::from_iterator(self.p() + self.q(), top.iter().chain(bottom.iter()).copied());
        Ok(-step)
    }
}

impl EstimatingSystem for QuadraticProblem {
    fn theta_dim(&self) -> usize {
        self.p()
    }
    fn lambda_dim(&self) -> usize {
        self.q()
    }
    fn psi(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        &self.g1 + &self.h11 * theta + &self.h12 * lambda
    }
    fn phi(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        &self.g2 + &self.h21 * theta + &self.h22 * lambda
    }
    fn jac_psi_theta(&self, _: &DVector<f64>, _: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.h11.clone())
    }
    fn jac_psi_lambda(&self, _: &DVector<f64>, _: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.h12.clone())
    }
    fn jac_phi_theta(&self, _: &DVector<f64>, _: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.h21.clone())
    }
    fn jac_phi_lambda(&self, _: &DVector<f64>, _: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.h22.clone())
    }
}

/// `F = (H₁₁ - H₁₂H₂₂⁻¹H₂₁)⁻¹`, the inverse Schur complement of `H₂₂`.
pub fn schur_f(qp: &QuadraticProblem) -> Result<DMatrix<f64>> {
    let x = solve_dense(&qp.h22, &qp.h21, "H22 (Schur complement)")?;
    let s = &qp.h11 - &qp.h12 * x;
    let p = qp.p();
    solve_dense(&s, &DMatrix::identity(p, p), "Schur complement")
}

/// Random problem with `H = Q D Qᵀ`, Q Haar-orthogonal and the eigenvalues
/// log-uniform on `[1, cond_max]`; `g` is standard normal.
pub fn random_quadratic(p: usize, q: usize, cond_max: f64, seed: u64) -> QuadraticProblem {
    assert!(p >= 1 && q >= 1, "both blocks must be non-empty");
    assert!(cond_max >= 1.0, "cond_max must be at least 1");
    let n = p + q;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let qr = z.qr();
    let r = qr.r();
    let mut basis = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            basis.column_mut(j).neg_mut();
        }
    }
    let log_c = cond_max.ln();
    let eig = DVector::from_fn(n, |_, _| (rng.random::<f64>() * log_c).exp());
    let mut h = &basis * DMatrix::from_diagonal(&eig) * basis.transpose();
    h = (&h + h.transpose()) * 0.5;
    let g = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
    QuadraticProblem::from_stacked(&g, &h, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy_as_quadratic(alpha: f64) -> QuadraticProblem {
        QuadraticProblem {
            g1: DVector::zeros(1),
            g2: DVector::zeros(1),
            h11: DMatrix::from_element(1, 1, 2.0),
            h12: DMatrix::from_element(1, 1, alpha),
            h21: DMatrix::from_element(1, 1, alpha),
            h22: DMatrix::from_element(1, 1, 2.0),
        }
    }

    #[test]
    fn schur_f_of_toy() {
        for alpha in [-1.9, -0.5, 0.0, 1.6] {
            let f = schur_f(&toy_as_quadratic(alpha)).unwrap();
            assert_abs_diff_eq!(f[(0, 0)], 2.0 / (4.0 - alpha * alpha), epsilon = 1e-14);
        }
    }

    #[test]
    fn decoupled_schur_is_h11_inverse() {
        let mut qp = random_quadratic(3, 4, 10.0, 5);
        qp.h12.fill(0.0);
        qp.h21.fill(0.0);
        let f = schur_f(&qp).unwrap();
        let inv = qp.h11.clone().try_inverse().unwrap();
        assert_abs_diff_eq!(f, inv, epsilon = 1e-12);
    }

    #[test]
    fn spherical_case() {
        let qp = random_quadratic(1, 1, 1.0, 3);
        assert_abs_diff_eq!(qp.stacked_h(), DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn generator_is_deterministic() {
        assert_eq!(random_quadratic(3, 7, 100.0, 42), random_quadratic(3, 7, 100.0, 42));
        assert_ne!(random_quadratic(3, 7, 100.0, 42), random_quadratic(3, 7, 100.0, 43));
    }

    #[test]
    fn generated_h_is_spd() {
        let qp = random_quadratic(5, 15, 1e3, 11);
        let h = qp.stacked_h();
        assert_abs_diff_eq!(h, h.transpose(), epsilon = 0.0);
        assert!(h.clone().cholesky().is_some());
        let eig = h.symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::MAX, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
        assert!(lo >= 1.0 - 1e-9 && hi <= 1e3 * (1.0 + 1e-9), "eigenvalues in [{lo}, {hi}]");
    }

    #[test]
    fn singular_h22_is_reported() {
        let mut qp = random_quadratic(2, 2, 10.0, 1);
        qp.h22.fill(0.0);
        assert!(schur_f(&qp).is_err());
    }
}
