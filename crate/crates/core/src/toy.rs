//! Coupled quadratic loss `L(x, y) = x² + y² + αxy` with `|α| < 2`.
//!
//! `x` plays θ and `y` plays λ. The step-count experiment starts every
//! method from points on a level set of L and averages iteration counts.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::solver::{run_solver, EstimatingSystem, InitLambdaMode, LambdaStructure, Method, ParameterState, SolverConfig};

/// Tolerance used for the step-count comparison.
pub const TOY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyProblem {
    alpha: f64,
}

impl ToyProblem {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.abs() < 2.0) {
            return Err(Error::Domain(format!("toy problem needs |α| < 2, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn loss(&self, x: f64, y: f64) -> f64 {
        x * x + y * y + self.alpha * x * y
    }
}

pub fn toy_system(alpha: f64) -> Result<ToyProblem> {
    ToyProblem::new(alpha)
}

impl EstimatingSystem for ToyProblem {
    fn theta_dim(&self) -> usize {
        1
    }
    fn lambda_dim(&self) -> usize {
        1
    }
    fn psi(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, 2.0 * theta[0] + self.alpha * lambda[0])
    }
    fn phi(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, 2.0 * lambda[0] + self.alpha * theta[0])
    }
    fn jac_psi_theta(&self, _: &DVector<f64>, _: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, 2.0))
    }
    fn jac_psi_lambda(&self, _: &DVector<f64>, _: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, self.alpha))
    }
    fn jac_phi_theta(&self, _: &DVector<f64>, _: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, self.alpha))
    }
    fn jac_phi_lambda(&self, _: &DVector<f64>, _: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, 2.0))
    }
    fn jac_phi_lambda_diag(&self, _: &DVector<f64>, _: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_element(1, 2.0))
    }
    fn lambda_structure(&self) -> LambdaStructure {
        LambdaStructure::Diagonal
    }
}

/// Starting point on the level set `L = C (1 - α²/4) / (2 - α²/2)` at angle γ.
pub fn toy_initial_point(alpha: f64, c: f64, gamma: f64) -> (f64, f64) {
    let scale = 1.0 / (2.0 - alpha * alpha / 2.0).sqrt();
    let a = (c * (1.0 - alpha / 2.0)).sqrt() * gamma.cos();
    let b = (c * (1.0 + alpha / 2.0)).sqrt() * gamma.sin();
    (scale * (a + b), scale * (a - b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyInitGrid {
    pub c_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
}

impl Default for ToyInitGrid {
    /// `C = k²` for `k = 1..=10` and `γ = 2π·{0.1, …, 1.0}`.
    fn default() -> Self {
        Self {
            c_values: (1..=10).map(|k| (k * k) as f64).collect(),
            gamma_values: Self::gammas(),
        }
    }
}

impl ToyInitGrid {
    pub fn gammas() -> Vec<f64> {
        (1..=10).map(|k| 2.0 * PI * k as f64 / 10.0).collect()
    }

    pub fn with_c(c_values: Vec<f64>) -> Self {
        Self {
            c_values,
            gamma_values: Self::gammas(),
        }
    }

    pub fn len(&self) -> usize {
        self.c_values.len() * self.gamma_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Solver configuration for the toy runs: both coordinates supplied.
pub fn toy_config(method: Method, tol: f64) -> SolverConfig {
    SolverConfig {
        method,
        tol,
        init_lambda_mode: InitLambdaMode::Given,
        ..SolverConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyStepRow {
    pub method: Method,
    pub alpha: f64,
    pub c: f64,
    pub mean_steps: f64,
    /// Largest distance of any limit point from the optimum (0, 0).
    pub max_limit_error: f64,
}

/// Mean iteration counts per `(method, α, C)` cell over the γ grid.
pub fn toy_step_experiment(alphas: &[f64], c_values: &[f64], tol: f64, methods: &[Method]) -> Result<Vec<ToyStepRow>> {
    if alphas.is_empty() || c_values.is_empty() || methods.is_empty() {
        return Err(Error::Domain("toy experiment grids must be non-empty".into()));
    }
    let gammas = ToyInitGrid::gammas();
    let cells: Vec<(Method, f64, f64)> = methods
        .iter()
        .flat_map(|&m| alphas.iter().flat_map(move |&a| c_values.iter().map(move |&c| (m, a, c))))
        .collect();
    cells
        .par_iter()
        .map(|&(method, alpha, c)| {
            let sys = ToyProblem::new(alpha)?;
            let cfg = toy_config(method, tol);
            let mut total = 0usize;
            let mut worst = 0.0f64;
            for &g in &gammas {
                let (x0, y0) = toy_initial_point(alpha, c, g);
                let report = run_solver(&sys, &ParameterState::from_slices(&[x0], &[y0]), &cfg)?;
                if !report.converged {
                    return Err(Error::Divergence {
                        context: format!("toy {method} α={alpha} C={c}"),
                        iterations: report.iterations,
                        last_finite: report.final_state.stacked().as_slice().to_vec(),
                    });
                }
                total += report.iterations;
                let s = &report.final_state;
                worst = worst.max(s.theta[0].abs()).max(s.lambda[0].abs());
            }
            Ok(ToyStepRow {
                method,
                alpha,
                c,
                mean_steps: total as f64 / gammas.len() as f64,
                max_limit_error: worst,
            })
        })
        .collect()
}

/// Convergence path `(step, x, y)` from one starting point; step 0 is the start.
pub fn toy_path(alpha: f64, start: (f64, f64), method: Method, tol: f64) -> Result<Vec<(usize, f64, f64)>> {
    let sys = ToyProblem::new(alpha)?;
    let report = run_solver(&sys, &ParameterState::from_slices(&[start.0], &[start.1]), &toy_config(method, tol))?;
    let mut path = vec![(0, start.0, start.1)];
    path.extend(
        report
            .trace
            .iter()
            .enumerate()
            .map(|(i, r)| (i + 1, r.theta[0], r.lambda[0])),
    );
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn st(x: f64, y: f64) -> ParameterState {
        ParameterState::from_slices(&[x], &[y])
    }

    #[test]
    fn domain_is_open_interval() {
        assert!(ToyProblem::new(2.0).is_err());
        assert!(ToyProblem::new(-2.5).is_err());
        assert!(ToyProblem::new(f64::NAN).is_err());
        assert!(ToyProblem::new(1.99).is_ok());
    }

    #[test]
    fn evaluations() {
        let t = ToyProblem::new(0.0).unwrap();
        let s = st(3.0, 5.0);
        assert_eq!(t.psi(&s.theta, &s.lambda)[0], 6.0);
        assert_eq!(t.phi(&s.theta, &s.lambda)[0], 10.0);
        let t = ToyProblem::new(1.6).unwrap();
        let s = st(1.0, 1.0);
        assert_abs_diff_eq!(t.psi(&s.theta, &s.lambda)[0], 3.6, epsilon = 1e-15);
        assert_abs_diff_eq!(t.phi(&s.theta, &s.lambda)[0], 3.6, epsilon = 1e-15);
        let z = st(0.0, 0.0);
        assert_eq!(t.psi(&z.theta, &z.lambda)[0], 0.0);
        assert_eq!(t.phi(&z.theta, &z.lambda)[0], 0.0);
    }

    #[test]
    fn initial_point_formula() {
        let (x, y) = toy_initial_point(0.0, 1.0, 0.0);
        let r = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(x, r, epsilon = 1e-15);
        assert_abs_diff_eq!(y, r, epsilon = 1e-15);
    }

    #[test]
    fn antipodal_angles() {
        for &(a, c, g) in &[(1.6, 4.0, 0.3), (-0.7, 9.0, 2.0), (0.0, 1.0, 1.0)] {
            let (x1, y1) = toy_initial_point(a, c, g);
            let (x2, y2) = toy_initial_point(a, c, g + PI);
            assert_abs_diff_eq!(x1, -x2, epsilon = 1e-12);
            assert_abs_diff_eq!(y1, -y2, epsilon = 1e-12);
        }
    }

    #[test]
    fn initial_points_share_a_level_set() {
        for alpha in [0.0, 0.8, 1.6, 1.8] {
            for k in 1..=10 {
                let c = (k * k) as f64;
                let toy = ToyProblem::new(alpha).unwrap();
                let levels: Vec<f64> = ToyInitGrid::gammas()
                    .iter()
                    .map(|&g| {
                        let (x, y) = toy_initial_point(alpha, c, g);
                        toy.loss(x, y)
                    })
                    .collect();
                for l in &levels {
                    assert!((l - levels[0]).abs() <= 1e-10 * (1.0 + levels[0]), "α={alpha} C={c}");
                }
            }
        }
    }

    #[test]
    fn grid_shape() {
        let g = ToyInitGrid::default();
        assert_eq!(g.gamma_values.len(), 10);
        assert_eq!(g.len(), 100);
        assert_eq!(g.c_values[9], 100.0);
    }
}
