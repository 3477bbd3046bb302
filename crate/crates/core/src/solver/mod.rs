//! Solver engine for two-block estimating systems `Ψ(θ, λ) = 0`, `Φ(θ, λ) = 0`.
//!
//! Three methods are available:
//!
//! * implicit profiling: Newton on λ with `∂Φ/∂λ`, then a θ step using the
//!   profiled Hessian `∂Ψ/∂θ + (∂Ψ/∂λ) dλ/dθ`;
//! * Newton-Raphson on the stacked vector `β = (θ, λ)`;
//! * naive iteration: alternating block Newton steps that ignore the
//!   cross-blocks.

mod run;
mod steps;
mod system;

pub use run::{run_solver, SolveReport, TraceRecord};
pub use steps::Solver;
pub use system::{EstimatingSystem, Jacobians, LambdaStructure};

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Split parameter pair; the stacked vector is always `(θ, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub theta: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl ParameterState {
    pub fn new(theta: DVector<f64>, lambda: DVector<f64>) -> Self {
        Self { theta, lambda }
    }

    pub fn from_slices(theta: &[f64], lambda: &[f64]) -> Self {
        Self::new(
            DVector::from_column_slice(theta),
            DVector::from_column_slice(lambda),
        )
    }

    pub fn stacked(&self) -> DVector<f64> {
        let p = self.theta.len();
        DVector::from_fn(p + self.lambda.len(), |i, _| {
            if i < p {
                self.theta[i]
            } else {
                self.lambda[i - p]
            }
        })
    }

    pub fn from_stacked(beta: &DVector<f64>, p: usize) -> Self {
        Self::from_slices(&beta.as_slice()[..p], &beta.as_slice()[p..])
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(self.lambda.iter()).all(|v| v.is_finite())
    }

    pub(crate) fn validate(&self, p: usize, q: usize) -> Result<()> {
        if self.theta.len() != p {
            return Err(Error::Dimension {
                context: "theta",
                expected: p,
                got: self.theta.len(),
            });
        }
        if self.lambda.len() != q {
            return Err(Error::Dimension {
                context: "lambda",
                expected: q,
                got: self.lambda.len(),
            });
        }
        if p == 0 || q == 0 {
            return Err(Error::Domain("both parameter blocks must be non-empty".into()));
        }
        if !self.is_finite() {
            return Err(Error::Domain("initial state has non-finite entries".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ip", alias = "implicit_profiling")]
    ImplicitProfiling,
    #[serde(rename = "nr", alias = "newton_raphson")]
    NewtonRaphson,
    #[serde(rename = "naive", alias = "naive_iteration")]
    NaiveIteration,
}

impl Method {
    pub const ALL: [Method; 3] = [
        Method::ImplicitProfiling,
        Method::NaiveIteration,
        Method::NewtonRaphson,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Method::ImplicitProfiling => "ip",
            Method::NewtonRaphson => "nr",
            Method::NaiveIteration => "naive",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::ImplicitProfiling => "Implicit Profiling",
            Method::NewtonRaphson => "Newton-Raphson",
            Method::NaiveIteration => "Naive Iteration",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ip" | "implicit_profiling" | "implicit-profiling" => Ok(Method::ImplicitProfiling),
            "nr" | "newton" | "newton_raphson" | "newton-raphson" => Ok(Method::NewtonRaphson),
            "naive" | "naive_iteration" | "naive-iteration" => Ok(Method::NaiveIteration),
            other => Err(Error::Domain(format!("unknown method `{other}`"))),
        }
    }
}

/// How λ⁽⁰⁾ is obtained before the main loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitLambdaMode {
    /// Solve `Φ(θ⁽⁰⁾, λ) = 0` by Newton iteration in λ.
    SolvePhi,
    /// Use the λ supplied with the initial state.
    Given,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    /// Applied to the infinity norms of both Ψ and Φ.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative step for central finite-difference Jacobians.
    pub fd_step: f64,
    pub init_lambda_mode: InitLambdaMode,
    pub init_lambda_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::ImplicitProfiling,
            tol: 1e-8,
            max_iter: 200,
            fd_step: 1e-6,
            init_lambda_mode: InitLambdaMode::SolvePhi,
            init_lambda_max_iter: 50,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Domain("max_iter must be at least 1".into()));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::Domain(format!("fd_step must be positive, got {}", self.fd_step)));
        }
        if self.init_lambda_max_iter == 0 {
            return Err(Error::Domain("init_lambda_max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacking_order_is_theta_then_lambda() {
        let s = ParameterState::from_slices(&[1.0, 2.0], &[3.0]);
        assert_eq!(s.stacked().as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(ParameterState::from_stacked(&s.stacked(), 2), s);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.short_name().parse::<Method>().unwrap(), m);
        }
        assert!("bfgs".parse::<Method>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            max_iter: 0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
