//! Implicit profiling for semiparametric estimating equations with bundled
//! parameters, with Newton-Raphson and naive-iteration baselines and three
//! model instantiations (a coupled quadratic toy, a kernel-smoothed
//! transformation model, and a spline-profiled GARCH-in-mean model).

pub mod error;
pub mod experiment;
pub mod garchm;
pub mod linalg;
pub mod metrics;
pub mod quadratic;
pub mod solver;
pub mod toy;
pub mod transform;

pub use error::{Error, Result};
pub use solver::{
    run_solver, EstimatingSystem, InitLambdaMode, LambdaStructure, Method, ParameterState, SolveReport,
    Solver, SolverConfig,
};
