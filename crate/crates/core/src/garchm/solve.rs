//! Implicit-profiling and backfitting updates for the GARCH-M model.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::spline::{fit_spline, knot_count, SplineFit};
use super::{neg_quasi_loglik, OMEGA_FLOOR, score_on_path, sigma_recursion, GarchTheta, ScoreEval};
use crate::error::{Error, Result};
use crate::linalg::{solve_dense_vec, vec_inf_norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GarchMethod {
    /// Newton step with the Hessian of the profiled score (λ̂ re-fitted at every θ).
    Ip,
    /// Newton step with λ̂ frozen at the current fit.
    Backfit,
}

impl GarchMethod {
    pub const ALL: [GarchMethod; 2] = [GarchMethod::Ip, GarchMethod::Backfit];

    pub fn short_name(self) -> &'static str {
        match self {
            GarchMethod::Ip => "ip",
            GarchMethod::Backfit => "backfit",
        }
    }
}

impl fmt::Display for GarchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for GarchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ip" | "implicit" | "implicit_profiling" => Ok(GarchMethod::Ip),
            "backfit" | "bf" | "backfitting" => Ok(GarchMethod::Backfit),
            other => Err(Error::Domain(format!("unknown GARCH-M method `{other}` (expected ip or backfit)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GarchSolveConfig {
    /// Threshold for both `‖Ψ‖∞ / T` and `‖θ⁺ − θ‖∞`.
    pub tol: f64,
    pub max_iter: usize,
    /// Finite-difference step for the 3×3 Hessians.
    pub fd_step: f64,
    pub degree: usize,
    /// Interior knots; `None` uses `⌈T^0.15⌉`.
    pub interior_knots: Option<usize>,
    pub max_halvings: usize,
}

impl Default for GarchSolveConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 1000,
            fd_step: 1e-5,
            degree: 2,
            interior_knots: None,
            max_halvings: 10,
        }
    }
}

impl GarchSolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.fd_step > 0.0) || self.max_iter == 0 {
            return Err(Error::Domain(
                "GARCH-M solver needs tol > 0, fd_step > 0 and max_iter ≥ 1".into(),
            ));
        }
        Ok(())
    }

    fn knots_for(&self, t_len: usize) -> usize {
        self.interior_knots.unwrap_or_else(|| knot_count(t_len))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarchTraceRecord {
    pub theta: GarchTheta,
    pub psi_norm: f64,
    pub step_norm: f64,
    pub halvings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarchSolveReport {
    pub method: GarchMethod,
    pub theta: GarchTheta,
    pub converged: bool,
    pub iterations: usize,
    /// `‖Ψ‖∞ / T` at the returned θ, ignoring components blocked by a bound.
    pub psi_norm: f64,
    /// σ² values that fell outside the fitted knot span, summed over all
    /// score evaluations at the iterates.
    pub extrapolation_warnings: usize,
    pub trace: Vec<GarchTraceRecord>,
    pub seconds: f64,
}

struct Problem<'a> {
    y: &'a [f64],
    interior: usize,
    degree: usize,
}

impl Problem<'_> {
    fn refit(&self, theta: GarchTheta) -> Result<(super::SigmaPath, SplineFit)> {
        let path = sigma_recursion(theta, self.y)?;
        let fit = fit_spline(&path.sigma2, self.y, self.interior, self.degree)?;
        Ok((path, fit))
    }

    fn frozen(&self, theta: GarchTheta, fit: &SplineFit) -> Result<ScoreEval> {
        let path = sigma_recursion(theta, self.y)?;
        Ok(score_on_path(&path, self.y, fit))
    }

    fn profiled(&self, theta: GarchTheta) -> Result<ScoreEval> {
        let (path, fit) = self.refit(theta)?;
        Ok(score_on_path(&path, self.y, &fit))
    }

    /// Central-difference Jacobian of a score map. Perturbations that leave
    /// the stationarity region fall back to one-sided differences.
    fn hessian<F>(&self, theta: GarchTheta, base: &[f64; 3], step: f64, mut score: F) -> Result<DMatrix<f64>>
    where
        F: FnMut(GarchTheta) -> Result<ScoreEval>,
    {
        let x = theta.to_array();
        let mut h = DMatrix::zeros(3, 3);
        for j in 0..3 {
            let hj = step * x[j].abs().max(1e-2);
            let shifted = |d: f64| {
                let mut v = x;
                v[j] += d;
                GarchTheta::from_array(v)
            };
            let (plus, minus) = (shifted(hj), shifted(-hj));
            let col = match (plus.is_stationary(), minus.is_stationary()) {
                (true, true) => {
                    let (a, b) = (score(plus)?.psi, score(minus)?.psi);
                    [0, 1, 2].map(|i| (a[i] - b[i]) / (2.0 * hj))
                }
                (true, false) => {
                    let a = score(plus)?.psi;
                    [0, 1, 2].map(|i| (a[i] - base[i]) / hj)
                }
                (false, true) => {
                    let b = score(minus)?.psi;
                    [0, 1, 2].map(|i| (base[i] - b[i]) / hj)
                }
                (false, false) => {
                    return Err(Error::Domain(format!("cannot difference the score at θ = {theta:?}")));
                }
            };
            for i in 0..3 {
                h[(i, j)] = col[i];
            }
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                context: "GARCH-M Hessian".into(),
                iterations: 0,
                last_finite: x.to_vec(),
            });
        }
        Ok(h)
    }
}

/// Profiled score `θ ↦ Ψ(θ, λ̂(θ))` with λ̂ re-fitted on the σ² range of θ.
pub fn profiled_score(theta: GarchTheta, y: &[f64], interior: usize, degree: usize) -> Result<ScoreEval> {
    Problem { y, interior, degree }.profiled(theta)
}

/// Iterates from `init` until `‖Ψ‖∞/T ≤ tol` and `‖Δθ‖∞ ≤ tol`.
///
/// Every iteration re-fits λ̂ at the current θ and takes a Newton step on θ,
/// projected onto `{ω ≥ ω_min, α ≥ 0, β ≥ 0, α + β ≤ 1 − ε}` and halved
/// until a merit function decreases: the norm of the profiled score for
/// IP, the frozen-λ̂ quasi-likelihood for backfitting. Score components
/// that push against an active bound do not count toward `‖Ψ‖∞`.
pub fn garchm_solve(y: &[f64], method: GarchMethod, init: GarchTheta, cfg: &GarchSolveConfig) -> Result<GarchSolveReport> {
    cfg.validate()?;
    init.check()?;
    let start = Instant::now();
    let t_len = y.len() as f64;
    let problem = Problem {
        y,
        interior: cfg.knots_for(y.len()),
        degree: cfg.degree,
    };
    let mut theta = init;
    let mut trace = Vec::new();
    let mut warnings = 0;
    let mut converged = false;
    let mut iterations = 0;
    let mut psi_norm;
    loop {
        let (path, fit) = problem.refit(theta)?;
        let eval = score_on_path(&path, y, &fit);
        warnings += eval.extrapolated;
        psi_norm = projected_psi(theta, &eval.psi).iter().fold(0.0f64, |m, v| m.max(v.abs())) / t_len;
        if !psi_norm.is_finite() {
            return Err(Error::Divergence {
                context: "GARCH-M score".into(),
                iterations,
                last_finite: theta.to_array().to_vec(),
            });
        }
        let last_step = trace.last().map_or(f64::INFINITY, |r: &GarchTraceRecord| r.step_norm);
        if psi_norm <= cfg.tol && last_step <= cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        let psi = DVector::from_column_slice(&eval.psi);
        let frozen_step = || -> Result<(GarchTheta, usize)> {
            let h = problem.hessian(theta, &eval.psi, cfg.fd_step, |t| problem.frozen(t, &fit))?;
            let delta = solve_dense_vec(&positive_shift(h), &psi, "GARCH-M frozen Hessian")?;
            let merit = |t: GarchTheta| neg_quasi_loglik(t, y, &fit);
            let small = vec_inf_norm(&delta) <= SMALL_STEP;
            damped_step(theta, &delta, cfg.max_halvings, merit(theta)?, small, merit)
        };
        let (next, halvings) = match method {
            GarchMethod::Ip => {
                // An indefinite profiled Hessian gives no reliable direction,
                // so IP falls back to the frozen-λ̂ step for that iteration.
                let h = problem.hessian(theta, &eval.psi, cfg.fd_step, |t| problem.profiled(t))?;
                if is_positive_definite(&h) {
                    let delta = solve_dense_vec(&h, &psi, "GARCH-M profiled Hessian")?;
                    let merit = |t: GarchTheta| Ok(l2(&problem.profiled(t)?.psi));
                    let small = vec_inf_norm(&delta) <= SMALL_STEP;
                    damped_step(theta, &delta, cfg.max_halvings, l2(&eval.psi), small, merit)?
                } else {
                    frozen_step()?
                }
            }
            GarchMethod::Backfit => frozen_step()?,
        };
        let step_norm = vec_inf_norm(&DVector::from_iterator(
            3,
            next.to_array().iter().zip(theta.to_array()).map(|(a, b)| a - b),
        ));
        iterations += 1;
        trace.push(GarchTraceRecord {
            theta: next,
            psi_norm,
            step_norm,
            halvings,
        });
        theta = next;
    }
    Ok(GarchSolveReport {
        method,
        theta,
        converged,
        iterations,
        psi_norm,
        extrapolation_warnings: warnings,
        trace,
        seconds: start.elapsed().as_secs_f64(),
    })
}

const SMALL_STEP: f64 = 1e-4;

/// Per-iteration limit on the change of α and of β.
const MAX_SHAPE_STEP: f64 = 0.1;

fn l2(v: &[f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn is_positive_definite(h: &DMatrix<f64>) -> bool {
    let sym = (h + h.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    eig.min() > 1e-6 * eig.max().abs()
}

/// Adds a multiple of the identity when the symmetric part of `h` is not
/// safely positive definite, so the Newton direction is a descent direction.
fn positive_shift(mut h: DMatrix<f64>) -> DMatrix<f64> {
    let sym = (&h + h.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max().abs());
    let floor = 1e-6 * hi;
    if lo < floor {
        for i in 0..h.nrows() {
            h[(i, i)] += floor - lo;
        }
    }
    h
}

/// Backtracks along `−delta` by halving, projecting every candidate onto
/// the feasible set, until `merit` decreases. The first trial is already
/// shortened by [`step_cap`]. When no halving lowers the merit the longest
/// trial with a finite merit is taken, so the iteration still moves.
fn damped_step<M>(
    theta: GarchTheta,
    delta: &DVector<f64>,
    max_halvings: usize,
    current: f64,
    accept_small: bool,
    mut merit: M,
) -> Result<(GarchTheta, usize)>
where
    M: FnMut(GarchTheta) -> Result<f64>,
{
    let x = theta.to_array();
    let mut scale = step_cap(x, delta);
    let mut fallback = None;
    for halvings in 0..=max_halvings {
        let cand = GarchTheta::from_array([0, 1, 2].map(|i| x[i] - scale * delta[i])).project();
        match merit(cand) {
            Ok(m) if m.is_finite() => {
                if accept_small || m < current {
                    return Ok((cand, halvings));
                }
                if fallback.is_none() {
                    fallback = Some((cand, halvings));
                }
            }
            _ => {}
        }
        scale *= 0.5;
    }
    fallback.ok_or_else(|| {
        Error::StepHalving(format!("no step from θ = {theta:?} gave a finite merit after {max_halvings} halvings"))
    })
}

/// Largest multiple (at most 1) of the step that moves ω by no more than
/// half its value and α, β by no more than [`MAX_SHAPE_STEP`].
fn step_cap(x: [f64; 3], delta: &DVector<f64>) -> f64 {
    let limits = [0.5 * x[0], MAX_SHAPE_STEP, MAX_SHAPE_STEP];
    (0..3).fold(1.0f64, |s, i| {
        let d = delta[i].abs();
        if d > limits[i] {
            s.min(limits[i] / d)
        } else {
            s
        }
    })
}

/// Score with the components that push against an active bound removed.
fn projected_psi(theta: GarchTheta, psi: &[f64; 3]) -> [f64; 3] {
    let at_bound = [
        theta.omega <= OMEGA_FLOOR,
        theta.alpha <= 0.0,
        theta.beta <= 0.0,
    ];
    [0, 1, 2].map(|j| if at_bound[j] && psi[j] > 0.0 { 0.0 } else { psi[j] })
}
