//! Semiparametric GARCH-in-mean model
//!
//! ```text
//! y_t  = λ(σ_t²) + noise_t
//! σ_t² = ω + α y_{t−1}² + β σ_{t−1}²
//! ```
//!
//! λ is profiled out by a least-squares B-spline fit of `y_t` on `σ_t²(θ)`,
//! so `λ̂(θ)` is explicit and `θ = (ω, α, β)` is estimated from the
//! quasi-score `Ψ = Ψ₁ − Ψ₂`.

mod solve;
pub mod spline;

pub use solve::{garchm_solve, profiled_score, GarchMethod, GarchSolveConfig, GarchSolveReport, GarchTraceRecord};
pub use spline::{fit_lambda_spline, knot_count, BSplineBasis, SplineFit};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest ω the estimators may reach.
pub const OMEGA_FLOOR: f64 = 1e-8;

/// Largest α + β the estimators may reach.
pub const PERSISTENCE_CAP: f64 = 1.0 - 1e-6;

/// Simulated σ² above this is treated as an explosive path.
pub const EXPLOSION_BOUND: f64 = 1e6;

/// Simulation burn-in discarded before the retained sample.
pub const DEFAULT_BURN_IN: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchTheta {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GarchTheta {
    pub fn new(omega: f64, alpha: f64, beta: f64) -> Self {
        Self { omega, alpha, beta }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.omega, self.alpha, self.beta]
    }

    /// `ω > 0`, `α, β ≥ 0`, `α + β < 1`, all finite.
    pub fn is_stationary(&self) -> bool {
        self.omega.is_finite()
            && self.alpha.is_finite()
            && self.beta.is_finite()
            && self.omega > 0.0
            && self.alpha >= 0.0
            && self.beta >= 0.0
            && self.alpha + self.beta < 1.0
    }

    /// Nearest point of `{ω ≥ ω_min, α ≥ 0, β ≥ 0, α + β ≤ 1 − ε}`: bounds
    /// are clipped and the excess over the persistence cap is removed
    /// equally from α and β.
    pub fn project(self) -> Self {
        let omega = self.omega.max(OMEGA_FLOOR);
        let (mut a, mut b) = (self.alpha.max(0.0), self.beta.max(0.0));
        let excess = a + b - PERSISTENCE_CAP;
        if excess > 0.0 {
            a -= excess / 2.0;
            b -= excess / 2.0;
            if a < 0.0 {
                b = PERSISTENCE_CAP;
                a = 0.0;
            } else if b < 0.0 {
                a = PERSISTENCE_CAP;
                b = 0.0;
            }
        }
        Self::new(omega, a, b)
    }

    pub fn check(&self) -> Result<()> {
        if self.is_stationary() {
            Ok(())
        } else {
            Err(Error::Domain(format!("θ = {self:?} is outside the stationarity region")))
        }
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.alpha - self.beta)
    }

    /// Parameters of the two simulation designs.
    pub fn design(setup: Setup) -> Self {
        match setup {
            Setup::A => Self::new(0.01, 0.1, 0.68),
            Setup::B => Self::new(0.01, 0.1, 0.80),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setup {
    A,
    B,
}

impl Setup {
    /// Mean function `λ(σ²)` of the design.
    pub fn mean(self, s2: f64) -> f64 {
        match self {
            Setup::A => s2 + 0.5 * (10.0 * s2).sin(),
            Setup::B => 0.5 * s2 + 0.1 * (0.5 + 20.0 * s2).sin(),
        }
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setup::A => "A",
            Setup::B => "B",
        })
    }
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Setup::A),
            "B" | "b" => Ok(Setup::B),
            other => Err(Error::Domain(format!("unknown setup `{other}` (expected A or B)"))),
        }
    }
}

/// Scale of the innovation added to the mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    /// `noise_t = s · ε_t` with a fixed scale `s`.
    Constant(f64),
    /// `noise_t = σ_t ε_t`, so the conditional variance of `y_t` is `σ_t²`.
    #[default]
    Conditional,
}

impl FromStr for Noise {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("conditional") || s.eq_ignore_ascii_case("sigma_t") {
            return Ok(Noise::Conditional);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Noise::Constant(v)),
            _ => Err(Error::Domain(format!("noise must be `conditional` or a positive scale, got `{s}`"))),
        }
    }
}

impl fmt::Display for Noise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Noise::Constant(v) => write!(f, "{v}"),
            Noise::Conditional => f.write_str("conditional"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarchSeries {
    pub y: Vec<f64>,
    /// Conditional variances used by the simulator (kept for diagnostics).
    pub sigma2: Vec<f64>,
}

impl GarchSeries {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Simulates `t_len + burn_in` points from σ₁² = ω/(1−α−β) and keeps the
/// last `t_len`.
pub fn generate_garchm(
    setup: Setup,
    t_len: usize,
    theta: GarchTheta,
    noise: Noise,
    burn_in: usize,
    seed: u64,
) -> Result<GarchSeries> {
    theta.check()?;
    if t_len < 50 {
        return Err(Error::Domain(format!("series length must be at least 50, got {t_len}")));
    }
    let total = t_len + burn_in;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Vec::with_capacity(total);
    let mut s2 = Vec::with_capacity(total);
    let mut prev_s2 = theta.unconditional_variance();
    let mut prev_y = 0.0;
    for t in 0..total {
        let cur = if t == 0 {
            prev_s2
        } else {
            theta.omega + theta.alpha * prev_y * prev_y + theta.beta * prev_s2
        };
        let eps: f64 = StandardNormal.sample(&mut rng);
        let scale = match noise {
            Noise::Constant(v) => v,
            Noise::Conditional => cur.sqrt(),
        };
        let yt = setup.mean(cur) + scale * eps;
        if !yt.is_finite() || !(cur <= EXPLOSION_BOUND) {
            return Err(Error::Domain(format!(
                "simulated path exploded at t = {t} (σ² = {cur:e}); the mean feeds σ² back quadratically"
            )));
        }
        y.push(yt);
        s2.push(cur);
        prev_s2 = cur;
        prev_y = yt;
    }
    Ok(GarchSeries {
        y: y.split_off(burn_in),
        sigma2: s2.split_off(burn_in),
    })
}

/// Filtered variances and their sensitivities `∂σ_t²/∂(ω, α, β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPath {
    pub sigma2: Vec<f64>,
    pub sens: Vec<[f64; 3]>,
}

/// Forward recursion from σ₁² = ω/(1−α−β), differentiated alongside.
pub fn sigma_recursion(theta: GarchTheta, y: &[f64]) -> Result<SigmaPath> {
    theta.check()?;
    let GarchTheta { omega, alpha, beta } = theta;
    let n = y.len();
    let mut sigma2 = Vec::with_capacity(n);
    let mut sens = Vec::with_capacity(n);
    if n == 0 {
        return Ok(SigmaPath { sigma2, sens });
    }
    let denom = 1.0 - alpha - beta;
    let s1 = omega / denom;
    let d_ab = omega / (denom * denom);
    sigma2.push(s1);
    sens.push([1.0 / denom, d_ab, d_ab]);
    for t in 1..n {
        let (ps, pd) = (sigma2[t - 1], sens[t - 1]);
        let y2 = y[t - 1] * y[t - 1];
        let s = omega + alpha * y2 + beta * ps;
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Domain(format!("σ² at t = {t} is {s}; recursion lost positivity")));
        }
        sigma2.push(s);
        sens.push([1.0 + beta * pd[0], y2 + beta * pd[1], ps + beta * pd[2]]);
    }
    Ok(SigmaPath { sigma2, sens })
}

/// Score evaluation together with the number of σ² values that fell
/// outside the spline's knot span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreEval {
    pub psi: [f64; 3],
    pub extrapolated: usize,
}

/// Quasi-score `Ψ₁ − Ψ₂` with
/// `Ψ₁ = ½ Σ (1/σ² − ε̃²/σ⁴) ∂σ²/∂θ` and `Ψ₂ = Σ (ε̃/σ²) λ̂′(σ²) ∂σ²/∂θ`,
/// where `ε̃_t = y_t − λ̂(σ_t²)`. This is the gradient of the negative
/// quasi-log-likelihood with λ̂ held fixed.
pub fn garchm_score(theta: GarchTheta, y: &[f64], fit: &SplineFit) -> Result<ScoreEval> {
    let path = sigma_recursion(theta, y)?;
    Ok(score_on_path(&path, y, fit))
}

pub(crate) fn score_on_path(path: &SigmaPath, y: &[f64], fit: &SplineFit) -> ScoreEval {
    let mut psi = [0.0; 3];
    let mut extrapolated = 0;
    for ((&s2, ds), &yt) in path.sigma2.iter().zip(&path.sens).zip(y) {
        if !fit.contains(s2) {
            extrapolated += 1;
        }
        let eps = yt - fit.value(s2);
        let w1 = 0.5 * (1.0 / s2 - eps * eps / (s2 * s2));
        let w2 = eps / s2 * fit.derivative(s2);
        for k in 0..3 {
            psi[k] += (w1 - w2) * ds[k];
        }
    }
    ScoreEval { psi, extrapolated }
}

/// Negative quasi-log-likelihood `½ Σ ln σ_t² + ½ Σ (y_t − λ̂(σ_t²))² / σ_t²`.
pub fn neg_quasi_loglik(theta: GarchTheta, y: &[f64], fit: &SplineFit) -> Result<f64> {
    let path = sigma_recursion(theta, y)?;
    Ok(path
        .sigma2
        .iter()
        .zip(y)
        .map(|(&s2, &yt)| {
            let e = yt - fit.value(s2);
            0.5 * (s2.ln() + e * e / s2)
        })
        .sum())
}
