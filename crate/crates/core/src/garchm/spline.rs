//! Clamped B-spline bases on uniform knots and least-squares fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ridge added to the diagonal of the normal equations.
pub const RIDGE_JITTER: f64 = 1e-10;

/// Interior knot count `⌈T^(3/20)⌉`.
pub fn knot_count(t: usize) -> usize {
    ((t as f64).powf(0.15)).ceil() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    degree: usize,
    /// Full clamped knot vector: each boundary repeated `degree + 1` times.
    knots: Vec<f64>,
    breakpoints: Vec<f64>,
}

impl BSplineBasis {
    /// `interior` equally spaced interior knots on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, interior: usize, degree: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::SplineFit(format!("degenerate range [{lo}, {hi}]")));
        }
        let segments = interior + 1;
        let breakpoints: Vec<f64> = (0..=segments)
            .map(|i| {
                if i == segments {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / segments as f64
                }
            })
            .collect();
        let mut knots = vec![lo; degree];
        knots.extend_from_slice(&breakpoints);
        knots.extend(std::iter::repeat_n(hi, degree));
        Ok(Self {
            degree,
            knots,
            breakpoints,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distinct knots `a = t_0 < … < t_{R+1} = b`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn lo(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn hi(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Index `i` of the knot span `[t_i, t_{i+1})` holding `x`; the right end
    /// of the range belongs to the last span.
    fn span(&self, x: f64) -> usize {
        let last = self.knots.len() - self.degree - 2;
        if x >= self.knots[last + 1] {
            return last;
        }
        let mut i = self.degree;
        while i < last && self.knots[i + 1] <= x {
            i += 1;
        }
        i
    }

    /// All basis functions of degree `degree` at x, by Cox–de Boor.
    fn values_of_degree(&self, x: f64, degree: usize) -> Vec<f64> {
        let t = &self.knots;
        let m = t.len();
        let mut n = vec![0.0; m - 1];
        n[self.span(x)] = 1.0;
        for d in 1..=degree {
            for i in 0..m - 1 - d {
                let left = if t[i + d] > t[i] {
                    (x - t[i]) / (t[i + d] - t[i]) * n[i]
                } else {
                    0.0
                };
                let right = if t[i + d + 1] > t[i + 1] {
                    (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1]) * n[i + 1]
                } else {
                    0.0
                };
                n[i] = left + right;
            }
        }
        n.truncate(m - 1 - degree);
        n
    }

    /// Basis values at x, which is clamped to `[lo, hi]`.
    pub fn values(&self, x: f64) -> Vec<f64> {
        self.values_of_degree(x.clamp(self.lo(), self.hi()), self.degree)
    }

    /// First derivatives of the basis functions at x (clamped to the range).
    pub fn derivatives(&self, x: f64) -> Vec<f64> {
        let k = self.degree;
        if k == 0 {
            return vec![0.0; self.len()];
        }
        let x = x.clamp(self.lo(), self.hi());
        let lower = self.values_of_degree(x, k - 1);
        let t = &self.knots;
        (0..self.len())
            .map(|i| {
                let a = if t[i + k] > t[i] { lower[i] / (t[i + k] - t[i]) } else { 0.0 };
                let b = if t[i + k + 1] > t[i + 1] {
                    lower[i + 1] / (t[i + k + 1] - t[i + 1])
                } else {
                    0.0
                };
                k as f64 * (a - b)
            })
            .collect()
    }
}

/// Fitted spline `λ̂(x) = Σ γ_i B_i(x)`. Outside the fitted range it is
/// continued linearly from the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineFit {
    pub basis: BSplineBasis,
    pub gamma: Vec<f64>,
}

impl SplineFit {
    pub fn knots(&self) -> &[f64] {
        self.basis.breakpoints()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.basis.lo() && x <= self.basis.hi()
    }

    fn inner_value(&self, x: f64) -> f64 {
        self.basis.values(x).iter().zip(&self.gamma).map(|(b, g)| b * g).sum()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.basis.derivatives(x).iter().zip(&self.gamma).map(|(b, g)| b * g).sum()
    }

    pub fn value(&self, x: f64) -> f64 {
        let xc = x.clamp(self.basis.lo(), self.basis.hi());
        let v = self.inner_value(xc);
        if xc == x {
            v
        } else {
            v + self.derivative(xc) * (x - xc)
        }
    }
}

/// Least-squares spline regression of `y` on `x` over `[min x, max x]`.
pub fn fit_spline(x: &[f64], y: &[f64], interior: usize, degree: usize) -> Result<SplineFit> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            context: "fit_spline",
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() <= interior + degree + 1 {
        return Err(Error::SplineFit(format!(
            "{} observations cannot determine {} coefficients",
            x.len(),
            interior + degree + 1
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::SplineFit("non-finite regression data".into()));
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let basis = BSplineBasis::uniform(lo, hi, interior, degree)?;
    let nb = basis.len();
    let mut gram = DMatrix::<f64>::zeros(nb, nb);
    let mut rhs = DVector::<f64>::zeros(nb);
    let mut mass = vec![0.0; nb];
    for (&xi, &yi) in x.iter().zip(y) {
        let b = basis.values(xi);
        for r in 0..nb {
            if b[r] == 0.0 {
                continue;
            }
            mass[r] += b[r];
            rhs[r] += b[r] * yi;
            for c in 0..nb {
                gram[(r, c)] += b[r] * b[c];
            }
        }
    }
    for i in 0..nb {
        gram[(i, i)] += RIDGE_JITTER;
    }
    // A basis function without data is zero at every observation; the jitter
    // pins its coefficient to 0 and leaves the fitted values untouched.
    let Some(chol) = gram.cholesky() else {
        let bp = basis.breakpoints();
        let spans: Vec<String> = (0..nb)
            .filter(|&i| mass[i] == 0.0)
            .map(|i| {
                let a = bp[i.saturating_sub(degree).min(bp.len() - 1)];
                let b = bp[(i + 1).min(bp.len() - 1)];
                format!("[{a:.6e}, {b:.6e}]")
            })
            .collect();
        return Err(Error::SplineFit(format!(
            "normal equations are not positive definite; empty knot intervals: {}",
            if spans.is_empty() { "none".to_string() } else { spans.join(", ") }
        )));
    };
    let gamma = chol.solve(&rhs);
    Ok(SplineFit {
        basis,
        gamma: gamma.iter().copied().collect(),
    })
}

/// Degree-1 (order-2) spline fit of `y` on `σ²`.
pub fn fit_lambda_spline(sigma2: &[f64], y: &[f64], interior: usize) -> Result<SplineFit> {
    fit_spline(sigma2, y, interior, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn knot_rule() {
        assert_eq!(knot_count(500), 3);
        assert_eq!(knot_count(1000), 3);
        assert_eq!(knot_count(100), 2);
    }

    #[test]
    fn partition_of_unity() {
        for degree in 0..=3 {
            let b = BSplineBasis::uniform(0.02, 0.3, 4, degree).unwrap();
            assert_eq!(b.len(), 4 + degree + 1);
            for k in 0..=200 {
                let x = 0.02 + 0.28 * k as f64 / 200.0;
                let s: f64 = b.values(x).iter().sum();
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn linear_basis_is_hat_functions() {
        let b = BSplineBasis::uniform(0.0, 4.0, 3, 1).unwrap();
        assert_eq!(b.breakpoints(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(b.values(1.0), vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.values(2.5), vec![0.0, 0.0, 0.5, 0.5, 0.0]);
        assert_eq!(b.values(4.0), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(b.derivatives(2.5), vec![0.0, 0.0, -1.0, 1.0, 0.0]);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = BSplineBasis::uniform(-1.0, 2.0, 3, 3).unwrap();
        let h = 1e-6;
        for &x in &[-0.9, -0.1, 0.4, 1.3, 1.95] {
            let d = b.derivatives(x);
            let (p, m) = (b.values(x + h), b.values(x - h));
            for i in 0..b.len() {
                assert_abs_diff_eq!(d[i], (p[i] - m[i]) / (2.0 * h), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn constant_response() {
        let x: Vec<f64> = (0..200).map(|i| 0.03 + 0.001 * i as f64).collect();
        let y = vec![0.7; x.len()];
        let fit = fit_lambda_spline(&x, &y, 3).unwrap();
        for g in &fit.gamma {
            assert_abs_diff_eq!(*g, 0.7, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(fit.value(0.1), 0.7, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.derivative(0.1), 0.0, epsilon = 1e-6);
    }

    #[test]
    fn linear_response_is_reproduced() {
        let x: Vec<f64> = (0..300).map(|i| 0.02 + 0.37 * ((i * 37 % 300) as f64 / 300.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 0.3).collect();
        let fit = fit_lambda_spline(&x, &y, 3).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_abs_diff_eq!(fit.value(*xi), *yi, epsilon = 1e-8);
        }
        // Linear continuation outside the range.
        assert_abs_diff_eq!(fit.value(1.0), 2.2, epsilon = 1e-7);
        assert_abs_diff_eq!(fit.derivative(0.2), 2.5, epsilon = 1e-6);
    }

    #[test]
    fn residuals_are_orthogonal_to_basis() {
        let x: Vec<f64> = (0..400).map(|i| (i as f64 * 0.61803).fract()).collect();
        let y: Vec<f64> = x.iter().map(|v| (7.0 * v).sin() + v * v).collect();
        let fit = fit_lambda_spline(&x, &y, 4).unwrap();
        let mut xtr = vec![0.0; fit.basis.len()];
        for (xi, yi) in x.iter().zip(&y) {
            let r = yi - fit.value(*xi);
            for (acc, b) in xtr.iter_mut().zip(fit.basis.values(*xi)) {
                *acc += b * r;
            }
        }
        for (v, g) in xtr.iter().zip(&fit.gamma) {
            // Normal equations with jitter: Xᵀr = jitter · γ.
            assert_abs_diff_eq!(*v, RIDGE_JITTER * g, epsilon = 1e-8);
        }
    }

    #[test]
    fn empty_interval_is_rescued_by_jitter() {
        // All mass at the two ends: interior hats see no data.
        let mut x = vec![0.0; 20];
        x.extend(vec![1.0; 20]);
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v).collect();
        let fit = fit_lambda_spline(&x, &y, 3).unwrap();
        assert_abs_diff_eq!(fit.value(0.0), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.value(1.0), 3.0, epsilon = 1e-8);
        for g in &fit.gamma[1..fit.gamma.len() - 1] {
            assert_abs_diff_eq!(*g, 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn non_finite_data_is_an_error() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let mut y = vec![1.0; 40];
        y[3] = f64::NAN;
        assert!(matches!(fit_lambda_spline(&x, &y, 3), Err(Error::SplineFit(_))));
    }

    #[test]
    fn too_few_points() {
        assert!(fit_lambda_spline(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0], 3).is_err());
    }
}
