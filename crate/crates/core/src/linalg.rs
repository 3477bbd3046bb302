//! Dense solves and central finite-difference Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a matrix is treated as singular.
pub const PIVOT_TOL: f64 = 1e-14;

/// Infinity (max absolute row sum) norm of a matrix.
pub fn matrix_inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `A X = B` by LU with partial pivoting.
///
/// Fails with [`Error::Singular`] when a pivot of the factorization falls
/// below `PIVOT_TOL * ‖A‖∞`.
pub fn solve_dense(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Dimension {
            context: "solve_dense (square)",
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if b.nrows() != a.nrows() {
        return Err(Error::Dimension {
            context: "solve_dense (rhs rows)",
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::singular(format!("{context} (non-finite entries)")));
    }
    let threshold = PIVOT_TOL * matrix_inf_norm(a);
    let lu = a.clone().lu();
    // U shares its diagonal with the packed LU storage.
    let n = a.nrows();
    let u = lu.u();
    for i in 0..n {
        if !(u[(i, i)].abs() > threshold) {
            return Err(Error::singular(context.to_string()));
        }
    }
    lu.solve(b).ok_or_else(|| Error::singular(context.to_string()))
}

pub fn solve_dense_vec(a: &DMatrix<f64>, b: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    let rhs = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let x = solve_dense(a, &rhs, context)?;
    Ok(DVector::from_column_slice(x.as_slice()))
}

/// Solves a diagonal system `diag(d) X = B` row by row.
pub fn solve_diagonal(d: &DVector<f64>, b: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let scale = d.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
    let threshold = PIVOT_TOL * scale;
    let mut x = b.clone();
    for (i, &di) in d.iter().enumerate() {
        if !(di.abs() > threshold) {
            return Err(Error::singular(format!("{context} (diagonal entry {i})")));
        }
        x.row_mut(i).unscale_mut(di);
    }
    Ok(x)
}

/// Central finite-difference Jacobian of `f` at `x`.
///
/// Column `j` is `(f(x + h_j e_j) - f(x - h_j e_j)) / (2 h_j)` with
/// `h_j = step * max(1, |x_j|)`.
pub fn fd_jacobian<F>(mut f: F, x: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut jac: Option<DMatrix<f64>> = None;
    let mut probe = x.clone();
    for j in 0..n {
        let h = step * x[j].abs().max(1.0);
        probe[j] = x[j] + h;
        let fp = f(&probe)?;
        probe[j] = x[j] - h;
        let fm = f(&probe)?;
        probe[j] = x[j];
        if fp.len() != fm.len() {
            return Err(Error::Dimension {
                context: "fd_jacobian",
                expected: fp.len(),
                got: fm.len(),
            });
        }
        let col = (fp - fm) / (2.0 * h);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                context: format!("fd_jacobian column {j}"),
                iterations: 0,
                last_finite: x.as_slice().to_vec(),
            });
        }
        let m = jac.get_or_insert_with(|| DMatrix::zeros(col.len(), n));
        m.set_column(j, &col);
    }
    Ok(jac.unwrap_or_else(|| DMatrix::zeros(0, 0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_solve_returns_rhs() {
        let a = DMatrix::<f64>::identity(4, 4);
        let b = DMatrix::from_row_slice(4, 2, &[1., 2., 3., 4., 5., 6., 7., 8.]);
        assert_eq!(solve_dense(&a, &b, "t").unwrap(), b);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.6, 1.6, 2.0]);
        let x = solve_dense_vec(&a, &DVector::zeros(2), "t").unwrap();
        assert_eq!(x, DVector::zeros(2));
    }

    #[test]
    fn well_conditioned_residual() {
        // Diagonally dominant 8x8 with deterministic off-diagonal pattern.
        let n = 8;
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                10.0 + i as f64
            } else {
                ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6
            }
        });
        let b = DMatrix::from_fn(n, 3, |i, j| (i as f64 - 3.5) * (j as f64 + 1.0));
        let x = solve_dense(&a, &b, "t").unwrap();
        let r = &a * &x - &b;
        let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(r.iter().all(|v| v.abs() <= 1e-10 * (1.0 + bnorm)));
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let err = solve_dense_vec(&a, &DVector::from_element(2, 1.0), "H22").unwrap_err();
        assert!(matches!(err, Error::Singular { ref context } if context == "H22"));
    }

    #[test]
    fn diagonal_solve_matches_dense() {
        let d = DVector::from_vec(vec![2.0, -0.5, 4.0]);
        let b = DMatrix::from_row_slice(3, 2, &[1., 2., 3., 4., 5., 6.]);
        let x = solve_diagonal(&d, &b, "t").unwrap();
        let xd = solve_dense(&DMatrix::from_diagonal(&d), &b, "t").unwrap();
        assert_abs_diff_eq!(x, xd, epsilon = 1e-15);
        assert!(solve_diagonal(&DVector::from_vec(vec![1.0, 0.0]), &DMatrix::zeros(2, 1), "t").is_err());
    }

    #[test]
    fn fd_linear_is_exact() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 3.0, 4.0, 0.25]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = DVector::from_vec(vec![0.3, -7.0]);
        let j = fd_jacobian(|v| Ok(&a * v + &b), &x, 1e-6).unwrap();
        assert_abs_diff_eq!(j, a, epsilon = 1e-8);
    }

    #[test]
    fn fd_toy_gradient() {
        let alpha = 1.6;
        let grad = |v: &DVector<f64>| {
            Ok(DVector::from_vec(vec![
                2.0 * v[0] + alpha * v[1],
                2.0 * v[1] + alpha * v[0],
            ]))
        };
        let j = fd_jacobian(grad, &DVector::from_vec(vec![1.0, 1.0]), 1e-6).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 1.6, 1.6, 2.0]);
        assert_abs_diff_eq!(j, expected, epsilon = 1e-8);
    }

    #[test]
    fn fd_square_at_three() {
        let j = fd_jacobian(
            |v| Ok(DVector::from_element(1, v[0] * v[0])),
            &DVector::from_element(1, 3.0),
            1e-4,
        )
        .unwrap();
        // h = 3e-4; central difference of x² is exact up to rounding.
        assert!((j[(0, 0)] - 6.0).abs() < 1e-7);
    }

    #[test]
    fn fd_propagates_nonfinite() {
        let r = fd_jacobian(
            |v| Ok(DVector::from_element(1, 1.0 / (v[0] - 1.0).max(0.0))),
            &DVector::from_element(1, 1.0),
            1e-6,
        );
        assert!(r.is_err());
    }
}
