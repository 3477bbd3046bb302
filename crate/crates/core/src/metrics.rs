//! Monte Carlo error summaries over replicated estimates.
//!
//! With `θ̄ = B⁻¹ Σ θ̂_b` the summaries per coordinate are
//! `bias = θ − θ̄`, `se = {B⁻¹ Σ (θ̂_b − θ̄)²}^½`, `mae = B⁻¹ Σ |θ̂_b − θ|` and
//! `rmse = {B⁻¹ Σ (θ̂_b − θ)²}^½`, so that `rmse² = bias² + se²` exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordMetrics {
    pub bias: f64,
    pub se: f64,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub coords: Vec<CoordMetrics>,
    /// `p⁻¹ Σ_j B⁻¹ Σ_b (θ̂_bj − θ_j)²`.
    pub mse: f64,
    /// `{B⁻¹ Σ_b ‖θ̂_b − θ‖²}^½`, the RMSE formula applied to the whole vector.
    pub vector_rmse: f64,
    pub replicates: usize,
}

/// Summaries over `estimates` (one slice per replicate) against `truth`.
pub fn aggregate_metrics(estimates: &[Vec<f64>], truth: &[f64]) -> Result<Aggregates> {
    if estimates.is_empty() {
        return Err(Error::NoConvergedReplicates);
    }
    let p = truth.len();
    if let Some(bad) = estimates.iter().find(|e| e.len() != p) {
        return Err(Error::Dimension {
            context: "aggregate_metrics",
            expected: p,
            got: bad.len(),
        });
    }
    let b = estimates.len() as f64;
    let coords: Vec<CoordMetrics> = (0..p)
        .map(|j| {
            let mean = estimates.iter().map(|e| e[j]).sum::<f64>() / b;
            let var = estimates.iter().map(|e| (e[j] - mean).powi(2)).sum::<f64>() / b;
            let mae = estimates.iter().map(|e| (e[j] - truth[j]).abs()).sum::<f64>() / b;
            let msq = estimates.iter().map(|e| (e[j] - truth[j]).powi(2)).sum::<f64>() / b;
            CoordMetrics {
                bias: truth[j] - mean,
                se: var.sqrt(),
                mae,
                rmse: msq.sqrt(),
            }
        })
        .collect();
    let total: f64 = coords.iter().map(|c| c.rmse * c.rmse).sum();
    Ok(Aggregates {
        mse: if p == 0 { 0.0 } else { total / p as f64 },
        vector_rmse: total.sqrt(),
        coords,
        replicates: estimates.len(),
    })
}

/// Squared error of one replicate averaged over coordinates; its mean over
/// replicates is the aggregate MSE.
pub fn mse_contrib(estimate: &[f64], truth: &[f64]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    estimate.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum::<f64>() / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn perfect_estimates() {
        let truth = vec![0.5, -1.0];
        let a = aggregate_metrics(&[truth.clone(), truth.clone()], &truth).unwrap();
        for c in &a.coords {
            assert_eq!((c.bias, c.se, c.mae, c.rmse), (0.0, 0.0, 0.0, 0.0));
        }
        assert_eq!(a.mse, 0.0);
    }

    #[test]
    fn two_point_design() {
        let truth = vec![1.0, 2.0];
        let delta = [0.3, 0.1];
        let est = vec![vec![1.3, 2.1], vec![0.7, 1.9]];
        let a = aggregate_metrics(&est, &truth).unwrap();
        for j in 0..2 {
            assert_abs_diff_eq!(a.coords[j].bias, 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(a.coords[j].rmse, delta[j], epsilon = 1e-15);
            assert_abs_diff_eq!(a.coords[j].mae, delta[j], epsilon = 1e-15);
        }
        assert_abs_diff_eq!(a.mse, (0.09 + 0.01) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.vector_rmse, 0.1f64.sqrt(), epsilon = 1e-15);
        let per: f64 = est.iter().map(|e| mse_contrib(e, &truth)).sum::<f64>() / 2.0;
        assert_abs_diff_eq!(per, a.mse, epsilon = 1e-15);
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(matches!(aggregate_metrics(&[], &[1.0]), Err(Error::NoConvergedReplicates)));
        assert!(aggregate_metrics(&[vec![1.0, 2.0]], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn rmse_decomposes_into_bias_and_spread(
            truth in prop::collection::vec(-5.0f64..5.0, 1..5),
            seeds in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 5), 1..40),
        ) {
            let p = truth.len();
            let est: Vec<Vec<f64>> = seeds.iter().map(|s| (0..p).map(|j| truth[j] + s[j]).collect()).collect();
            let a = aggregate_metrics(&est, &truth).unwrap();
            for c in &a.coords {
                prop_assert!((c.rmse * c.rmse - (c.bias * c.bias + c.se * c.se)).abs() < 1e-10);
                prop_assert!(c.mae <= c.rmse + 1e-12);
            }
            prop_assert!((a.vector_rmse.powi(2) - p as f64 * a.mse).abs() < 1e-10);
        }
    }
}
