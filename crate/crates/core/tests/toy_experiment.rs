use semiprof_core::toy::{toy_initial_point, toy_path, toy_step_experiment, ToyInitGrid, TOY_TOL};
use semiprof_core::Method;

fn alphas() -> Vec<f64> {
    (0..10).map(|k| 0.2 * k as f64).collect()
}

/// Sweeps needed by naive iteration from `x0`; the λ half-step ignores the
/// starting y and the check happens right after it.
fn naive_oracle(alpha: f64, x0: f64, tol: f64) -> usize {
    let mut x = x0;
    let mut k = 0;
    loop {
        let y = -alpha * x / 2.0;
        let psi = 2.0 * x + alpha * y;
        k += 1;
        if psi.abs() <= tol && (2.0 * y + alpha * x).abs() <= tol {
            return k;
        }
        x = -alpha * y / 2.0;
    }
}

#[test]
fn naive_contracts_by_alpha_squared_over_four() {
    for alpha in [0.4, 1.0, 1.6, 1.8] {
        let (x0, y0) = toy_initial_point(alpha, 9.0, 0.7);
        let path = toy_path(alpha, (x0, y0), Method::NaiveIteration, 1e-9).unwrap();
        // The final record is the mid-sweep point where the check passed.
        for w in path[1..path.len() - 1].windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.1.abs() > 1e-250 {
                assert!((b.1 / a.1 - alpha * alpha / 4.0).abs() < 1e-12, "α={alpha}");
                assert!((b.2 / a.2 - alpha * alpha / 4.0).abs() < 1e-12, "α={alpha}");
            }
        }
    }
}

#[test]
fn naive_counts_match_geometric_oracle() {
    let grid = ToyInitGrid::default();
    for alpha in [0.2, 1.0, 1.6, 1.8] {
        for &c in &grid.c_values {
            for &g in &grid.gamma_values {
                let (x0, y0) = toy_initial_point(alpha, c, g);
                let path = toy_path(alpha, (x0, y0), Method::NaiveIteration, TOY_TOL).unwrap();
                assert_eq!(path.len() - 1, naive_oracle(alpha, x0, TOY_TOL), "α={alpha} C={c} γ={g}");
            }
        }
    }
}

#[test]
fn newton_and_ip_counts_are_exact() {
    let grid = ToyInitGrid::default();
    let rows = toy_step_experiment(&alphas(), &grid.c_values, TOY_TOL, &[Method::NewtonRaphson, Method::ImplicitProfiling]).unwrap();
    for row in rows {
        let expected = if row.method == Method::NewtonRaphson { 1.0 } else { 2.0 };
        assert_eq!(row.mean_steps, expected, "{:?}", row);
        assert!(row.max_limit_error <= 1e-12);
    }
}

#[test]
fn naive_counts_grow_with_coupling_and_distance() {
    let grid = ToyInitGrid::default();
    let rows = toy_step_experiment(&alphas(), &grid.c_values, TOY_TOL, &[Method::NaiveIteration]).unwrap();
    let at = |a: f64, c: f64| {
        rows.iter()
            .find(|r| (r.alpha - a).abs() < 1e-12 && r.c == c)
            .unwrap()
            .mean_steps
    };
    for &c in &grid.c_values {
        for w in alphas().windows(2) {
            assert!(at(w[0], c) <= at(w[1], c), "α {} → {} at C={c}", w[0], w[1]);
        }
    }
    for a in alphas() {
        for w in grid.c_values.windows(2) {
            assert!(at(a, w[0]) <= at(a, w[1]), "C {} → {} at α={a}", w[0], w[1]);
        }
    }
    let mid = at(1.6, 4.0);
    assert!((25.0..=35.0).contains(&mid), "naive steps at (1.6, 4) = {mid}");
}
