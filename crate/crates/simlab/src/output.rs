//! CSV rows, aggregate JSON and text tables.

use std::fmt::Write as _;
use std::io::Write;

use serde_json::{json, Map, Value};

use semiprof_core::experiment::ReplicationReport;
use semiprof_core::Method;

use crate::CliError;

/// Shortest round-trip decimal, or `NA` for missing values.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".to_string()
    }
}

fn opt_num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn write_csv<W: Write>(sink: W, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header).map_err(io_err)?;
    for r in rows {
        w.write_record(r).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

pub(crate) fn io_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn method_label(name: &str) -> String {
    match name.parse::<Method>() {
        Ok(m) => m.label().to_string(),
        Err(_) => match name {
            "backfit" => "Backfitting".to_string(),
            other => other.to_string(),
        },
    }
}

/// Per-method summary of a transformation-model run.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSummary {
    pub n: usize,
    pub method: String,
    pub mse: f64,
    /// `(p · MSE)^½`, the RMSE of the whole θ̂ vector.
    pub rmse: f64,
    pub mean_seconds: f64,
    pub mean_iterations: f64,
    pub converged: usize,
    pub total: usize,
}

pub fn transform_header(p: usize) -> Vec<String> {
    let mut h: Vec<String> = ["method", "n", "rep", "mse_contrib", "iterations", "seconds", "converged"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=p).map(|j| format!("theta_{j}")));
    h
}

pub fn transform_rows(report: &ReplicationReport, timing: bool) -> Vec<Vec<String>> {
    let truth = &report.meta.truth;
    report
        .per_rep
        .iter()
        .map(|r| {
            let mut row = vec![
                r.method.clone(),
                report.meta.n_or_t.to_string(),
                r.rep.to_string(),
                num(semiprof_core::metrics::mse_contrib(&r.estimates, truth)),
                r.iterations.to_string(),
                if timing { num(r.seconds) } else { "NA".into() },
                r.converged.to_string(),
            ];
            row.extend(r.estimates.iter().map(|v| num(*v)));
            row
        })
        .collect()
}

pub fn transform_summaries(report: &ReplicationReport, timing: bool) -> Vec<TransformSummary> {
    report
        .methods()
        .into_iter()
        .map(|m| {
            let total = report.per_rep.iter().filter(|r| r.method == m).count();
            match report.aggregates.get(&m) {
                Some(s) => TransformSummary {
                    n: report.meta.n_or_t,
                    mse: s.metrics.mse,
                    rmse: s.metrics.vector_rmse,
                    mean_seconds: if timing { s.mean_seconds } else { f64::NAN },
                    mean_iterations: s.mean_iterations,
                    converged: s.metrics.replicates,
                    total,
                    method: m,
                },
                None => TransformSummary {
                    n: report.meta.n_or_t,
                    mse: f64::NAN,
                    rmse: f64::NAN,
                    mean_seconds: f64::NAN,
                    mean_iterations: f64::NAN,
                    converged: 0,
                    total,
                    method: m,
                },
            }
        })
        .collect()
}

pub fn transform_table(rows: &[TransformSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>6}  {:<20} {:>9} {:>9} {:>10} {:>8} {:>9}",
        "n", "method", "MSE", "RMSE", "time (s)", "iter", "converged"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>6}  {:<20} {:>9} {:>9} {:>10} {:>8} {:>9}",
            r.n,
            method_label(&r.method),
            fixed(r.mse, 4),
            fixed(r.rmse, 3),
            fixed(r.mean_seconds, 3),
            fixed(r.mean_iterations, 2),
            format!("{}/{}", r.converged, r.total)
        );
    }
    s
}

pub fn transform_summary_rows(rows: &[TransformSummary]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["n", "method", "mse", "rmse", "mean_seconds", "mean_iterations", "converged", "total"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.method.clone(),
                num(r.mse),
                num(r.rmse),
                num(r.mean_seconds),
                num(r.mean_iterations),
                r.converged.to_string(),
                r.total.to_string(),
            ]
        })
        .collect();
    (header, body)
}

pub fn transform_summary_json(rows: &[TransformSummary]) -> Value {
    let mut by_n: Map<String, Value> = Map::new();
    for r in rows {
        let entry = by_n.entry(r.n.to_string()).or_insert_with(|| json!({}));
        entry[&r.method] = json!({
            "mse": opt_num(r.mse),
            "rmse": opt_num(r.rmse),
            "mean_seconds": opt_num(r.mean_seconds),
            "mean_iterations": opt_num(r.mean_iterations),
            "converged": r.converged,
            "total": r.total,
        });
    }
    json!({ "meta": { "experiment": "transform" }, "aggregates": by_n })
}

pub const GARCH_HEADER: [&str; 11] = [
    "method",
    "setup",
    "T",
    "rep",
    "omega_hat",
    "alpha_hat",
    "beta_hat",
    "iterations",
    "seconds",
    "converged",
    "extrapolation_warnings",
];

pub fn garch_rows(report: &ReplicationReport, setup: &str, timing: bool) -> Vec<Vec<String>> {
    report
        .per_rep
        .iter()
        .map(|r| {
            let mut row = vec![r.method.clone(), setup.to_string(), report.meta.n_or_t.to_string(), r.rep.to_string()];
            row.extend(r.estimates.iter().map(|v| num(*v)));
            row.push(r.iterations.to_string());
            row.push(if timing { num(r.seconds) } else { "NA".into() });
            row.push(r.converged.to_string());
            row.push(r.extrapolation_warnings.map_or("NA".into(), |w| w.to_string()));
            row
        })
        .collect()
}

/// `{meta, aggregates: {method: {coord: {bias, se, mae, rmse}, ...}}}`.
pub fn aggregates_json(report: &ReplicationReport, timing: bool) -> Value {
    let mut aggs = Map::new();
    for (method, s) in &report.aggregates {
        let mut m = Map::new();
        for (name, c) in report.meta.coords.iter().zip(&s.metrics.coords) {
            m.insert(
                name.clone(),
                json!({ "bias": c.bias, "se": c.se, "mae": c.mae, "rmse": c.rmse }),
            );
        }
        m.insert("mse".into(), json!(s.metrics.mse));
        m.insert("vector_rmse".into(), json!(s.metrics.vector_rmse));
        m.insert("converged".into(), json!(s.metrics.replicates));
        m.insert("excluded".into(), json!(s.excluded));
        m.insert("mean_iterations".into(), json!(s.mean_iterations));
        m.insert(
            "mean_seconds".into(),
            if timing { opt_num(s.mean_seconds) } else { Value::Null },
        );
        aggs.insert(method.clone(), Value::Object(m));
    }
    json!({
        "meta": {
            "experiment": report.meta.experiment,
            "n_or_T": report.meta.n_or_t,
            "reps": report.meta.reps,
            "seed": report.meta.seed,
            "config_hash": report.meta.config_hash,
        },
        "aggregates": aggs,
    })
}

fn fixed(v: f64, digits: usize) -> String {
    if v.is_finite() {
        format!("{v:.digits$}")
    } else {
        "NA".into()
    }
}

/// Bias, SE, MAE and RMSE per coordinate, followed by mean time and
/// iterations per method.
pub fn garch_table(report: &ReplicationReport, timing: bool) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}  T = {}", report.meta.experiment, report.meta.n_or_t);
    let _ = write!(s, "{:<14}", "method");
    for c in &report.meta.coords {
        let _ = write!(s, " | {:^35}", c);
    }
    let _ = writeln!(s);
    let _ = write!(s, "{:<14}", "");
    for _ in &report.meta.coords {
        let _ = write!(s, " | {:>8} {:>8} {:>8} {:>8}", "Bias", "SE", "MAE", "RMSE");
    }
    let _ = writeln!(s);
    for (method, agg) in &report.aggregates {
        let _ = write!(s, "{:<14}", method_label(method));
        for c in &agg.metrics.coords {
            let _ = write!(s, " | {:>8.4} {:>8.4} {:>8.4} {:>8.4}", c.bias, c.se, c.mae, c.rmse);
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<14} {:>10} {:>9} {:>9}", "method", "time (s)", "iter", "excluded");
    for (method, agg) in &report.aggregates {
        let secs = if timing { agg.mean_seconds } else { f64::NAN };
        let _ = writeln!(
            s,
            "{:<14} {:>10} {:>9} {:>9}",
            method_label(method),
            fixed(secs, 4),
            fixed(agg.mean_iterations, 2),
            agg.excluded
        );
    }
    s
}

pub fn garch_summary_rows(report: &ReplicationReport, setup: &str, timing: bool) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (method, agg) in &report.aggregates {
        for (name, c) in report.meta.coords.iter().zip(&agg.metrics.coords) {
            rows.push(vec![
                setup.to_string(),
                report.meta.n_or_t.to_string(),
                method.clone(),
                name.clone(),
                num(c.bias),
                num(c.se),
                num(c.mae),
                num(c.rmse),
                num(agg.mean_iterations),
                if timing { num(agg.mean_seconds) } else { "NA".into() },
                agg.excluded.to_string(),
            ]);
        }
    }
    rows
}

pub const GARCH_SUMMARY_HEADER: [&str; 11] = [
    "setup",
    "T",
    "method",
    "coord",
    "bias",
    "se",
    "mae",
    "rmse",
    "mean_iterations",
    "mean_seconds",
    "excluded",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_and_missing_is_na() {
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(1e-20), "0.00000000000000000001");
        assert_eq!(num(f64::NAN), "NA");
        assert_eq!(num(f64::INFINITY), "NA");
        let v = 0.123_456_789_012_345_68_f64;
        assert_eq!(num(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn labels() {
        assert_eq!(method_label("ip"), "Implicit Profiling");
        assert_eq!(method_label("backfit"), "Backfitting");
        assert_eq!(method_label("other"), "other");
    }
}
