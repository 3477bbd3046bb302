//! `report`: re-summarises a per-replicate CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use semiprof_core::experiment::{ReplicationReport, ReportMeta, RepRecord};
use semiprof_core::garchm::{GarchTheta, Setup};
use semiprof_core::toy::ToyStepRow;
use semiprof_core::Method;

use crate::cli::Format;
use crate::output::{self, TransformSummary};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    Toy,
    Transform,
    Garchm,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn col(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("input CSV lacks a `{name}` column")))
    }
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let header = r.headers().map_err(output::io_err)?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("malformed CSV {}: {e}", path.display())))?;
    Ok(Table { header, rows })
}

fn parse_f64(s: &str) -> Result<f64, CliError> {
    if s == "NA" {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| CliError::Usage(format!("expected a number, found `{s}`")))
}

fn parse_usize(s: &str) -> Result<usize, CliError> {
    s.parse().map_err(|_| CliError::Usage(format!("expected an integer, found `{s}`")))
}

fn parse_bool(s: &str) -> Result<bool, CliError> {
    s.parse().map_err(|_| CliError::Usage(format!("expected true/false, found `{s}`")))
}

pub fn detect(header: &[String]) -> Option<CsvKind> {
    let has = |c: &str| header.iter().any(|h| h == c);
    if has("mean_steps") {
        Some(CsvKind::Toy)
    } else if has("mse_contrib") {
        Some(CsvKind::Transform)
    } else if has("omega_hat") {
        Some(CsvKind::Garchm)
    } else {
        None
    }
}

/// Renders the summary of `path` in the requested format.
pub fn render(path: &Path, format: Format) -> Result<String, CliError> {
    let table = read_table(path)?;
    match detect(&table.header) {
        Some(CsvKind::Toy) => toy_report(&table, format),
        Some(CsvKind::Transform) => transform_report(&table, format),
        Some(CsvKind::Garchm) => garch_report(&table, format),
        None => Err(CliError::Usage(format!(
            "{} is not a toy, transform or garchm results CSV",
            path.display()
        ))),
    }
}

fn toy_report(t: &Table, format: Format) -> Result<String, CliError> {
    let (cm, ca, cc, cs) = (t.col("method")?, t.col("alpha")?, t.col("C")?, t.col("mean_steps")?);
    let cells = t
        .rows
        .iter()
        .map(|r| {
            Ok(ToyStepRow {
                method: r[cm].parse::<Method>().map_err(|e| CliError::Usage(e.to_string()))?,
                alpha: parse_f64(&r[ca])?,
                c: parse_f64(&r[cc])?,
                mean_steps: parse_f64(&r[cs])?,
                max_limit_error: f64::NAN,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let by_alpha = toy_by_alpha(&cells);
    Ok(match format {
        Format::Table => toy_table(&cells, &by_alpha),
        Format::Csv => {
            let mut buf = Vec::new();
            let header = ["method", "alpha", "mean_steps"].map(String::from);
            let rows: Vec<Vec<String>> = by_alpha
                .iter()
                .map(|(m, a, s)| vec![m.short_name().to_string(), output::num(*a), output::num(*s)])
                .collect();
            output::write_csv(&mut buf, &header, &rows)?;
            String::from_utf8(buf).expect("CSV output is UTF-8")
        }
        Format::Json => {
            let mut by_method: BTreeMap<String, Vec<Value>> = BTreeMap::new();
            for (m, a, s) in &by_alpha {
                by_method
                    .entry(m.short_name().to_string())
                    .or_default()
                    .push(json!({ "alpha": a, "mean_steps": s }));
            }
            let v = json!({ "meta": { "experiment": "toy" }, "aggregates": by_method });
            serde_json::to_string_pretty(&v).expect("JSON values serialise") + "\n"
        }
    })
}

/// Mean steps per `(method, α)` averaged over the C grid.
pub fn toy_by_alpha(cells: &[ToyStepRow]) -> Vec<(Method, f64, f64)> {
    let mut keys: Vec<(Method, f64)> = Vec::new();
    for c in cells {
        if !keys.iter().any(|&(m, a)| m == c.method && a == c.alpha) {
            keys.push((c.method, c.alpha));
        }
    }
    keys.into_iter()
        .map(|(m, a)| {
            let v: Vec<f64> = cells.iter().filter(|c| c.method == m && c.alpha == a).map(|c| c.mean_steps).collect();
            (m, a, v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect()
}

/// Mean steps by α and method and, when α = 1.6 is present, by C
/// and method at α = 1.6.
pub fn toy_table(cells: &[ToyStepRow], by_alpha: &[(Method, f64, f64)]) -> String {
    let mut methods: Vec<Method> = Vec::new();
    for c in cells {
        if !methods.contains(&c.method) {
            methods.push(c.method);
        }
    }
    let mut s = String::new();
    let _ = write!(s, "{:>6}", "alpha");
    for m in &methods {
        let _ = write!(s, " {:>18}", m.label());
    }
    let _ = writeln!(s);
    let mut alphas: Vec<f64> = Vec::new();
    for r in by_alpha {
        if !alphas.contains(&r.1) {
            alphas.push(r.1);
        }
    }
    for a in &alphas {
        let _ = write!(s, "{a:>6.2}");
        for m in &methods {
            let v = by_alpha.iter().find(|r| r.0 == *m && r.1 == *a).map_or(f64::NAN, |r| r.2);
            let _ = write!(s, " {v:>18.2}");
        }
        let _ = writeln!(s);
    }
    let fixed: Vec<&ToyStepRow> = cells.iter().filter(|c| (c.alpha - 1.6).abs() < 1e-12).collect();
    if !fixed.is_empty() {
        let _ = writeln!(s, "\nalpha = 1.6");
        let _ = write!(s, "{:>6}", "C");
        for m in &methods {
            let _ = write!(s, " {:>18}", m.label());
        }
        let _ = writeln!(s);
        let mut cs: Vec<f64> = fixed.iter().map(|c| c.c).collect();
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        for c in cs {
            let _ = write!(s, "{c:>6}");
            for m in &methods {
                let v = fixed.iter().find(|r| r.method == *m && r.c == c).map_or(f64::NAN, |r| r.mean_steps);
                let _ = write!(s, " {v:>18.2}");
            }
            let _ = writeln!(s);
        }
    }
    s
}

fn transform_report(t: &Table, format: Format) -> Result<String, CliError> {
    let (cm, cn, cmse, ci, cs, cc) = (
        t.col("method")?,
        t.col("n")?,
        t.col("mse_contrib")?,
        t.col("iterations")?,
        t.col("seconds")?,
        t.col("converged")?,
    );
    let p = t.header.iter().filter(|h| h.starts_with("theta_")).count();
    let mut groups: Vec<((usize, String), Vec<&Vec<String>>)> = Vec::new();
    for r in &t.rows {
        let key = (parse_usize(&r[cn])?, r[cm].clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut summaries = Vec::new();
    for ((n, method), rows) in groups {
        let mut ok = Vec::new();
        for r in &rows {
            if parse_bool(&r[cc])? {
                ok.push((parse_f64(&r[cmse])?, parse_usize(&r[ci])? as f64, parse_f64(&r[cs])?));
            }
        }
        let k = ok.len() as f64;
        let mean = |f: fn(&(f64, f64, f64)) -> f64| if ok.is_empty() { f64::NAN } else { ok.iter().map(f).sum::<f64>() / k };
        let mse = mean(|r| r.0);
        summaries.push(TransformSummary {
            n,
            method,
            mse,
            rmse: if p > 0 { (p as f64 * mse).sqrt() } else { f64::NAN },
            mean_seconds: mean(|r| r.2),
            mean_iterations: mean(|r| r.1),
            converged: ok.len(),
            total: rows.len(),
        });
    }
    Ok(match format {
        Format::Table => output::transform_table(&summaries),
        Format::Csv => {
            let (h, rows) = output::transform_summary_rows(&summaries);
            let mut buf = Vec::new();
            output::write_csv(&mut buf, &h, &rows)?;
            String::from_utf8(buf).expect("CSV output is UTF-8")
        }
        Format::Json => serde_json::to_string_pretty(&output::transform_summary_json(&summaries)).expect("JSON values serialise") + "\n",
    })
}

fn garch_report(t: &Table, format: Format) -> Result<String, CliError> {
    let cols: Vec<usize> = output::GARCH_HEADER
        .iter()
        .map(|c| t.col(c))
        .collect::<Result<_, _>>()?;
    let mut groups: Vec<((String, usize), Vec<RepRecord>)> = Vec::new();
    let mut timing = true;
    for r in &t.rows {
        let f = |i: usize| r[cols[i]].as_str();
        let seconds = parse_f64(f(8))?;
        timing &= seconds.is_finite();
        let rec = RepRecord {
            method: f(0).to_string(),
            rep: parse_usize(f(3))?,
            estimates: vec![parse_f64(f(4))?, parse_f64(f(5))?, parse_f64(f(6))?],
            iterations: parse_usize(f(7))?,
            seconds,
            converged: parse_bool(f(9))?,
            extrapolation_warnings: f(10).parse().ok(),
            error: None,
        };
        let key = (f(1).to_string(), parse_usize(f(2))?);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(rec),
            None => groups.push((key, vec![rec])),
        }
    }
    let mut reports = Vec::new();
    for ((setup, t_len), recs) in groups {
        let s: Setup = setup.parse().map_err(|e: semiprof_core::Error| CliError::Usage(e.to_string()))?;
        let reps = recs.iter().map(|r| r.rep).max().map_or(0, |m| m + 1);
        let meta = ReportMeta {
            experiment: format!("garchm-{s}"),
            n_or_t: t_len,
            reps,
            seed: 0,
            config_hash: String::new(),
            truth: GarchTheta::design(s).to_array().to_vec(),
            coords: vec!["omega".into(), "alpha".into(), "beta".into()],
        };
        reports.push((setup, ReplicationReport::from_records(meta, recs)));
    }
    Ok(match format {
        Format::Table => reports
            .iter()
            .map(|(_, r)| output::garch_table(r, timing))
            .collect::<Vec<_>>()
            .join("\n"),
        Format::Csv => {
            let header: Vec<String> = output::GARCH_SUMMARY_HEADER.iter().map(|s| s.to_string()).collect();
            let rows: Vec<Vec<String>> = reports
                .iter()
                .flat_map(|(s, r)| output::garch_summary_rows(r, s, timing))
                .collect();
            let mut buf = Vec::new();
            output::write_csv(&mut buf, &header, &rows)?;
            String::from_utf8(buf).expect("CSV output is UTF-8")
        }
        Format::Json => {
            let all: Vec<Value> = reports.iter().map(|(_, r)| output::aggregates_json(r, timing)).collect();
            let v = if all.len() == 1 { all.into_iter().next().expect("one report") } else { Value::Array(all) };
            serde_json::to_string_pretty(&v).expect("JSON values serialise") + "\n"
        }
    })
}
