use std::process::{Command, Output};

fn simlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simlab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(simlab(&["toy", "--alpha-grid", "0:oops"]).status.code(), Some(2));
    assert_eq!(simlab(&["toy", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(simlab(&["garchm", "--T", "10"]).status.code(), Some(2));
    assert_eq!(simlab(&["--threads", "0", "quadcheck", "--trials", "1"]).status.code(), Some(2));
    assert_eq!(simlab(&["report", "--in", "/nonexistent.csv"]).status.code(), Some(2));
}

#[test]
fn quadcheck_reports_counts() {
    let o = simlab(&["quadcheck", "--p", "3", "--q", "10", "--trials", "20", "--seed", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("ip converged in <= 2 iterations (residual <= 1e-10): 20/20"), "{text}");
    assert!(text.contains("nr converged in exactly 1 iteration: 20/20"), "{text}");
}

#[test]
fn toy_csv_has_exact_nr_and_ip_counts() {
    let o = simlab(&["toy", "--alpha-grid", "0,1,1.6", "--c-grid", "1,4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,alpha,C,mean_steps"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3 * 3 * 2);
    for r in &rows {
        match r[0] {
            "nr" => assert_eq!(r[3], "1"),
            "ip" => assert_eq!(r[3], "2"),
            "naive" => assert!(r[3].parse::<f64>().unwrap() >= 2.0),
            other => panic!("unexpected method {other}"),
        }
    }
}

#[test]
fn out_dir_files_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = simlab(&["--out", d, "--no-timing", "transform", "--n", "40", "--reps", "3", "--seed", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = stdout(&o);
    assert!(summary.contains("Implicit Profiling"));
    assert!(dir.path().join("transform.csv").exists());
    let agg: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("transform_aggregates.json")).unwrap()).unwrap();
    assert_eq!(agg["meta"]["reps"], 3);
    assert!(agg["aggregates"]["ip"]["mean_seconds"].is_null());

    let csv = dir.path().join("transform.csv");
    let r = simlab(&["report", "--in", csv.to_str().unwrap()]);
    assert!(r.status.success());
    assert_eq!(stdout(&r), summary);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"n": 40, "reps": 4, "seed": 3}"#).unwrap();
    let o = simlab(&["--no-timing", "--config", cfg.to_str().unwrap(), "transform", "--reps", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2 * 3);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("40")));
}
