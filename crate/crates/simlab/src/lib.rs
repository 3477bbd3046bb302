//! Monte Carlo harness and command-line front end for `semiprof-core`.
//!
//! Every subcommand runs its replicates on a rayon pool. Replicate seeds
//! come from the master seed and the replicate index alone and results are
//! joined in index order, so output does not depend on `--threads`.

pub mod cli;
pub mod config;
pub mod output;
pub mod report;
pub mod run;

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use semiprof_core::experiment::{run_garchm_replicates, run_transform_replicates, MAX_FAILURE_RATE};

use crate::cli::{Cli, Command, GlobalArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("failure threshold exceeded: {0}")]
    Threshold(String),
    #[error(transparent)]
    Core(#[from] semiprof_core::Error),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Where results go: files under `--out`, or the per-replicate CSV on
/// stdout with summaries on stderr.
struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    fn new(dir: Option<&Path>) -> Result<Self, CliError> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(Self { dir: dir.map(Path::to_path_buf) })
    }

    /// The primary CSV: a file under `--out`, otherwise stdout.
    fn primary_csv(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => output::write_csv(File::create(d.join(name))?, header, rows),
            None => output::write_csv(io::stdout().lock(), header, rows),
        }
    }

    /// Secondary files are only written under `--out`.
    fn extra_csv(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => output::write_csv(File::create(d.join(name))?, header, rows),
            None => Ok(()),
        }
    }

    fn json(&self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        if let Some(d) = &self.dir {
            let text = serde_json::to_string_pretty(value).expect("JSON values serialise");
            std::fs::write(d.join(name), text + "\n")?;
        }
        Ok(())
    }

    fn summary(&self, text: &str) -> Result<(), CliError> {
        if self.dir.is_some() {
            io::stdout().lock().write_all(text.as_bytes())?;
        } else {
            io::stderr().lock().write_all(text.as_bytes())?;
        }
        Ok(())
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// Runs one parsed command line.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let threads = cli.global.threads;
    if threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Io(e.to_string()))?;
    pool.install(|| dispatch(&cli.command, &cli.global))
}

fn dispatch(command: &Command, global: &GlobalArgs) -> Result<(), CliError> {
    let file = global.config.as_deref();
    let timing = !global.no_timing;
    match command {
        Command::Toy(args) => {
            let cfg = config::toy_config(args, file)?;
            let sink = Sink::new(global.out.as_deref())?;
            let out = run::run_toy(&cfg)?;
            let rows: Vec<Vec<String>> = out
                .cells
                .iter()
                .map(|r| vec![r.method.short_name().into(), output::num(r.alpha), output::num(r.c), output::num(r.mean_steps)])
                .collect();
            sink.primary_csv("toy_steps.csv", &header(&["method", "alpha", "C", "mean_steps"]), &rows)?;
            let alpha_rows: Vec<Vec<String>> = out
                .by_alpha
                .iter()
                .map(|(m, a, s)| vec![m.short_name().into(), output::num(*a), output::num(*s)])
                .collect();
            sink.extra_csv("toy_alpha.csv", &header(&["method", "alpha", "mean_steps"]), &alpha_rows)?;
            if cfg.paths {
                let path_rows: Vec<Vec<String>> = out
                    .paths
                    .iter()
                    .map(|(m, k, x, y)| vec![m.short_name().into(), k.to_string(), output::num(*x), output::num(*y)])
                    .collect();
                let h = header(&["method", "step_index", "x", "y"]);
                match &sink.dir {
                    Some(_) => sink.extra_csv("toy_paths.csv", &h, &path_rows)?,
                    None => output::write_csv(io::stderr().lock(), &h, &path_rows)?,
                }
            }
            sink.summary(&report::toy_table(&out.cells, &out.by_alpha))
        }
        Command::Transform(args) => {
            let cfg = config::transform_config(args, file)?;
            let sink = Sink::new(global.out.as_deref())?;
            let report = run_transform_replicates(&cfg)?;
            let p = cfg.theta_star.len();
            sink.primary_csv("transform.csv", &output::transform_header(p), &output::transform_rows(&report, timing))?;
            sink.json("transform_aggregates.json", &output::aggregates_json(&report, timing))?;
            sink.summary(&output::transform_table(&output::transform_summaries(&report, timing)))?;
            report
                .check_failures(MAX_FAILURE_RATE)
                .map_err(|e| CliError::Threshold(e.to_string()))
        }
        Command::Garchm(args) => {
            let cfg = config::garch_config(args, file)?;
            let sink = Sink::new(global.out.as_deref())?;
            let report = run_garchm_replicates(&cfg)?;
            let setup = cfg.setup.to_string();
            sink.primary_csv(
                "garchm.csv",
                &header(&output::GARCH_HEADER),
                &output::garch_rows(&report, &setup, timing),
            )?;
            sink.json("garchm_aggregates.json", &output::aggregates_json(&report, timing))?;
            sink.summary(&output::garch_table(&report, timing))?;
            report
                .check_failures(MAX_FAILURE_RATE)
                .map_err(|e| CliError::Threshold(e.to_string()))
        }
        Command::Quadcheck(args) => {
            let cfg = config::quad_config(args, file)?;
            let sink = Sink::new(global.out.as_deref())?;
            let trials = run::run_quadcheck(&cfg)?;
            let rows: Vec<Vec<String>> = trials
                .iter()
                .map(|t| {
                    vec![
                        t.trial.to_string(),
                        t.p.to_string(),
                        t.q.to_string(),
                        t.ip_iterations.to_string(),
                        output::num(t.ip_residual),
                        t.nr_iterations.to_string(),
                        output::num(t.theta_gap),
                    ]
                })
                .collect();
            let h = header(&["trial", "p", "q", "ip_iterations", "ip_residual", "nr_iterations", "theta_gap"]);
            sink.extra_csv("quadcheck.csv", &h, &rows)?;
            let n = trials.len();
            let count = |f: fn(&run::QuadTrial) -> bool| trials.iter().filter(|t| f(t)).count();
            let (ip, nr, agree) = (count(run::QuadTrial::ip_ok), count(run::QuadTrial::nr_ok), count(run::QuadTrial::agree_ok));
            let text = format!(
                "ip converged in <= 2 iterations (residual <= {:e}): {ip}/{n}\n\
                 nr converged in exactly 1 iteration: {nr}/{n}\n\
                 ip/nr/naive limit points within {:e}: {agree}/{n}\n",
                run::QUAD_TOL,
                run::QUAD_AGREEMENT
            );
            io::stdout().lock().write_all(text.as_bytes())?;
            if ip == n && nr == n && agree == n {
                Ok(())
            } else {
                Err(CliError::Threshold(format!("{} of {n} trials failed a property", n - ip.min(nr).min(agree))))
            }
        }
        Command::Report(args) => {
            let text = report::render(&args.input, args.format)?;
            io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}
