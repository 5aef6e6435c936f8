//! `hvq` — run and validate grid experiments for λ-parameterized wave
//! dynamics.
//!
//! Subcommands:
//!   hvq run <config.json>       execute an experiment, write outputs + report
//!   hvq validate <config.json>  parse-and-check the configuration only
//!   hvq version                 print the version
//!
//! Exit codes: 0 success (all checks passed), 1 checks failed,
//! 2 invalid configuration, 3 numerical abort.

mod config;
mod experiments;
mod report;

use report::{OutputWriter, RunReport};
use std::process::ExitCode;
use std::time::Instant;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    match args.get(1).map(String::as_str) {
        Some("version") => {
            println!("hvq {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
        Some("validate") => match args.get(2) {
            Some(path) => cmd_validate(path),
            None => usage(),
        },
        Some("run") => match args.get(2) {
            Some(path) => cmd_run(path),
            None => usage(),
        },
        _ => usage(),
    }
}

fn usage() -> ExitCode {
    eprintln!("usage: hvq <run|validate|version> [config.json]");
    ExitCode::from(2)
}

fn cmd_validate(path: &str) -> ExitCode {
    let config = match config::load_config(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let diags = config.validate();
    if diags.is_empty() {
        println!("ok: {path}");
        ExitCode::SUCCESS
    } else {
        for d in &diags {
            eprintln!("error: {d}");
        }
        ExitCode::from(2)
    }
}

fn thread_budget() -> usize {
    if let Ok(v) = std::env::var("HVQ_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(8)
}

fn cmd_run(path: &str) -> ExitCode {
    let started = Instant::now();
    let config = match config::load_config(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let diags = config.validate();
    if !diags.is_empty() {
        for d in &diags {
            eprintln!("error: {d}");
        }
        return ExitCode::from(2);
    }

    let mut writer = match OutputWriter::new(&config.output.directory, &config.output.formats) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: cannot open output directory: {e}");
            return ExitCode::from(2);
        }
    };

    let threads = thread_budget();
    let checks = match experiments::run_experiment(&config, &mut writer, threads) {
        Ok(checks) => checks,
        Err(experiments::RunError::Setup(message)) => {
            eprintln!("error: {message}");
            return ExitCode::from(2);
        }
        Err(e @ experiments::RunError::Numerical { .. }) => {
            eprintln!("error: {e}");
            write_report(&config, &writer, &[], started);
            return ExitCode::from(3);
        }
    };

    for c in &checks {
        println!(
            "check {}: {} (value {:e}, threshold {:e})",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.value,
            c.threshold
        );
    }
    write_report(&config, &writer, &checks, started);

    if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn write_report(
    config: &config::RunConfig,
    writer: &OutputWriter,
    checks: &[report::CheckResult],
    started: Instant,
) {
    let report = RunReport {
        artifact: format!("hvq {}", env!("CARGO_PKG_VERSION")),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        checks: checks.to_vec(),
        outputs: writer.manifest(),
        config: serde_json::to_value(config).expect("config serializes"),
    };
    let path = writer.dir().join("run_report.json");
    match serde_json::to_vec_pretty(&report) {
        Ok(bytes) => {
            if let Err(e) = std::fs::write(&path, bytes) {
                eprintln!("warning: cannot write report {}: {e}", path.display());
            }
        }
        Err(e) => eprintln!("warning: cannot serialize report: {e}"),
    }
}
