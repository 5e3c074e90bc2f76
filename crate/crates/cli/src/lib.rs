//! Batch front end: configuration, reports, snapshots and exit codes.
//!
//! Exit codes: 0 success (all checks pass), 1 check failure or solver abort,
//! 2 invalid configuration or unreadable input.

pub mod commands;
pub mod config;
pub mod snapshot;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

use crate::config::{Cli, Command, RunConfig};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unreadable input: {0}")]
    Input(String),
    #[error("cannot write output: {0}")]
    Output(String),
    #[error("solver aborted: {0}")]
    Solver(#[from] leraylab::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(_) => 1,
            _ => 2,
        }
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub message: String,
}

/// One JSON record per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    let err = |e: String| CliError::Output(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(|e| err(e.to_string()))?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| err(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| err(e.to_string()))?;
    }
    w.flush().map_err(|e| err(e.to_string()))
}

fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&width)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = vec![line(headers.to_vec())];
    out.push(width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for r in rows {
        out.push(line(r.iter().map(String::as_str).collect()));
    }
    out.join("\n")
}

/// Print a summary table and save it with a timestamped header (the only
/// place a timestamp appears).
pub fn write_summary(path: &Path, title: &str, headers: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let body = table(headers, rows);
    println!("{title}\n{body}");
    std::fs::write(path, format!("# {title}\n# generated at unix time {stamp}\n{body}\n"))
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

/// Cap rayon's pool from `LERAYLAB_THREADS`.
pub fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("LERAYLAB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("LERAYLAB_THREADS must be a positive integer, got {v:?}")))?;
        // A pool that already exists (tests) is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    init_threads()?;
    match &cli.command {
        Command::Verify(a) => commands::cmd_verify(&RunConfig::for_verify(a)?),
        Command::Solve(a) => commands::cmd_solve(&RunConfig::for_solve(a)?),
        Command::Decay(a) => commands::cmd_decay(&RunConfig::for_decay(a)?),
    }
}

/// Run and map the result to a process exit code.
pub fn run_to_exit(cli: &Cli) -> u8 {
    match run(cli) {
        Ok(o) if o.passed => {
            log::info!("{}", o.message);
            0
        }
        Ok(o) => {
            eprintln!("check failed: {}", o.message);
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
