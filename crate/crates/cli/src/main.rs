use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use pstoch::config::{RawConfig, RunConfig, ENV_PREFIX};
use pstoch::invariants::{check_invariants, InvariantOptions};
use pstoch::runner::{compare_csv, metadata_path, run, write_output};

/// Positive-P stochastic simulation of a two-level atom in a cavity, with
/// master-equation and Maxwell-Bloch references.
///
/// Any configuration key can be overridden from the environment as
/// PSTOCH_<SECTION>__<KEY>, e.g. PSTOCH_RUN__RUNS=500. Command-line flags
/// take precedence over the environment, which takes precedence over the file.
#[derive(Parser)]
#[command(name = "pstoch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured engine and write a CSV plus a `.meta.json` sidecar.
    Run {
        /// Configuration file.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        /// Worker threads (0 = available parallelism).
        #[arg(long)]
        workers: Option<usize>,
        /// Output CSV; overrides `[run] output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report max-abs and RMS deviation per shared column of two CSV files.
    Compare { a: PathBuf, b: PathBuf },
    /// Run the randomized property suites and print a JSON report.
    CheckInvariants {
        /// Random points per check.
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(
    path: &Path,
    seed: Option<u64>,
    runs: Option<usize>,
    workers: Option<usize>,
    out: Option<&Path>,
) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut raw = RawConfig::parse(&text).with_context(|| format!("in {}", path.display()))?;
    raw.apply_env(std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)))?;
    if let Some(v) = seed {
        raw.set("run", "seed", v.to_string())?;
    }
    if let Some(v) = runs {
        raw.set("run", "runs", v.to_string())?;
    }
    if let Some(v) = workers {
        raw.set("run", "workers", v.to_string())?;
    }
    if let Some(p) = out {
        raw.set("run", "output", p.to_string_lossy())?;
    }
    Ok(raw.build().with_context(|| format!("in {}", path.display()))?)
}

fn execute(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            seed,
            runs,
            workers,
            out,
        } => {
            let cfg = load_config(&config, seed, runs, workers, out.as_deref())?;
            let Some(out) = cfg.output.clone() else {
                bail!("no output path: pass --out or set [run] output");
            };
            log::info!("running {} engine", cfg.engine.name());
            let output = run(&cfg)?;
            write_output(&output, &out).with_context(|| format!("writing {}", out.display()))?;
            let meta = &output.metadata;
            if cfg.engine.is_stochastic() {
                log::info!("{} of {} paths diverged", meta.runs_diverged, meta.runs_requested);
            }
            if meta.bloch_violations > 0 {
                eprintln!("Bloch bound exceeded at {} grid points", meta.bloch_violations);
            }
            eprintln!("wrote {} and {}", out.display(), metadata_path(&out).display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { a, b } => {
            let rows = compare_csv(&a, &b)?;
            let width = rows.iter().map(|r| r.column.len()).max().unwrap_or(6).max(6);
            println!("{:width$}  {:>24}  {:>24}", "column", "max_abs", "rms");
            for r in rows {
                println!("{:width$}  {:>24e}  {:>24e}", r.column, r.max_abs, r.rms);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckInvariants { points, seed, out } => {
            let report = check_invariants(&InvariantOptions {
                points,
                seed,
                ..InvariantOptions::default()
            });
            let json = report.to_json();
            match out {
                Some(p) => std::fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{json}"),
            }
            for suite in &report.suites {
                eprintln!("{:20} {}", suite.name, if suite.passed { "pass" } else { "FAIL" });
            }
            Ok(if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
