use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nnc_core::runner::{
    emit_report, render_table, run_experiment, run_sweep, write_sweep_csv, Mode,
};
use nnc_core::RunConfig;

/// Noisy node classification experiments.
#[derive(Debug, Parser)]
#[command(name = "nnc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured mode.
        #[arg(long)]
        mode: Option<String>,
        /// Comma-separated seeds overriding the configured list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run once per value of a parameter grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            mode,
            seeds,
            out,
        } => {
            let mut cfg = load(&config)?;
            if let Some(m) = mode {
                cfg.mode = Mode::parse(&m)?;
            }
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            cfg.validate()?;
            let report = run_experiment(&cfg)?;
            let paths = emit_report(&report, &out)
                .with_context(|| format!("writing reports to {}", out.display()))?;
            print!("{}", render_table(&report));
            for p in paths {
                log::info!("wrote {}", p.display());
            }
            Ok(report.aborted() == 0)
        }
        Command::Sweep {
            config,
            param,
            grid,
            out,
        } => {
            let cfg = load(&config)?;
            let rows = run_sweep(&cfg, &param, &grid)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("sweep.csv");
            write_sweep_csv(&rows, &path)?;
            println!("{:>14}  {:>8}  {:>8}", param, "mean %", "std %");
            for r in &rows {
                println!(
                    "{:>14}  {:>8.2}  {:>8.2}",
                    r.value,
                    100.0 * r.report.mean,
                    100.0 * r.report.std
                );
            }
            Ok(rows.iter().all(|r| r.report.aborted() == 0))
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            if cfg.seeds.is_empty() {
                bail!("no seeds configured");
            }
            println!(
                "ok: mode {}, {} seed(s), {} round(s)",
                cfg.mode.as_str(),
                cfg.seeds.len(),
                cfg.rounds
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: at least one seed aborted");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
