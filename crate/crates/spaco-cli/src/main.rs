use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use spaco_cli::config::{Config, KEY_REFERENCE};
use spaco_cli::experiments;

/// Experiment runner for penalty-smoothed constrained minimax solvers.
#[derive(Parser)]
#[command(name = "spaco", version, after_long_help = KEY_REFERENCE)]
struct Cli {
    /// Path to a flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed, overriding the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, overriding the config and the SPACO_OUT_DIR
    /// environment variable.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Worker threads for independent runs (default: one per run, capped
    /// by the machine).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Repeated seeded runs with per-run trace CSVs and an aggregate CSV.
    Converge,
    /// Grid of initial points classified by which stationary point the
    /// solver reaches.
    Basin,
    /// Hyperparameter sweep tabulating iterations to the target error.
    Ablate,
    /// Oracle and property smoke suite over the bundled benchmarks.
    Check,
}

fn main() -> Result<()> {
    let cli = Cli::parse();

    let mut cfg = match &cli.config {
        Some(path) => Config::from_file(path)?,
        None => Config::empty(),
    };
    if let Some(seed) = cli.seed {
        cfg.set("seed", seed.to_string());
    }

    let out_dir = cli
        .out_dir
        .or_else(|| std::env::var_os("SPACO_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(cfg.str_or("out_dir", "out")));
    // Consume the key even when a flag or the environment overrides it.
    let _ = cfg.str_or("out_dir", "out");
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    match cli.command {
        Command::Converge => {
            let outcome = experiments::run_convergence(&cfg, &out_dir, threads)?;
            for path in &outcome.files {
                println!("wrote {}", path.display());
            }
        }
        Command::Basin => {
            let outcome = experiments::run_basin_grid(&cfg, &out_dir, threads)?;
            let mut tally = std::collections::BTreeMap::new();
            for cell in &outcome.cells {
                *tally.entry(cell.class.to_string()).or_insert(0usize) += 1;
            }
            for (class, count) in tally {
                println!("{class}: {count} cells");
            }
            println!("wrote {}", outcome.file.display());
        }
        Command::Ablate => {
            let outcome = experiments::run_ablation(&cfg, &out_dir, threads)?;
            for row in &outcome.rows {
                println!(
                    "{}: mean {:.0} +- {:.0} iterations ({}/{} reached the target)",
                    row.variant,
                    row.mean_iterations,
                    row.std_iterations,
                    row.successes,
                    row.runs
                );
            }
            println!("wrote {}", outcome.file.display());
        }
        Command::Check => {
            let (lines, ok) = experiments::run_check();
            for line in &lines {
                println!("{line}");
            }
            if !ok {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
