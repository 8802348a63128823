//! `segsamp` — design variable-density sampling patterns, synthesize phantom
//! acquisitions, reconstruct, and evaluate the sampling strategies.
//!
//! Exit codes: 0 success, 2 usage error (clap), 3 validation error,
//! 4 numerical or I/O failure.

mod commands;

use clap::{Parser, Subcommand};
use segsamp::SegError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "segsamp", version, about = "Segregated k-space sampling toolkit")]
struct Cli {
    /// Worker threads for candidate evaluation and seed replicas
    /// (0 = rayon default). Requires the `parallel` build.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design a variable-density sampling probability and export it.
    Density {
        /// Grid as NYxNZ, e.g. 256x256.
        #[arg(long, default_value = "256x256")]
        grid: String,
        /// Target acceleration factor.
        #[arg(long = "R")]
        r: f64,
        /// Polynomial degree (defaults to the per-R table).
        #[arg(long)]
        degree: Option<u32>,
        /// Fully sampled central radius fraction (defaults to the per-R rule).
        #[arg(long)]
        center_fraction: Option<f64>,
        /// Output directory.
        #[arg(long, default_value = "out/density")]
        out: PathBuf,
    },
    /// Generate a pattern set and export masks, manifest and coverage.
    Patterns {
        #[arg(long, default_value = "256x256")]
        grid: String,
        #[arg(long = "R")]
        r: f64,
        /// Number of acquisitions.
        #[arg(long = "N")]
        n: usize,
        /// random | low_corr | segregated.
        #[arg(long, default_value = "segregated")]
        strategy: String,
        /// Segregation strength (segregated only).
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        /// Monte-Carlo candidates per pattern.
        #[arg(long, default_value_t = 1000)]
        candidates: usize,
        #[arg(long, default_value_t = 1234)]
        seed: u64,
        #[arg(long, default_value = "out/patterns")]
        out: PathBuf,
    },
    /// Sweep random vs segregated coverage deltas over (R, N).
    SweepTable1 {
        #[arg(long, default_value = "256x256")]
        grid: String,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 1234)]
        master_seed: u64,
        #[arg(long, default_value_t = 1000)]
        candidates: usize,
        /// Output CSV path.
        #[arg(long, default_value = "out/table1.csv")]
        out: PathBuf,
    },
    /// Render phantom acquisitions, undersample, add noise, store datasets.
    Simulate {
        #[arg(long, default_value = "128x128")]
        grid: String,
        /// bssfp | t1_spin_echo | t2_multi_echo.
        #[arg(long, default_value = "bssfp")]
        protocol: String,
        #[arg(long = "N")]
        n: usize,
        /// Pattern directory from `patterns` (omit to store fully sampled data).
        #[arg(long)]
        patterns: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        noise_variance: f64,
        #[arg(long, default_value_t = 1234)]
        seed: u64,
        #[arg(long, default_value = "out/sim")]
        out: PathBuf,
    },
    /// Reconstruct stored datasets (zero-filled or profile encoding).
    Recon {
        /// Directory produced by `simulate`.
        #[arg(long)]
        input: PathBuf,
        /// zf | pe.
        #[arg(long, default_value = "zf")]
        method: String,
        /// PE parameters as JSON (file path), optional.
        #[arg(long)]
        pe_config: Option<PathBuf>,
        #[arg(long, default_value = "out/recon")]
        out: PathBuf,
    },
    /// Compare reconstructions against the stored reference.
    Evaluate {
        /// Directory produced by `recon`.
        #[arg(long)]
        recon: PathBuf,
        /// Directory produced by `simulate` (holds the reference images).
        #[arg(long)]
        reference: PathBuf,
        /// combined_pnorm | combined_mean | per_contrast.
        #[arg(long, default_value = "combined_pnorm")]
        mode: String,
        /// Output CSV path; a JSON twin is written next to it.
        #[arg(long, default_value = "out/quality.csv")]
        out: PathBuf,
    },
    /// End-to-end experiment from a JSON config.
    Experiment {
        /// ExperimentConfig JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Report directory (defaults to the config's stem under $SEGSAMP_OUT
        /// or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    #[cfg(feature = "parallel")]
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: failed to size the worker pool: {e}");
            return ExitCode::from(3);
        }
    }
    #[cfg(not(feature = "parallel"))]
    if cli.threads > 1 {
        log::warn!("built without the `parallel` feature; --threads ignored");
    }

    let result = match cli.command {
        Command::Density { grid, r, degree, center_fraction, out } => {
            commands::cmd_density(&grid, r, degree, center_fraction, &out)
        }
        Command::Patterns { grid, r, n, strategy, mu, candidates, seed, out } => {
            commands::cmd_patterns(&grid, r, n, &strategy, mu, candidates, seed, &out)
        }
        Command::SweepTable1 { grid, seeds, master_seed, candidates, out } => {
            commands::cmd_sweep_table1(&grid, seeds, master_seed, candidates, &out)
        }
        Command::Simulate { grid, protocol, n, patterns, noise_variance, seed, out } => {
            commands::cmd_simulate(&grid, &protocol, n, patterns.as_deref(), noise_variance, seed, &out)
        }
        Command::Recon { input, method, pe_config, out } => {
            commands::cmd_recon(&input, &method, pe_config.as_deref(), &out)
        }
        Command::Evaluate { recon, reference, mode, out } => {
            commands::cmd_evaluate(&recon, &reference, &mode, &out)
        }
        Command::Experiment { config, out } => commands::cmd_experiment(&config, out.as_deref()),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                SegError::Invalid(_)
                | SegError::InfeasibleR { .. }
                | SegError::OutOfGrid { .. }
                | SegError::GridMismatch(_)
                | SegError::Format(_) => 3,
                SegError::Numerical(_) | SegError::Io(_) => 4,
            };
            ExitCode::from(code)
        }
    }
}
