//! `der` — train, compare, and plot cooperative Q-learning runs.
//!
//! Exit codes: 0 on success, 1 for configuration problems (bad flags,
//! unreadable or invalid config, unknown modes), 2 for runtime failures
//! (training errors, unwritable outputs, malformed metrics files).

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use der_core::config::RunConfig;
use der_core::plot::plot_files;
use der_core::runner::{compare_run, train_run};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "der", version, about = "Cooperative Q-learning with divided experience replay")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one run and write metrics, config snapshot, and checkpoint.
    Train {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for this run.
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
    },
    /// Sweep modes x seeds and aggregate the evaluation curves.
    Compare {
        /// TOML run configuration (its `mode` is overridden per sweep).
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated update modes.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "joint-baseline,divide-only,der"
        )]
        modes: Vec<String>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        /// Output directory for the sweep.
        #[arg(long, default_value = "runs/compare")]
        out: PathBuf,
    },
    /// Render greedy-return curves from metrics files into an SVG.
    Plot {
        /// Comma-separated metrics.csv paths or directories (searched
        /// recursively); sibling seed runs are drawn as one mean line
        /// with a 25-75% band.
        #[arg(long = "in", value_delimiter = ',', num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    /// Anything wrong with what the user asked for.
    Config(String),
    /// Anything that failed while doing it.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

fn load_config(path: &PathBuf) -> Result<RunConfig, CliError> {
    RunConfig::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn train_cmd(config: PathBuf, seed: Option<u64>, out: PathBuf) -> Result<(), CliError> {
    let cfg = load_config(&config)?;
    let seed = seed.unwrap_or(cfg.seed);
    let summary = train_run(&cfg, seed, &out).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "trained {} for {} steps ({} episodes, {} updates), seed {}",
        cfg.mode, summary.t_steps, summary.episodes, summary.updates, seed
    );
    for (i, ret) in summary.eval_returns.iter().enumerate() {
        println!("eval[{i}] t={} return={ret}", (i as u64 + 1) * cfg.eval_every);
    }
    println!("metrics: {}", summary.metrics_path.display());
    println!("checkpoint: {}", summary.checkpoint_path.display());
    Ok(())
}

fn compare_cmd(
    config: PathBuf,
    modes: Vec<String>,
    seeds: Vec<u64>,
    out: PathBuf,
) -> Result<(), CliError> {
    let cfg = load_config(&config)?;
    // Validate every requested mode before spending time training any.
    for m in &modes {
        m.parse::<der_core::trainer::DivideMode>()
            .map_err(CliError::Config)?;
    }
    let summary =
        compare_run(&cfg, &modes, &seeds, &out).map_err(|e| CliError::Runtime(e.to_string()))?;
    for m in &summary.modes {
        if let Some(&(t, mean, p25, p75)) = m.points.last() {
            println!(
                "{}: final eval at t={t}: mean={mean:.3} p25={p25:.3} p75={p75:.3} ({} seeds)",
                m.mode,
                m.seeds.len()
            );
        }
    }
    println!("summary: {}", summary.summary_path.display());
    Ok(())
}

fn plot_cmd(inputs: Vec<PathBuf>, out: PathBuf) -> Result<(), CliError> {
    let svg = plot_files(&inputs).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(&out, svg)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.cmd {
        Cmd::Train { config, seed, out } => train_cmd(config, seed, out),
        Cmd::Compare { config, modes, seeds, out } => compare_cmd(config, modes, seeds, out),
        Cmd::Plot { inputs, out } => plot_cmd(inputs, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
