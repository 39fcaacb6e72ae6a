//! `sqzopt` — pulsed optomechanical squeezing: simulate, optimize, survey.
//!
//! Everything is configured through a TOML file plus `--override` pairs;
//! every artifact embeds the fully resolved config and seed so a run can be
//! reproduced from its outputs alone.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::ExperimentConfig;

/// Errors split by exit code: 2 for configuration problems (bad TOML,
/// schema violations, unphysical values), 3 for numeric failures.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "sqzopt",
    version,
    about = "Pulsed optomechanical squeezing: covariance simulation and Bayesian pulse optimization",
    long_about = "Simulates pulsed cavity-optomechanical dynamics (6x6 covariance propagation, \
                  kappa = 1 units) and maximizes two-mode squeezing of the mechanics + output \
                  light with a Gaussian-process Bayesian optimizer.\n\n\
                  Configuration comes from a TOML file (--config), tweaked by repeatable \
                  --override key=value flags (dotted keys, TOML-typed values, unknown keys \
                  rejected). Every artifact embeds the resolved config and seed. Exit codes: \
                  0 success, 2 configuration error, 3 numeric failure."
)]
struct Cli {
    /// TOML experiment configuration (omit to run on built-in defaults)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Base RNG seed (overrides run.seed)
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Number of independently seeded optimization repeats (overrides run.repeats)
    #[arg(long, global = true, value_name = "N")]
    repeats: Option<usize>,

    /// Output directory (overrides run.out_dir, then $SQZOPT_OUT_DIR, then ./sqzopt-runs)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Set one config key, e.g. --override system.n_th=1e10 (repeatable)
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one explicit pulse and record V, lambda_min, S_gen
    #[command(long_about = "Integrates the covariance dynamics for the pulse in [pulse] \
        (fields: g, tau, gain_proportion, detuning_offset, optional fout knot list; fout \
        defaults to the matched constant-coupling envelope) and writes simulate.json with \
        the 4x4 mechanics+output covariance, its minimum eigenvalue, and the generalized \
        squeezing in dB.")]
    Simulate,

    /// Optimize the configured pulse layout with seeded repeats
    #[command(long_about = "Runs run.repeats Bayesian-optimization repeats (seeds run.seed, \
        run.seed+1, ...) over the run.layout search space and writes:\n  \
        evaluations.jsonl  one record per objective evaluation (run_index, eval_index, \
        vector, lambda_min, s_gen, status) after a header line\n  \
        summary.json       per-run bests plus min/mean/max over repeats, the winning \
        vector and seed, a histogram, and parameter means with +/-5 SE bands\n  \
        run_meta.json      wall-clock times and incumbent traces (the only artifact \
        allowed to differ between identical runs)\n\
        Re-running with the same seed overwrites evaluations.jsonl and summary.json \
        byte-identically.")]
    Optimize,

    /// Sweep the reheating rate and re-optimize at each point
    #[command(long_about = "Optimizes the run.layout pulse at each sweep.gamma_heat value \
        (occupancy set per regime) and writes sweep.csv + sweep.json.\n\
        sweep.csv columns:\n  \
        gamma_heat  reheating rate in kappa units\n  \
        best_dB     best signed squeezing over repeats (negative = no squeezing)\n  \
        mean_dB     mean over repeats\n\
        A sweep.csv.meta.json sidecar embeds the resolved config.")]
    Sweep,

    /// Optimize under noisy control evaluations, then re-score noiselessly
    #[command(long_about = "Same repeat structure as `optimize`, but each objective \
        evaluation perturbs the decoded controls with relative Gaussian noise of width \
        noise.rel_sigma before simulating. Writes evaluations.jsonl, run_meta.json, and \
        noisy_summary.json; the summary adds each run's incumbent re-evaluated without \
        noise, their mean, and (when noise.n_reevaluate > 0) the best incumbent re-scored \
        under that many fresh noise draws with a histogram.")]
    Noisy,

    /// Probe whether a blind detection-angle search finds lambda_min
    #[command(long_about = "Simulates the [pulse] from a thermal start (n_0 = system.n_0) \
        and from a pre-cooled start (n_0 = detect.cooled_n_0), runs the detection-angle \
        search on both covariances, and writes detect_report.json (found angles, variance, \
        lambda_min, gap, trapped flag per case) plus landscape_thermal.csv and \
        landscape_cooled.csv.\n\
        Landscape CSV layout ((detect.grid_n + 1) rows x (detect.grid_n + 1) columns): \
        corner cell 'theta_c/theta_m', first row theta_m grid values, first column theta_c \
        grid values, body cells the min-over-phi generalized variance.")]
    Detect,

    /// Export the detection-angle variance landscape for one pulse
    #[command(long_about = "Simulates the [pulse] at the configured occupancy and writes \
        landscape.csv: (landscape.grid_n + 1) rows x (landscape.grid_n + 1) columns with \
        corner cell 'theta_c/theta_m', first row theta_m grid values (i*pi/grid_n), first \
        column theta_c grid values, body cells the min-over-phi generalized variance.")]
    Landscape,

    /// Summarize the artifacts in an output directory
    #[command(long_about = "Reads the known artifacts (simulate.json, summary.json, \
        noisy_summary.json, sweep.json, detect_report.json) from the output directory, \
        rejects files written under an unknown schema major version (exit 2), and prints \
        a one-screen digest.")]
    Report,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?;
    let out = cfg.resolve(cli.seed, cli.repeats, cli.out);
    cfg.validate()?;
    match cli.command {
        Command::Simulate => commands::cmd_simulate(&cfg, &out),
        Command::Optimize => commands::cmd_optimize(&cfg, &out),
        Command::Sweep => commands::cmd_sweep(&cfg, &out),
        Command::Noisy => commands::cmd_noisy(&cfg, &out),
        Command::Detect => commands::cmd_detect(&cfg, &out),
        Command::Landscape => commands::cmd_landscape(&cfg, &out),
        Command::Report => commands::cmd_report(&out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
