//! `stochbif`: batch front end for the pitchfork and channel-flow studies.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod commands;
mod error;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "stochbif", version, about = "Stochastic Galerkin bifurcation detection")]
pub struct Cli {
    /// Key-value config file; keys are the long flag names.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory. Defaults to `$STOCHBIF_OUTPUT_ROOT/<command>`, or
    /// `stochbif-out/<command>` when the variable is unset.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for independent solves.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pitchfork normal form: an ensemble of solves, or a diagram sweep.
    Pitchfork(PitchforkCmd),
    /// Channel flow past a sudden expansion.
    Coanda {
        #[command(subcommand)]
        command: CoandaCommand,
    },
}

#[derive(Debug, Args)]
#[command(args_conflicts_with_subcommands = true, allow_negative_numbers = true)]
pub struct PitchforkCmd {
    #[command(subcommand)]
    pub sweep: Option<PitchforkSweepCmd>,
    #[command(flatten)]
    pub ensemble: PitchforkArgs,
}

#[derive(Debug, Subcommand)]
pub enum PitchforkSweepCmd {
    /// Probabilistic diagram over a range of parameter means.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct PitchforkArgs {
    /// `uniform` or `gaussian`.
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub mu_mean: Option<f64>,
    /// Half width of the uniform support.
    #[arg(long)]
    pub half_width: Option<f64>,
    /// Variance of the gaussian law.
    #[arg(long)]
    pub var: Option<f64>,
    #[arg(long)]
    pub npc: Option<usize>,
    #[arg(long)]
    pub inits: Option<usize>,
    /// Initial coefficients are uniform in `[-amplitude, amplitude]`.
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Samples per density estimate.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub prominence: Option<f64>,
}

#[derive(Debug, Clone, Args, Default)]
#[command(allow_negative_numbers = true)]
pub struct SweepArgs {
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub npc: Option<usize>,
    #[arg(long)]
    pub inits: Option<usize>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub prominence: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum CoandaCommand {
    /// Deterministic continuation diagram.
    Det(DetArgs),
    /// Coupled stochastic Galerkin solve.
    Ssfem(SsfemArgs),
    /// Monte Carlo ensemble of deterministic solves.
    Mc(McArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct FlowArgs {
    /// `coarse-unstructured`, `dense-unstructured` or `symmetric`.
    #[arg(long)]
    pub mesh: Option<String>,
    #[arg(long)]
    pub probe_x: Option<f64>,
    #[arg(long)]
    pub probe_y: Option<f64>,
    /// 0 for horizontal, 1 for vertical velocity.
    #[arg(long)]
    pub probe_component: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Args, Default)]
#[command(allow_negative_numbers = true)]
pub struct DetArgs {
    #[command(flatten)]
    pub flow: FlowArgs,
    #[arg(long)]
    pub mu_from: Option<f64>,
    #[arg(long)]
    pub mu_to: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    /// Overshoot of the branch seeds, in observable units.
    #[arg(long)]
    pub seed_amplitude: Option<f64>,
    #[arg(long)]
    pub distinct_tol: Option<f64>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct LawArgs {
    /// `uniform` or `gaussian`.
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub mu_mean: Option<f64>,
    /// Half width of the uniform support.
    #[arg(long)]
    pub half: Option<f64>,
    /// Variance of the gaussian law.
    #[arg(long)]
    pub var: Option<f64>,
}

#[derive(Debug, Clone, Args, Default)]
#[command(allow_negative_numbers = true)]
pub struct SsfemArgs {
    #[command(flatten)]
    pub flow: FlowArgs,
    #[command(flatten)]
    pub law: LawArgs,
    #[arg(long)]
    pub npc: Option<usize>,
    /// `noise`, `zero` or `critical`.
    #[arg(long)]
    pub init: Option<String>,
    /// Noise amplitude, or observable coefficient for `critical`.
    #[arg(long)]
    pub init_amplitude: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub prominence: Option<f64>,
}

#[derive(Debug, Clone, Args, Default)]
#[command(allow_negative_numbers = true)]
pub struct McArgs {
    #[command(flatten)]
    pub flow: FlowArgs,
    #[command(flatten)]
    pub law: LawArgs,
    #[arg(long)]
    pub n: Option<usize>,
    /// `zero`, `continuation` or `cycling`.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn run(cli: Cli) -> Result<commands::Outcome, CliError> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
                key: "config".into(),
                reason: format!("cannot read {}: {e}", path.display()),
            })?;
            settings::parse_config(&text)?
        }
        None => Default::default(),
    };
    commands::dispatch(cli, file)
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors; here usage errors are config errors
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(outcome) => {
            println!("{}", outcome.path.display());
            if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for f in &outcome.failures {
                    eprintln!("stochbif: numerical failure: {f}");
                }
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("stochbif: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
