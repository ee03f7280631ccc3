//! `pgnniv`: data generation, training, transfer, evaluation and sweeps.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 when a
//! run fails numerically (divergence, non-converging decomposition).

mod aggregate;
mod commands;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pgnniv::{DecoderKind, Material};

#[derive(Parser)]
#[command(
    name = "pgnniv",
    version,
    about = "Physically-guided neural networks with internal variables for 2-D nonlinear diffusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from the analytical solutions.
    Datagen(DatagenArgs),
    /// Pretrain an autoencoder on a dataset and save it for the `decoder_file` config field.
    PretrainAe(PretrainArgs),
    /// Train one model from a JSON run config.
    Train(TrainArgs),
    /// Train from a source checkpoint with a frozen or trainable encoder.
    Transfer(TransferArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Run every cell of a configuration grid and aggregate the reports.
    Sweep(SweepArgs),
    /// Print the parameter-count breakdown of an architecture.
    Params(ParamsArgs),
    /// Aggregate the report.json files found under a directory.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct OutRoot {
    /// Output root; relative file names are placed here.
    #[arg(long = "outdir", env = "PGNNIV_OUTDIR", default_value = ".")]
    pub root: PathBuf,
}

#[derive(Args)]
pub struct DatagenArgs {
    /// Material law: 1 or 2.
    #[arg(long, value_parser = parse_material)]
    pub material: Material,
    #[arg(long)]
    pub count: usize,
    /// Noise amplitude as a fraction of each sample's maximum.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; defaults to a descriptive name under the output root.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub root: OutRoot,
}

#[derive(Args)]
pub struct PretrainArgs {
    /// Dataset file written by `datagen`.
    #[arg(long)]
    pub data: PathBuf,
    /// Latent dimension.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 20_000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3e-3)]
    pub lr: f64,
    /// Epochs of a second phase at `--lr2`.
    #[arg(long, default_value_t = 0)]
    pub epochs2: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr2: f64,
    /// Seed of the split and the initialisation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// JSON run config.
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub root: OutRoot,
}

#[derive(Args)]
pub struct TransferArgs {
    /// JSON run config of the target problem.
    #[arg(long)]
    pub config: PathBuf,
    /// Checkpoint trained on the source problem.
    #[arg(long)]
    pub source: PathBuf,
    /// Keep every weight trainable instead of freezing the encoder.
    #[arg(long)]
    pub fine_tune: bool,
    #[command(flatten)]
    pub root: OutRoot,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset file; every sample is evaluated against its clean fields.
    #[arg(long)]
    pub data: PathBuf,
    /// Write the evaluation summary as JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the learned constitutive curve as CSV.
    #[arg(long)]
    pub kcurve: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    /// JSON grid: a `base` run config plus lists for any of D, mu, n, decoder, seed, material.
    #[arg(long)]
    pub grid: PathBuf,
    /// Number of cells run concurrently, one process each.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub root: OutRoot,
}

#[derive(Args)]
pub struct ParamsArgs {
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value = "baseline")]
    pub decoder: DecoderKind,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Directory searched recursively for report.json files.
    #[arg(long)]
    pub dir: PathBuf,
    /// Where the aggregate CSVs go; defaults to `--dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_material(s: &str) -> Result<Material, String> {
    let trimmed = s.trim_start_matches("material");
    trimmed
        .parse::<u32>()
        .ok()
        .and_then(Material::from_number)
        .ok_or_else(|| format!("unknown material '{s}' (valid: 1, 2)"))
}

/// Failure of a command, classified for the exit code.
pub enum Failure {
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.into())
    }
}

pub type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Datagen(a) => commands::datagen(a),
        Command::PretrainAe(a) => commands::pretrain_ae(a),
        Command::Train(a) => commands::train(a),
        Command::Transfer(a) => commands::transfer(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => sweep::run(a),
        Command::Params(a) => commands::params(a),
        Command::Report(a) => aggregate::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(2)
        }
    }
}
