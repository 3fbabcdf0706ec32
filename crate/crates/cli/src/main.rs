//! `ctflow`: simulate low-dose CT data, train a conditional flow, reconstruct and evaluate.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data or runtime error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "ctflow", version, about = "Conditional normalizing flows for low-dose CT")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for the command's randomness (data, training, or sampling seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a paired low-dose dataset.
    GenData(GenDataArgs),
    /// Train a conditional flow on a dataset.
    Train(TrainArgs),
    /// Conditional-mean reconstruction and standard-deviation map for one measurement.
    Reconstruct(ReconstructArgs),
    /// PSNR/SSIM of conditional means and the FBP baseline on a dataset.
    Evaluate(EvaluateArgs),
    /// Filtered back-projection of a dataset or a single sinogram.
    Fbp(FbpArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Output dataset file; a manifest and the effective config are written beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    /// Phantom family: ellipses or shepp.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub photons_low: Option<f64>,
    #[arg(long)]
    pub photons_high: Option<f64>,
    #[arg(long)]
    pub angles: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the checkpoint, loss log and config echo.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Print a progress line every this many steps (0 = silent).
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Low-dose sinogram file (CTSN format).
    #[arg(long, conflicts_with_all = ["data", "pair_index"])]
    pub sinogram: Option<PathBuf>,
    /// Dataset to take the measurement from, together with --pair-index.
    #[arg(long, requires = "pair_index")]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub pair_index: Option<usize>,
    /// Number of posterior samples.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated sample counts, e.g. 1,10,100.
    #[arg(long)]
    pub n_list: Option<String>,
    /// Evaluate only the first this many pairs.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FbpArgs {
    #[arg(long, conflicts_with = "sinogram", required_unless_present = "sinogram")]
    pub data: Option<PathBuf>,
    /// Sinogram file (CTSN); its geometry comes from the config.
    #[arg(long)]
    pub sinogram: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
