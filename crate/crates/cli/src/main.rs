//! Command-line front end: noise synthesis, the two denoising pipelines,
//! offline basis construction and the benchmark harness.

mod bench;
mod config;
mod pipeline;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// A failure tagged with the pipeline stage it happened in.
pub(crate) struct CliError {
    pub stage: &'static str,
    pub source: msdenoise_core::Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.source)
    }
}

pub(crate) type CliResult<T = ()> = Result<T, CliError>;

/// Maps a core error into the named stage.
pub(crate) fn st(stage: &'static str) -> impl Fn(msdenoise_core::Error) -> CliError {
    move |source| CliError { stage, source }
}

#[derive(Parser, Debug)]
#[command(
    name = "msdenoise",
    version,
    about = "PDE image denoiser with a multiscale coarse solver"
)]
struct Cli {
    /// Worker threads for the offline stage; 0 uses all cores.
    /// MSDENOISE_THREADS applies when the flag is absent.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic geometric test image.
    Generate(GenerateArgs),
    /// Add seeded Gaussian noise to an image and report the resulting RRMSE.
    AddNoise(AddNoiseArgs),
    /// Run the fine or multiscale denoising pipeline.
    Denoise(DenoiseArgs),
    /// Offline stage only: build a multiscale basis and save it.
    Basis(BasisArgs),
    /// Sweep noise levels and basis counts over a list of test images.
    Bench(BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub(crate) enum Method {
    /// Full-resolution implicit solver.
    Fine,
    /// Multiscale coarse solver.
    Ms,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub(crate) enum Kind {
    Gray,
    Color,
}

#[derive(Args, Debug)]
pub(crate) struct GenerateArgs {
    /// Scene variant.
    #[arg(long, value_enum, default_value = "gray")]
    pub kind: Kind,
    #[arg(long, default_value_t = 512)]
    pub width: usize,
    #[arg(long, default_value_t = 512)]
    pub height: usize,
    /// Output path (.png, .pgm or .ppm).
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub(crate) struct AddNoiseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Noise standard deviation relative to the channel RMS.
    #[arg(long)]
    pub level: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub(crate) struct DenoiseArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Flat key=value config file; explicit flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Clean reference image; enables metric reporting.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Per-iteration metric log (step,t,rrmse,ssim,psnr).
    #[arg(long, requires = "reference")]
    pub metrics_csv: Option<PathBuf>,
    /// Edge-stopping threshold.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Diffusion end time.
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Implicit time steps; defaults to 40 (fine) or 5 (ms).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Coarse cell edge length in pixels.
    #[arg(long)]
    pub coarse_cell: Option<usize>,
    /// Basis functions per coarse node.
    #[arg(long)]
    pub bases: Option<usize>,
    /// End time of the local pre-denoise.
    #[arg(long)]
    pub local_t_max: Option<f64>,
    /// Step count of the local pre-denoise.
    #[arg(long)]
    pub local_steps: Option<usize>,
    /// Reuse a saved basis instead of running the offline stage.
    #[arg(long)]
    pub basis_file: Option<PathBuf>,
    #[arg(long)]
    pub cg_tol: Option<f64>,
    #[arg(long)]
    pub cg_max_iter: Option<usize>,
    #[arg(long)]
    pub eigen_tol: Option<f64>,
}

#[derive(Args, Debug)]
pub(crate) struct BasisArgs {
    /// Noisy image whose luminance drives the offline stage.
    #[arg(long)]
    pub input: PathBuf,
    /// Output basis file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub coarse_cell: Option<usize>,
    #[arg(long)]
    pub bases: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub local_t_max: Option<f64>,
    #[arg(long)]
    pub local_steps: Option<usize>,
    #[arg(long)]
    pub cg_tol: Option<f64>,
    #[arg(long)]
    pub cg_max_iter: Option<usize>,
    #[arg(long)]
    pub eigen_tol: Option<f64>,
}

#[derive(Args, Debug)]
pub(crate) struct BenchArgs {
    /// Config file listing images, noise levels and basis counts.
    #[arg(long)]
    pub config: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = setup_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Generate(a) => pipeline::run_generate(a),
        Command::AddNoise(a) => pipeline::run_add_noise(a),
        Command::Denoise(a) => pipeline::run_denoise(a),
        Command::Basis(a) => pipeline::run_basis(a),
        Command::Bench(a) => bench::run_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn setup_threads(flag: Option<usize>) -> msdenoise_core::Result<()> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("MSDENOISE_THREADS") {
            Ok(raw) => raw.trim().parse().map_err(|_| {
                msdenoise_core::Error::InvalidParameter(format!(
                    "MSDENOISE_THREADS = {raw:?} is not a thread count"
                ))
            })?,
            Err(_) => 0,
        },
    };
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| {
                msdenoise_core::Error::InvalidParameter(format!("cannot size thread pool: {e}"))
            })?;
    }
    Ok(())
}
