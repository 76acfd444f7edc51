use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lyapunov_core::harness::{load_config, run_experiment, Experiment, HarnessError, Overrides};

/// Numerical experiments on Lyapunov exponents of random matrix products.
#[derive(Debug, Parser)]
#[command(name = "lyaplab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Master seed (overrides `params.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lyapunov spectrum by QR iteration.
    Spectrum(RunArgs),
    /// Exact 1-Wasserstein distance between two measures.
    Wasserstein(RunArgs),
    /// Permutation walk and aperiodicity of a block-conformal measure.
    Structure(RunArgs),
    /// Spectral radius and TV decay of the permutation walk.
    Mixing(RunArgs),
    /// Norm-centering weights.
    Centering(RunArgs),
    /// Slope increments and the telescoping check.
    Slopes(RunArgs),
    /// Berry–Esseen gaps of the slope walk.
    BerryEsseen(RunArgs),
    /// Region occupancy of the projective walk.
    Occupancy(RunArgs),
    /// Orbit equidistribution gaps.
    Equidistribution(RunArgs),
    /// Convergence of the mean drift.
    DriftGap(RunArgs),
    /// Spectrum differences against transport distance along a family.
    Modulus(RunArgs),
    /// Balancing arithmetic of the continuity bound.
    Bound(RunArgs),
}

impl Command {
    fn split(self) -> (Experiment, RunArgs) {
        match self {
            Command::Spectrum(a) => (Experiment::Spectrum, a),
            Command::Wasserstein(a) => (Experiment::Wasserstein, a),
            Command::Structure(a) => (Experiment::Structure, a),
            Command::Mixing(a) => (Experiment::Mixing, a),
            Command::Centering(a) => (Experiment::Centering, a),
            Command::Slopes(a) => (Experiment::Slopes, a),
            Command::BerryEsseen(a) => (Experiment::BerryEsseen, a),
            Command::Occupancy(a) => (Experiment::Occupancy, a),
            Command::Equidistribution(a) => (Experiment::Equidistribution, a),
            Command::DriftGap(a) => (Experiment::DriftGap, a),
            Command::Modulus(a) => (Experiment::Modulus, a),
            Command::Bound(a) => (Experiment::Bound, a),
        }
    }
}

fn run(experiment: Experiment, args: RunArgs) -> Result<Vec<PathBuf>, HarnessError> {
    let overrides = Overrides {
        experiment: Some(experiment),
        seed: args.seed,
        output_dir: args.output,
    };
    let cfg = load_config(&args.config, &overrides)?;
    match args.threads {
        Some(0) => Err(HarnessError::Config("--threads: must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Config(format!("--threads: {e}")))?
            .install(|| run_experiment(&cfg)),
        None => run_experiment(&cfg),
    }
}

fn main() -> ExitCode {
    let (experiment, args) = Cli::parse().command.split();
    match run(experiment, args) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("lyaplab {experiment}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
