//! Command-line entry point: derivation, reduction, kernel analytics,
//! simulation and verification.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;

#[derive(Parser, Debug)]
#[command(name = "stocm", version, about = "Stochastic slow manifolds of a noisy Burgers-type SPDE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Construct the slow manifold and amplitude evolution.
    Derive(DeriveArgs),
    /// Replace quadratic noise terms by Markovian drift and effective noise.
    Reduce(ReduceArgs),
    /// Exact memory kernels, covariances and factors of a convolution chain.
    Kernels(KernelsArgs),
    /// Headline weak-model constants for a noise cutoff.
    Coeffs(CoeffsArgs),
    /// Simulate an ensemble and write sampled paths as CSV.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo verification suite; exits 1 if any check fails.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Args, Debug)]
struct DeriveArgs {
    /// Amplitude error order P: terms O(a^P) are neglected.
    #[arg(long, default_value_t = 4)]
    order_a: u32,
    /// Noise error order Q: terms O(σ^Q) are neglected. Needs P > Q >= 1.
    #[arg(long, default_value_t = 2)]
    order_sigma: u32,
    /// Number of forced modes K.
    #[arg(long, default_value_t = 4)]
    modes: u32,
    /// Format of standard output.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write the model JSON here (relative to $STOCM_OUTPUT_DIR if set).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReduceArgs {
    /// Reduced-model JSON written by `derive`.
    model: PathBuf,
    /// Write the weak-model JSON here (relative to $STOCM_OUTPUT_DIR if set).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format of standard output.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
enum KernelItem {
    /// Kernels h_m(t).
    H,
    /// Diffusion matrix D.
    #[value(name = "D", alias = "d")]
    D,
    /// Factor L with L Lᵀ = 2D.
    #[value(name = "L", alias = "l")]
    L,
    /// Stationary precision M of the chain states, M⁻¹ = 4D.
    #[value(name = "G0", alias = "g0")]
    G0,
    /// Kernel Gram matrix ∫ h_k h_m dt.
    Cov,
}

#[derive(Args, Debug)]
struct KernelsArgs {
    /// Decay rates β, innermost convolution first, e.g. `3,8`.
    #[arg(long)]
    chain: String,
    /// Items to show.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "h,D,L,G0,cov")]
    show: Vec<KernelItem>,
    /// Format of standard output.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write the JSON here (relative to $STOCM_OUTPUT_DIR if set).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoeffsArgs {
    /// Number of forced modes K.
    #[arg(long = "K", alias = "modes", default_value_t = 3)]
    modes: u32,
    /// Format of standard output.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum System {
    /// Spectral Galerkin truncation of the SPDE.
    Spde,
    /// Amplitude evolution with auxiliary states for memory convolutions.
    Strong,
    /// Markovian weak model.
    Weak,
    /// Canonical hierarchy of quadratic noise.
    Hierarchy,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Time step.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Final time.
    #[arg(long, default_value_t = 50.0)]
    horizon: f64,
    /// Number of trajectories.
    #[arg(long, default_value_t = 10_000)]
    trajectories: usize,
    /// Seed; trajectory i draws from ChaCha8 stream i of this seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads [default: all cores]. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    system: System,
    #[command(flatten)]
    sim: SimArgs,
    /// Noise strength σ.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Number of forced modes K (SPDE modes, or the cutoff of a derived model).
    #[arg(long, default_value_t = 8)]
    modes: u32,
    /// Model JSON for `strong` (reduced model) or `weak` (reduced or weak model).
    /// Without it the model is derived with --order-a, --order-sigma and --modes.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Amplitude order used when deriving a model.
    #[arg(long, default_value_t = 6)]
    order_a: u32,
    /// Noise order used when deriving a model.
    #[arg(long, default_value_t = 3)]
    order_sigma: u32,
    /// Hierarchy decay rates β, innermost first.
    #[arg(long, alias = "beta", default_value = "3")]
    chain: String,
    /// Hierarchy noise identity: 1 drives both ends with the same noise, 0 with independent ones.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    s: u8,
    /// Record every this many steps.
    #[arg(long, default_value_t = 1000)]
    record_every: usize,
    /// Initial state, leading components; the rest start at zero.
    #[arg(long, value_delimiter = ',')]
    initial: Vec<f64>,
    /// Blow-up bound on any state component.
    #[arg(long, default_value_t = 1e3)]
    blowup_bound: f64,
    /// Write the CSV here (relative to $STOCM_OUTPUT_DIR if set); stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SuiteArg {
    Drift,
    Covariance,
    Decorrelation,
    Fidelity,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(value_enum)]
    suite: SuiteArg,
    /// Hierarchy decay rates β, innermost first.
    #[arg(long, alias = "beta", default_value = "3")]
    chain: String,
    /// Hierarchy noise identity (1 same, 0 independent).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    s: u8,
    /// Time step [default: 1e-3 for hierarchy suites, 2e-3 (SPDE) and 1e-2 (weak model) for fidelity].
    #[arg(long)]
    dt: Option<f64>,
    /// Final time [default: 50 for hierarchy suites, 200 for fidelity].
    #[arg(long)]
    horizon: Option<f64>,
    /// Number of trajectories [default: 10000 for hierarchy suites, 200 for fidelity].
    #[arg(long)]
    trajectories: Option<usize>,
    /// Seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads [default: all cores]. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Fidelity: number of SPDE modes and model cutoff.
    #[arg(long, default_value_t = 8)]
    modes: u32,
    /// Fidelity: noise strength of the second-moment comparison.
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    /// Fidelity: noise strength of the histogram run.
    #[arg(long, default_value_t = 0.5)]
    histogram_sigma: f64,
    /// Format of standard output.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write the report JSON here (relative to $STOCM_OUTPUT_DIR if set).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit status 2 for unusable input, 1 for failed runs or checks.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
    /// Checks failed; the report has already been printed.
    ChecksFailed,
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Failure(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => f.write_str(m),
            CliError::ChecksFailed => f.write_str("verification failed"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Derive(a) => commands::derive(a),
        Command::Reduce(a) => commands::reduce(a),
        Command::Kernels(a) => commands::kernels(a),
        Command::Coeffs(a) => commands::coeffs(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::ChecksFailed) => ExitCode::from(1),
        Err(e @ CliError::Failure(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e @ CliError::Usage(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
