//! Command-line driver: instance generation, estimation, evaluation and
//! parameter sweeps, with CSV output.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Bad flags or arguments (exit status 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "binlatent", version, about = "Spectral estimation of binary latent variable models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance (X, W, H and a JSON sidecar).
    Generate(GenerateArgs),
    /// Estimate W from a sample matrix.
    Learn(LearnArgs),
    /// Permutation-aligned error between two weight matrices.
    Eval(EvalArgs),
    /// Run a grid of (n, sigma, seed, method) experiments.
    Sweep(SweepArgs),
    /// Non-degeneracy diagnostics for a hidden-vector distribution.
    ConditionsCheck(ConditionsArgs),
    /// Enumerate the eigenpairs of a symmetric 3-tensor.
    TensorEig(TensorEigArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HiddenKind {
    /// Binary rounding of a Gaussian vector N(a·1, (1-rho)I + rho·11ᵀ).
    Gaussian,
    /// Uniform over the unit vectors e₁..e_d.
    Mixture,
    /// Continuous Beta(fix-a, fix-b) frequencies.
    Fixation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WeightKind {
    Sphere,
    Dirichlet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ObservationKind {
    Gaussian,
    Binomial,
}

#[derive(Args, Clone, Debug)]
pub struct InstanceArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, value_enum, default_value_t = HiddenKind::Gaussian)]
    pub hidden: HiddenKind,
    /// Mean of every coordinate of the Gaussian before rounding.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub hidden_mean: f64,
    /// Pairwise correlation of the Gaussian before rounding.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub hidden_corr: f64,
    #[arg(long, default_value_t = 0.02)]
    pub fix_a: f64,
    #[arg(long, default_value_t = 0.04)]
    pub fix_b: f64,
    #[arg(long, value_enum, default_value_t = WeightKind::Sphere)]
    pub weights: WeightKind,
    /// Dirichlet concentration for `--weights dirichlet`.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = ObservationKind::Gaussian)]
    pub observation: ObservationKind,
    /// Prepend the columns eᵢ and eᵢ+eⱼ to H.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub rigid_block: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Newton,
    Power,
    Both,
}

#[derive(Args, Clone, Debug)]
pub struct SolverArgs {
    /// Random starts; 100·2^d (capped at 10⁵) when absent.
    #[arg(long)]
    pub n_init: Option<usize>,
    #[arg(long, value_enum, default_value_t = SolverKind::Newton)]
    pub solver: SolverKind,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Selection {
    Ks,
    Likelihood,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Repair {
    Gaussian,
    Raw,
    Denoise,
}

#[derive(Args, Clone, Debug)]
pub struct EstimatorArgs {
    /// Candidate eigenvalue threshold; 5/√(n/2) when absent.
    #[arg(long)]
    pub lambda_thresh: Option<f64>,
    #[arg(long, value_enum, default_value_t = Selection::Ks)]
    pub selection: Selection,
    #[arg(long, value_enum, default_value_t = Repair::Gaussian)]
    pub repair: Repair,
    /// Hidden vectors kept per sample in the refinement step.
    #[arg(long, default_value_t = 6)]
    pub k_top: usize,
    #[arg(long, default_value_t = 500)]
    pub als_max_iter: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Bin,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Spectral,
    #[value(name = "spectral+wls")]
    SpectralWls,
    Als,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Spectral => "spectral",
            Method::SpectralWls => "spectral+wls",
            Method::Als => "als",
            Method::Oracle => "oracle",
        }
    }
}

#[derive(Args, Debug)]
pub struct LearnArgs {
    /// Sample matrix, features as rows (`.bin` for the binary format).
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Spectral)]
    pub method: Method,
    /// Latent dimension; estimated from the spectrum when absent.
    #[arg(long)]
    pub d: Option<usize>,
    /// Noise level; estimated from the spectrum when absent. Zero selects
    /// exact noiseless recovery.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// True hidden matrix, required by `--method oracle`.
    #[arg(long)]
    pub h: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub w_hat: PathBuf,
    #[arg(long)]
    pub w_true: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Comma-separated sample sizes.
    #[arg(long)]
    pub n_grid: String,
    /// Comma-separated noise levels; `--sigma` when absent.
    #[arg(long)]
    pub sigma_grid: Option<String>,
    /// Comma-separated seeds, or a range `a..b`.
    #[arg(long, default_value = "0")]
    pub seeds: String,
    /// Comma-separated methods: spectral, spectral+wls, als, oracle.
    #[arg(long, default_value = "spectral")]
    pub methods: String,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// CSV output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ConditionsArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Explicit distribution: lines `bits,probability`, e.g. `0110,0.25`.
    #[arg(long)]
    pub atoms: Option<PathBuf>,
    /// Use the empirical distribution of the columns of this hidden matrix.
    #[arg(long)]
    pub h: Option<PathBuf>,
    /// Draws used to tabulate a Gaussian-rounding law.
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1000)]
    pub probes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TensorEigArgs {
    /// Tensor file: `d` on the first line, then d² rows of d values.
    #[arg(long)]
    pub tensor: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Power-method shift; ±(1 + Σ|T|) alternating when absent.
    #[arg(long, allow_negative_numbers = true)]
    pub shift: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> (u8, &'static str, &'static str) {
    if err.downcast_ref::<UsageError>().is_some() {
        return (2, "usage", "usage");
    }
    if let Some(e) = err.downcast_ref::<binlatent::Error>() {
        return match e.kind() {
            binlatent::ErrorKind::Usage => (2, "usage", e.code()),
            binlatent::ErrorKind::Data => (3, "data", e.code()),
            binlatent::ErrorKind::Numerical => (4, "numerical", e.code()),
        };
    }
    if let Some(s) = err.downcast_ref::<commands::SweepFailure>() {
        return (s.exit, "partial_failure", "sweep");
    }
    (3, "data", "io")
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config::expand_config(argv) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = Cli::parse_from(argv);
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Learn(a) => commands::learn(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::ConditionsCheck(a) => commands::conditions(&a),
        Command::TensorEig(a) => commands::tensor_eig(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(e: &anyhow::Error) -> ExitCode {
    let (code, kind, id) = exit_code(e);
    let line = serde_json::json!({ "error": id, "kind": kind, "message": format!("{e:#}") });
    eprintln!("{line}");
    ExitCode::from(code)
}
