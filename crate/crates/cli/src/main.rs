//! `fed3r`: generate synthetic federations, run experiments, simulate client
//! coverage and inspect binary artifacts.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Process exit codes.
const EXIT_CONFIG: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Io(String),
    Numerical(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Io(_) => EXIT_IO,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<fed3r_core::Error> for Failure {
    fn from(e: fed3r_core::Error) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "fed3r",
    version,
    about = "Federated closed-form ridge classification experiments"
)]
struct Cli {
    /// Worker threads for client-parallel work (default: all cores).
    #[arg(long, global = true, env = "FED3R_THREADS")]
    threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic feature file and client manifest.
    Gen(GenArgs),
    /// Run one federated experiment and write metrics, metadata and a checkpoint.
    Run(RunArgs),
    /// Simulate rounds needed to see a fraction of clients at least once.
    Coupon(CouponArgs),
    /// Print the header of a feature, statistics or manifest file.
    Inspect(InspectArgs),
}

/// Options shared by commands that read a TOML config.
#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Override a config field, e.g. `--set federation.lambda=0.1` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: ConfigArgs,

    /// Output directory (features.f3rd, manifest.json, test.f3rd).
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub anisotropy: Option<f64>,
    #[arg(long)]
    pub clients: Option<usize>,
    /// Dirichlet concentration; 0 gives one class per client.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Hold out this share as test.f3rd (default 0: everything in features.f3rd).
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: ConfigArgs,

    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// fed3r, fed3r_rf, fedavg_lp, fedavgm_lp or fed3r_ftlp.
    #[arg(long)]
    pub algorithm: Option<String>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub test_features: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub clients_per_round: Option<usize>,
    #[arg(long)]
    pub rounds_max: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CouponArgs {
    /// Federation size K.
    #[arg(long)]
    pub clients: usize,
    /// Distinct clients drawn per round.
    #[arg(long)]
    pub per_round: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Coverage fractions, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = fed3r_core::coupon::DEFAULT_FRACTIONS)]
    pub fractions: Vec<f64>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    pub path: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("could not size the worker pool: {e}");
        }
    }

    let result = match &cli.command {
        Command::Gen(args) => commands::gen(args),
        Command::Run(args) => commands::run(args),
        Command::Coupon(args) => commands::coupon(args),
        Command::Inspect(args) => commands::inspect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("fed3r: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
