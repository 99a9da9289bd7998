//! `harqlab`: BLER curves, complexity tables, power allocation and the
//! environment server from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage, 3 infeasible,
//! 4 evaluation budget exceeded.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "harqlab", version, about = "Average BLER and power allocation for HARQ-IR short packets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Average BLER after M rounds at each SNR, one CSV row per SNR.
    Bler(BlerArgs),
    /// CSV series for one of the standard plots.
    Sweep(SweepArgs),
    /// Gauss-Laguerre nodes and weights.
    GlNodes {
        #[arg(long)]
        n: usize,
    },
    /// Q-function evaluation counts of the naive and DP Gauss-Laguerre evaluators.
    Complexity {
        #[arg(long, value_delimiter = ',', required = true)]
        m: Vec<u32>,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<u32>,
    },
    /// Power allocation.
    Optimize {
        #[command(subcommand)]
        solver: OptimizeCommand,
    },
    /// Slot-level HARQ simulation under a fixed power policy; prints JSON.
    Simulate(SimulateArgs),
    /// Serve the environment over stdin/stdout (newline-delimited JSON).
    EnvServer {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum OptimizeCommand {
    /// High-SNR geometric program, one CSV row per power budget.
    Gp(GpArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Debug)]
pub enum Method {
    Mc,
    McApprox,
    Trap,
    Gl,
    GlDp,
    Asy,
}

#[derive(Args, Clone, Debug)]
pub struct LinkArgs {
    /// Maximum number of rounds.
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    /// Symbols per round.
    #[arg(long, default_value_t = 50.0)]
    pub l: f64,
    /// Rate, bits per symbol.
    #[arg(long, default_value_t = 5.0)]
    pub r: f64,
    /// Mean channel power gain.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
}

#[derive(Args, Clone, Debug, Default)]
pub struct MethodParams {
    /// Gauss-Laguerre order (gl, gl-dp) [default: 20].
    #[arg(long)]
    pub n: Option<usize>,
    /// Trapezoid intervals (trap) [default: 3000].
    #[arg(long)]
    pub k: Option<usize>,
    /// Trapezoid truncation mass (trap) [default: 1e-5].
    #[arg(long)]
    pub eps_u: Option<f64>,
    /// Monte Carlo draws (mc, mc-approx) [default: 1000000].
    #[arg(long)]
    pub samples: Option<u64>,
    /// Monte Carlo seed (mc, mc-approx) [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct BlerArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub snr_db: Vec<f64>,
    #[command(flatten)]
    pub link: LinkArgs,
    #[command(flatten)]
    pub params: MethodParams,
    /// Write 0 in the wall_ms column so repeated runs are byte-identical.
    #[arg(long)]
    pub no_timing: bool,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Debug)]
pub enum Figure {
    /// BLER against SNR for m = 1..M.
    BlerVsSnr,
    /// BLER against the number of rounds at fixed SNRs.
    BlerVsM,
    /// BLER against symbols per round with the message size held fixed.
    BlerVsL,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub figure: Figure,
    /// Methods to include.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mc-approx,trap,gl-dp,asy")]
    pub methods: Vec<Method>,
    /// SNR axis (bler-vs-snr) or fixed SNRs (other figures)
    /// [default: 0..30 step 2.5 for bler-vs-snr, 5,10,15 for bler-vs-m, 10,15,20 for bler-vs-l].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_db: Option<Vec<f64>>,
    /// Symbols per round axis for bler-vs-l [default: 100..400 step 25].
    #[arg(long, value_delimiter = ',')]
    pub l_values: Option<Vec<f64>>,
    /// Message size in bits for bler-vs-l.
    #[arg(long, default_value_t = 1000.0)]
    pub info_bits: f64,
    #[command(flatten)]
    pub link: LinkArgs,
    #[command(flatten)]
    pub params: MethodParams,
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GpArgs {
    /// Average power budgets in dB (noise power 1).
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub pbar_db: Vec<f64>,
    /// Largest tolerated BLER after the last round.
    #[arg(long)]
    pub bler_max: f64,
    #[command(flatten)]
    pub link: LinkArgs,
    /// Gauss-Laguerre order used to re-evaluate each policy.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Transmit power per round in watts (noise power 1); its length sets M.
    #[arg(long, value_delimiter = ',', required = true)]
    pub policy: Vec<f64>,
    #[arg(long)]
    pub slots: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 50.0)]
    pub l: f64,
    #[arg(long, default_value_t = 5.0)]
    pub r: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bler(args) => commands::bler(&args),
        Command::Sweep(args) => commands::sweep(&args),
        Command::GlNodes { n } => commands::gl_nodes(n),
        Command::Complexity { m, n } => commands::complexity(&m, &n),
        Command::Optimize { solver: OptimizeCommand::Gp(args) } => commands::optimize_gp(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::EnvServer { config } => commands::env_server(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("harqlab: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
