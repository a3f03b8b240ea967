//! `sqgame`: design, certify and probe semi-quantum certification games.
//!
//! Exit codes: 0 pass, 1 checked-and-failed verdict, 2 invalid input,
//! 3 non-convergence.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_NONCONVERGED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "sqgame", version, about = "Semi-quantum certification games")]
struct Cli {
    /// Base seed for every random draw in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path for the main report (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Tolerance for certification and corollary checks.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the witness and score table for a target state.
    Design(DesignArgs),
    /// Run the see-saw against a game and certify the optimum.
    Certify(CertifyArgs),
    /// Evaluate or optimise the entanglement-swapping score.
    Swap(SwapArgs),
    /// Check whether a swap instance is a Bell-state measurement on Bell sources.
    Corollary(InstanceArgs),
    /// Run a randomized consistency probe.
    Probe(ProbeArgs),
    /// Write the optimum bound over measurement angles as CSV.
    Bound(BoundArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct TargetArgs {
    /// Schmidt angle of the target state, in (0, pi/4].
    #[arg(long)]
    pub chi: Option<f64>,
    /// Rotate the target by seeded random local unitaries.
    #[arg(long)]
    pub lu_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    /// Magnitude L of the negative witness eigenvalues.
    #[arg(long)]
    pub penalty: Option<f64>,
    #[arg(long)]
    pub l1: Option<f64>,
    #[arg(long, value_enum)]
    pub ensemble: Option<EnsembleArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EnsembleArg {
    Tetrahedral,
    Pauli6,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SeeSawArgs {
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol_score: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// CSV path for the best restart's score trajectory.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    RankOne,
    PsdRelaxed,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CertifyArgs {
    /// Design file from `sqgame design`.
    #[arg(long, conflicts_with_all = ["chi", "lu_seed"])]
    pub game: Option<PathBuf>,
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub seesaw: SeeSawArgs,
}

#[derive(Debug, Clone, Default, Args)]
#[group(id = "source", multiple = false)]
pub struct InstanceArgs {
    /// Bell sources with a Bell-state measurement.
    #[arg(long)]
    pub ideal: bool,
    /// Werner sources of the given visibility with a Bell-state measurement.
    #[arg(long)]
    pub werner: Option<f64>,
    /// Seeded random sources and measurement.
    #[arg(long)]
    pub random_instance: Option<u64>,
    /// Instance JSON file.
    #[arg(long)]
    pub instance: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SwapArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Optimise the score over sources and measurement instead of evaluating an instance.
    #[arg(long)]
    pub optimize: bool,
    #[command(flatten)]
    pub target: TargetArgs,
    /// Penalty l of the swap operator.
    #[arg(long)]
    pub swap_penalty: Option<f64>,
    #[command(flatten)]
    pub seesaw: SeeSawArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Alice,
    Bob,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProbeArgs {
    /// One of theorem1, lemma1, lemma2, lemma3, appendixD.
    pub name: Option<String>,
    /// Number of samples (grid side for appendixD).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub min_mix: Option<f64>,
    #[arg(long)]
    pub min_angle: Option<f64>,
    #[arg(long, value_enum)]
    pub side: Option<SideArg>,
    /// Dimension pairs for lemma3, e.g. `2x2,2x3`.
    #[arg(long)]
    pub dims: Option<String>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Scan intervals per appendixD point.
    #[arg(long)]
    pub grid_n: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub chi: Option<f64>,
    #[arg(long)]
    pub grid_n: Option<usize>,
}

/// Settings shared by every subcommand after merging flags over the config.
#[derive(Debug, Clone)]
pub struct Global {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INVALID, message: message.into() }
    }
}

impl From<sqgame::Error> for Failure {
    fn from(e: sqgame::Error) -> Self {
        let code = match e {
            sqgame::Error::NonFiniteScore { .. } => EXIT_NONCONVERGED,
            _ => EXIT_INVALID,
        };
        Failure { code, message: e.to_string() }
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SQGAME_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::invalid(format!("SQGAME_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::invalid(format!("cannot size thread pool: {e}")))
}

fn run(cli: Cli) -> Result<u8, Failure> {
    init_threads()?;
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let global = Global {
        seed: cli.seed.or(config.seed),
        out: cli.out.or_else(|| config.out.clone()),
        tol: cli.tol.or(config.tol),
        config,
    };
    if let Some(t) = global.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure::invalid(format!("--tol must be positive, got {t}")));
        }
    }
    match cli.command {
        Command::Design(a) => commands::design(&global, &a),
        Command::Certify(a) => commands::certify(&global, &a),
        Command::Swap(a) => commands::swap(&global, &a),
        Command::Corollary(a) => commands::corollary(&global, &a),
        Command::Probe(a) => commands::probe(&global, &a),
        Command::Bound(a) => commands::bound(&global, &a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("sqgame: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
