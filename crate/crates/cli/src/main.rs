//! `contact-relax`: run the contact relaxation pipelines and write CSV plus a
//! `manifest.json` per output directory.

mod commands;
mod config;
mod models;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use contact_relax::Error;

use commands::*;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(#[from] Error),
    #[error("{0}")]
    CheckFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(e) => match e {
                Error::InvalidParameter(_)
                | Error::EmptyWindow
                | Error::NotAdmissible(_)
                | Error::DimensionMismatch { .. }
                | Error::StateSpaceTooLarge { .. }
                | Error::NotCurieWeiss => 1,
                _ => 2,
            },
            CliError::CheckFailed(_) => 3,
            CliError::Io(_) | CliError::Json(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "contact-relax",
    version,
    about = "Contact Hamiltonian relaxation toolkit"
)]
pub struct Cli {
    /// Output directory (default: $CONTACT_RELAX_OUT/<command> or out/<command>)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Flat key = value file supplying flags absent from the command line
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for ensembles and parameter grids
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Contact identity and form-preservation suites
    Check(CheckArgs),
    /// Integrate a contact Hamiltonian from a point
    Flow(FlowArgs),
    /// Ising equilibrium branches and fold point
    Equilibrium(EquilibriumArgs),
    /// Reeb chords from Lambda_{a,alpha} to Lambda_{b,beta}
    Chord(ChordArgs),
    /// Shooting from Lambda_{a,alpha} to Lambda_{b,beta}
    Shoot(ShootArgs),
    /// Glauber dynamics: exact, lumped, Monte Carlo and perturbed
    Glauber(GlauberArgs),
    /// Discrepancy between the two relaxation scenarios
    Compare(CompareArgs),
    /// Newton cooling models
    Cooling(CoolingArgs),
    /// Contact Moebius dynamics
    Moebius(MoebiusArgs),
    /// Cores of a flow on an invariant surface
    Cores(CoresArgs),
    /// Normal hyperbolicity rates along an invariant Legendrian
    Hyperbolicity(HyperbolicityArgs),
    /// Data behind the figures
    Figures(FiguresArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Check(_) => "check",
            Command::Flow(_) => "flow",
            Command::Equilibrium(_) => "equilibrium",
            Command::Chord(_) => "chord",
            Command::Shoot(_) => "shoot",
            Command::Glauber(_) => "glauber",
            Command::Compare(_) => "compare",
            Command::Cooling(_) => "cooling",
            Command::Moebius(_) => "moebius",
            Command::Cores(_) => "cores",
            Command::Hyperbolicity(_) => "hyperbolicity",
            Command::Figures(_) => "figures",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let dir = output::resolve_dir(cli.out.as_deref(), cli.command.name());
    match &cli.command {
        Command::Check(a) => check(dir, a),
        Command::Flow(a) => flow(dir, a),
        Command::Equilibrium(a) => equilibrium(dir, a),
        Command::Chord(a) => chord(dir, a),
        Command::Shoot(a) => shoot(dir, a),
        Command::Glauber(a) => glauber(dir, a),
        Command::Compare(a) => compare(dir, a),
        Command::Cooling(a) => cooling(dir, a),
        Command::Moebius(a) => moebius(dir, a),
        Command::Cores(a) => cores(dir, a),
        Command::Hyperbolicity(a) => hyperbolicity(dir, a),
        Command::Figures(a) => figures(dir, a),
    }
}

fn main() -> ExitCode {
    let fail = |e: CliError| {
        let msg = e.to_string();
        eprintln!("error: {}", msg.lines().next().unwrap_or(""));
        ExitCode::from(e.exit_code())
    };
    let args = match config::inject(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("usage error"));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
