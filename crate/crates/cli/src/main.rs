mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use commands::{CliError, Ctx, Which};
use output::OutputDir;

#[derive(Parser)]
#[command(
    name = "doaopt",
    version,
    about = "Domain-of-attraction and absorption-time optimization on upwind grid discretizations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel assembly and simulation.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for the Monte-Carlo spot check of `roundtrip-check`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the generator at b0 and write it in GEN format.
    Assemble(Common),
    /// Solve for one cell field at b0.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "p")]
        which: Which,
    },
    /// Run the configured optimization mode.
    Optimize(Common),
    /// Trajectory oracle: DOA indicator and absorption times at b0.
    Oracle(Common),
    /// Check that generator and field files read back bit-identically.
    RoundtripCheck(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, which) = match &cli.command {
        Command::Assemble(c)
        | Command::Optimize(c)
        | Command::Oracle(c)
        | Command::RoundtripCheck(c) => (c, None),
        Command::Solve { common, which } => (common, Some(*which)),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", common.config.display())))?;
    let loaded = config::parse(&text)?;
    let setup = loaded.setup()?;
    let dir = common
        .out
        .clone()
        .or_else(|| setup.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let out = OutputDir::claim(&dir, &loaded.hash)?;
    let cx = Ctx {
        loaded: &loaded,
        setup: &setup,
        out: &out,
        seed: common.seed,
    };
    match cli.command {
        Command::Assemble(_) => commands::assemble_cmd(&cx),
        Command::Solve { .. } => commands::solve_cmd(&cx, which.expect("solve has --which")),
        Command::Optimize(_) => commands::optimize_cmd(&cx),
        Command::Oracle(_) => commands::oracle_cmd(&cx),
        Command::RoundtripCheck(_) => commands::roundtrip_cmd(&cx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Info)
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
