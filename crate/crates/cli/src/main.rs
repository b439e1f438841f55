use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lsem_cli::{execute, Command, Invocation};

#[derive(Parser)]
#[command(name = "lsem", version, about = "Spectral element experiments for stochastic advection-reaction-diffusion systems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Single deterministic run or Monte Carlo ensemble.
    Run(Args),
    /// Temporal convergence table of the manufactured problem.
    Table1(Args),
    /// Error of the expected solution against the polynomial order.
    Spatial(Args),
    /// Gridded mean of u at the requested times.
    Evolve(Args),
    /// Eigenvalues of the noise covariance.
    SpectrumDump(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides LSEM_OUT_DIR and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for ensembles.
    #[arg(long)]
    workers: Option<usize>,
    /// Master noise seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Run(a) => (Command::Run, a),
        Cmd::Table1(a) => (Command::Table1, a),
        Cmd::Spatial(a) => (Command::Spatial, a),
        Cmd::Evolve(a) => (Command::Evolve, a),
        Cmd::SpectrumDump(a) => (Command::SpectrumDump, a),
    };
    let inv = Invocation {
        command,
        config: args.config,
        out: args.out,
        workers: args.workers,
        seed: args.seed,
    };
    match execute(&inv) {
        Ok(m) => {
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{}: wrote {} files to {}", m.command, m.outputs.len(), m.out_dir);
            for o in &m.outputs {
                let _ = writeln!(stdout, "  {}  {}", o.sha256, o.file);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
