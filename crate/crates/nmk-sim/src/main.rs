use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nmk_sim::Mode;

#[derive(Parser)]
#[command(name = "nmk-sim", version, about = "Chain-mapped open quantum system experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chain coefficients and the t = 0 Hamiltonian in coordinate format.
    ChainMap(Common),
    /// Reduced-state trajectory with particle moments.
    Simulate(Common),
    /// Trajectory plus the certified error budget at the final time.
    Certify(Common),
    /// Trajectory against the star or Lindblad oracle.
    CompareOracle(Common),
    /// Cartesian sweep with measured and certified errors per point.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment document (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Sweep points run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NMK_SIM_LOG", "warn")).init();
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::ChainMap(a) => (Mode::ChainMap, a),
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Certify(a) => (Mode::Certify, a),
        Command::CompareOracle(a) => (Mode::CompareOracle, a),
        Command::Sweep(a) => (Mode::Sweep, a),
    };
    match nmk_sim::run(mode, &args.config, &args.out, args.jobs) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
