use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use etf2d::harness::{cmd_monotonicity, cmd_reconstruct_check, cmd_simulate, cmd_verify, RunFlags};

/// Event-triggered resilient filtering experiments on 2-D systems.
#[derive(Parser)]
#[command(name = "etf2d", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo run of the full pipeline with bound-dominance checks.
    Simulate(Common),
    /// Codec, event-trigger and reconstruction invariant checks.
    Verify(Common),
    /// Bound ordering under two ordered trigger parameter sets.
    Monotonicity(Common),
    /// Exhaustive reconstruction checks over small delay lists.
    ReconstructCheck(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file, or `builtin:NAME` (linear_small, nonlinear_small, channel_stress).
    #[arg(long)]
    config: String,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `out/<scenario>/<command>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `dotted.path=value`, applied in order before validation.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn flags(&self) -> RunFlags {
        RunFlags {
            trials: self.trials,
            seed: self.seed,
            out: self.out.clone(),
            overrides: self.overrides.clone(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (run, common): (fn(&str, &RunFlags) -> etf2d::Result<_>, &Common) = match &cli.command {
        Command::Simulate(c) => (cmd_simulate, c),
        Command::Verify(c) => (cmd_verify, c),
        Command::Monotonicity(c) => (cmd_monotonicity, c),
        Command::ReconstructCheck(c) => (cmd_reconstruct_check, c),
    };
    match run(&common.config, &common.flags()) {
        Ok(report) => {
            print!("{}", report.render());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
