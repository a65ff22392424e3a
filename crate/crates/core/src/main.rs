use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcn_codesign::cli::{run, Command, Options};

/// Co-design of deadbeat controllers and multi-hop network weights.
#[derive(Parser)]
#[command(name = "mcn", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Network transfer functions, delays and rates for fixed weights.
    Analyze(Args),
    /// Two-stage controller and weight design with traces and plot.
    Codesign(Args),
    /// Rank candidate schedules by optimal L2 norm.
    ScheduleSearch(Args),
    /// Replay a stored solution.
    Simulate(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Computational model, overriding the config.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    model: Option<u8>,
    /// Maximum schedule period for searches.
    #[arg(long)]
    pi_max: Option<usize>,
    /// Rate bound sweep in Hz as lo:hi:step.
    #[arg(long)]
    rate_sweep: Option<String>,
    /// Reserved; has no numeric effect.
    #[arg(long)]
    seed: Option<u64>,
    /// Cross-check with the brute-force grid oracle.
    #[arg(long)]
    oracle: bool,
    /// Solution file for simulate.
    #[arg(long)]
    solution: Option<PathBuf>,
    /// Number of samples to simulate after k = 0.
    #[arg(long)]
    horizon: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 4 } else { 0 });
        }
    };
    let (cmd, a) = match cli.command {
        Cmd::Analyze(a) => (Command::Analyze, a),
        Cmd::Codesign(a) => (Command::Codesign, a),
        Cmd::ScheduleSearch(a) => (Command::ScheduleSearch, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
    };
    let opts = Options {
        config: a.config,
        out: a.out,
        model: a.model,
        pi_max: a.pi_max,
        rate_sweep: a.rate_sweep,
        seed: a.seed,
        oracle: a.oracle,
        solution: a.solution,
        horizon: a.horizon,
    };
    match run(cmd, &opts) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
