use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coupon_policy::cli::{exit_code, run_file, Command};
use coupon_policy::config::Overrides;

#[derive(Parser)]
#[command(name = "coupon-policy", version, about = "Coupon policies for privacy-sensitive consumers")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path; overrides [output].path. `-` means stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides [simulation].seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Add value-iteration thresholds next to the closed form.
    #[arg(long, global = true)]
    oracle: bool,
    /// Overrides [vi].grid.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Overrides [vi].tol.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Optimal threshold with its certificate, as JSON.
    Threshold,
    /// Thresholds over one or two swept parameters, as CSV.
    Sweep,
    /// Mean discounted cost per step for each policy, as CSV.
    Simulate,
    /// LP-only masks or the multi-state policy region, as CSV.
    Region,
    /// Step-by-step trace of one episode, as CSV.
    Estimate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: --config is required");
        return ExitCode::from(2);
    };
    let cmd = match cli.command {
        Cmd::Threshold => Command::Threshold,
        Cmd::Sweep => Command::Sweep,
        Cmd::Simulate => Command::Simulate,
        Cmd::Region => Command::Region,
        Cmd::Estimate => Command::Estimate,
    };
    let overrides = Overrides { out: cli.out, seed: cli.seed, grid: cli.grid, tol: cli.tol };
    let mut stdout = std::io::stdout().lock();
    match run_file(cmd, &config, &overrides, cli.oracle, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
