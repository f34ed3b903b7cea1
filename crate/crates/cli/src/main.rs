use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flatin_cli::commands::{self, RunOverrides, VerifyOptions};

/// Flat-input tracking control for the variable-length pendulum:
/// closed-loop simulation, flat-input verification and trace plotting.
#[derive(Parser)]
#[command(name = "flatin", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop scenario and write the trace CSV.
    Run {
        /// Scenario file (key = value format).
        scenario: PathBuf,
        /// Override the integration step (s).
        #[arg(long)]
        sim_dt: Option<f64>,
        /// Override the controller interval (s).
        #[arg(long)]
        ctrl_dt: Option<f64>,
        /// Override the horizon (s).
        #[arg(long)]
        duration: Option<f64>,
        /// Override the output CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the flat-input construction on a grid of rod angles.
    Verify {
        /// Number of grid points.
        #[arg(long, default_value_t = 100)]
        grid: usize,
        /// Lower rod-angle bound (rad), strictly inside (0, pi).
        #[arg(long, default_value_t = 0.2)]
        x3_min: f64,
        /// Upper rod-angle bound (rad), strictly inside (0, pi).
        #[arg(long, default_value_t = PI - 0.2)]
        x3_max: f64,
        /// Test hook: perturb the flat input field to force a failure.
        #[arg(long, default_value_t = 0.0, hide = true)]
        perturb_gamma: f64,
    },
    /// Generate a gnuplot script for a trace CSV.
    Plot {
        /// Trace CSV produced by `flatin run`.
        csv: PathBuf,
        /// Output script path (default: CSV path with .gp extension).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every .scn scenario in a directory (in parallel).
    Sweep {
        /// Directory containing scenario files.
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            sim_dt,
            ctrl_dt,
            duration,
            out,
        } => commands::cmd_run(
            &scenario,
            &RunOverrides {
                sim_dt,
                ctrl_dt,
                duration,
                out,
            },
        ),
        Command::Verify {
            grid,
            x3_min,
            x3_max,
            perturb_gamma,
        } => commands::cmd_verify(&VerifyOptions {
            grid,
            x3_min,
            x3_max,
            perturb_gamma,
        }),
        Command::Plot { csv, out } => commands::cmd_plot(&csv, out.as_deref()),
        Command::Sweep { dir } => commands::cmd_sweep(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
