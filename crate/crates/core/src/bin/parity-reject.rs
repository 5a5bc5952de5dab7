use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use parity_reject::experiment::{
    cmd_plotdata, cmd_single, cmd_sweep, cmd_validate_channel, parse_theta_list, CliResult,
};
use parity_reject::protocol::SixState;

/// Two-photon bit-flip rejection: analytic model, Monte Carlo and sweeps.
#[derive(Debug, Parser)]
#[command(name = "parity-reject", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured sweep and write CSV / plot data.
    Sweep { config: PathBuf },
    /// Report one input state at one flip probability.
    Single {
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        state: SixState,
        #[arg(long = "p", allow_hyphen_values = true)]
        p: f64,
    },
    /// Check the waveplate sandwich against the bit-flip channel.
    ValidateChannel {
        /// Angles in degrees, e.g. `0,5,...,45`.
        #[arg(long, default_value = "0,5,...,45")]
        theta: String,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Turn a sweep CSV into a gnuplot data file and an SVG figure.
    Plotdata {
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<bool> {
    match cli.command {
        Command::Sweep { config } => {
            let report = cmd_sweep(&config)?;
            if report.written.is_empty() {
                print!("{}", report.csv);
            } else {
                for path in &report.written {
                    println!("wrote {}", path.display());
                }
            }
            Ok(true)
        }
        Command::Single { config, state, p } => {
            println!("{}", cmd_single(&config, state, p)?);
            Ok(true)
        }
        Command::ValidateChannel { theta, trials, seed } => {
            let thetas = parse_theta_list(&theta)?;
            let (report, ok) = cmd_validate_channel(&thetas, trials, seed)?;
            print!("{report}");
            Ok(ok)
        }
        Command::Plotdata { csv, out } => {
            for path in cmd_plotdata(&csv, &out)? {
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
