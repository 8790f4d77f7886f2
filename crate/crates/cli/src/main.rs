//! `swflow`: run private sliced Wasserstein flows, evaluate samples, and
//! project privacy budgets.

mod commands;
mod failure;
mod manifest;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EvalRequest, PrivacyRequest, RunRequest, ToyExportRequest};
use setup::{ConfigArgs, SourceArgs};

#[derive(Parser)]
#[command(name = "swflow", version, about = "Differentially private sliced Wasserstein flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a flow and write snapshots, final particles, a privacy report and a manifest.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        source: SourceArgs,
        /// Iterations to snapshot, e.g. 1,10,200. The final iteration is always written.
        #[arg(long, value_delimiter = ',')]
        snapshots: Option<Vec<usize>>,
        /// Re-run the configuration and data recorded in a manifest.
        #[arg(long, value_name = "MANIFEST", conflicts_with_all = [
            "config", "preset", "seed", "sigma", "epsilon", "k_steps", "toy", "toy_spec", "data", "snapshots",
        ])]
        replay: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Sliced Wasserstein distance between two CSV sample files, printed as JSON.
    Eval {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = swflow::metrics::DEFAULT_EVAL_PROJECTIONS)]
        n_theta: usize,
        /// Also report the Gaussian-smoothed distance with this std.
        #[arg(long, default_value_t = 0.0)]
        sigma_eval: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the privacy report a run would produce, without running it.
    Privacy {
        #[command(flatten)]
        config: ConfigArgs,
        /// Data dimension; defaults to the preset's or to --data's.
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, value_name = "PATH", conflicts_with = "dim")]
        data: Option<PathBuf>,
    },
    /// Write the toy target's density on a grid as JSON [x, y, density] triples.
    ToyExport {
        #[arg(long, value_name = "PATH")]
        toy_spec: Option<PathBuf>,
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        /// Probability masses whose density levels are printed.
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.9,0.99")]
        levels: Vec<f64>,
        /// Also write target samples as CSV.
        #[arg(long, value_name = "PATH")]
        samples: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, source, snapshots, replay, out } => {
            commands::run(RunRequest { config, source, snapshots, replay, out })
        }
        Command::Eval { a, b, n_theta, sigma_eval, seed } => {
            commands::eval(EvalRequest { a, b, n_theta, sigma_eval, seed })
        }
        Command::Privacy { config, dim, data } => commands::privacy(PrivacyRequest { config, dim, data }),
        Command::ToyExport { toy_spec, resolution, levels, samples, out } => {
            commands::toy_export(ToyExportRequest { toy_spec, resolution, masses: levels, out, samples })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("swflow: {f}");
            ExitCode::from(f.code)
        }
    }
}
