//! Batch driver for the anomalous-trade pipeline.
//!
//! Stages are separate commands with on-disk artifacts so the expensive
//! network bootstrap can be rerun without refitting models:
//!
//! ```text
//! flipnet synth --out runs/demo --anomalies 50
//! flipnet fit   --input runs/demo/transactions.csv --out runs/demo
//! flipnet label --input runs/demo/transactions.csv --out runs/demo
//! flipnet net   --input runs/demo/transactions.csv --out runs/demo
//! flipnet report --input runs/demo/transactions.csv --out runs/demo
//! ```

mod artifacts;
mod commands;
mod config;
mod reports;

use clap::{Parser, Subcommand};

use config::{CommonArgs, RunConfig, SynthArgs};

#[derive(Parser)]
#[command(
    name = "flipnet",
    about = "Detect anomalously profitable trades in a peer-to-peer collectibles market",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic market with known ground truth.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Fit the expected-profit regression and the residual-density forest.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score every flip and emit anomaly labels.
    Label {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Build trade networks, metrics, and bootstrap significance tests.
    Net {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Consolidate artifacts into one report plus plot-ready TSVs.
    Report {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth { common, synth } => RunConfig::resolve(common, Some(synth))
            .and_then(|c| commands::cmd_synth(&c)),
        Command::Fit { common } => {
            RunConfig::resolve(common, None).and_then(|c| commands::cmd_fit(&c))
        }
        Command::Label { common } => {
            RunConfig::resolve(common, None).and_then(|c| commands::cmd_label(&c))
        }
        Command::Net { common } => {
            RunConfig::resolve(common, None).and_then(|c| commands::cmd_net(&c))
        }
        Command::Report { common } => {
            RunConfig::resolve(common, None).and_then(|c| commands::cmd_report(&c))
        }
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
