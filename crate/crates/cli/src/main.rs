use std::path::PathBuf;
use std::process::ExitCode;

use circspec::{run, Command};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "circspec", version, about = "Spectral circulant BNNs: prior sampling, SVI training, certification and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw filters from the spectral prior and compare covariances.
    SamplePrior(Common),
    /// Fit the variational posterior and write a checkpoint.
    Train(Common),
    /// Lipschitz bound, margin certificates and prior tail radius.
    Certify(Common),
    /// Accuracy, calibration and OOD metrics.
    Eval(Common),
    /// Parameter counts for the configured layers.
    ParamCount(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::SamplePrior(a) => (Command::SamplePrior, a),
        Cmd::Train(a) => (Command::Train, a),
        Cmd::Certify(a) => (Command::Certify, a),
        Cmd::Eval(a) => (Command::Eval, a),
        Cmd::ParamCount(a) => (Command::ParamCount, a),
    };
    match run(cmd, &args.config, &args.out, args.seed) {
        Ok(outputs) => {
            println!("{outputs}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}
