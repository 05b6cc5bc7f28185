use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flashchan_cli::{commands, Log, Run};

#[derive(Parser)]
#[command(name = "flashchan", version, about = "Flash read-channel simulation, fitting and generative modeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML); built-in desk-scale defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; input artifacts are looked up here too.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Suppresses progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate training and evaluation datasets.
    Simulate(Common),
    /// Fit Gaussian, Normal-Laplace and Student's t to every level and stamp.
    Fit(Common),
    /// Train the generative model.
    Train(Common),
    /// Sample generated voltages for the evaluation grids.
    Generate(Common),
    /// Compare generated data and fits against the evaluation set.
    Evaluate(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Simulate(c) => ("simulate", c),
        Command::Fit(c) => ("fit", c),
        Command::Train(c) => ("train", c),
        Command::Generate(c) => ("generate", c),
        Command::Evaluate(c) => ("evaluate", c),
    };
    let log = Log { quiet: common.quiet };
    let result = Run::prepare(common.config.as_deref(), &common.out, common.seed).and_then(|run| match name {
        "simulate" => commands::simulate(&run, log).map(drop),
        "fit" => commands::fit(&run, log).map(drop),
        "train" => commands::train(&run, log).map(drop),
        "generate" => commands::generate(&run, log).map(drop),
        _ => commands::evaluate(&run, log).map(|r| println!("{}", r.headline())),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("flashchan {name}: {e}");
            ExitCode::FAILURE
        }
    }
}
