//! `snn`: synthesize datasets, train spiking models, perturb spike timing,
//! ablate the fusion module, and plot report bundles.

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use snn_cli::commands::{self, Invocation};
use snn_cli::config;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "snn", version, about = "spiking neural network toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (INI)
    #[arg(long)]
    config: PathBuf,
    /// Override train.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override output.dir
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override one key, e.g. --set train.lr=0.01 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic event+frame dataset
    Synth(RunArgs),
    /// Train a model and write its report bundle
    Train(RunArgs),
    /// Evaluate a checkpoint under timing confusion and time elimination
    Perturb(RunArgs),
    /// Sweep attention assignments and fusion placement
    Ablate(RunArgs),
    /// Render a bundle's CSVs as SVG plots
    Report {
        /// Directory holding epochs.csv, ablation.csv, or perturb.csv
        #[arg(long)]
        bundle: PathBuf,
        /// Output directory for the plots (defaults to the bundle)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn invocation(args: RunArgs) -> Invocation {
    Invocation { config: args.config, seed: args.seed, out: args.out, sets: args.sets }
}

fn run(cmd: Cmd) -> Result<(), commands::CliError> {
    match cmd {
        Cmd::Synth(args) => commands::cmd_synth(&commands::load(&invocation(args))?),
        Cmd::Train(args) => commands::cmd_train(&commands::load(&invocation(args))?),
        Cmd::Perturb(args) => commands::cmd_perturb(&commands::load(&invocation(args))?),
        Cmd::Ablate(args) => commands::cmd_ablate(&commands::load(&invocation(args))?),
        Cmd::Report { bundle, out } => commands::cmd_report(&bundle, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let help = format!(
        "Config keys and their defaults (override with --set section.key=value):\n\n{}",
        config::echo(&config::AppConfig::default())
    );
    let matches = Cli::command().after_help(help).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
