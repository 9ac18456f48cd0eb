mod args;
mod commands;
mod config;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};
use config::RunConfig;

fn stage(command: &Command) -> &'static str {
    match command {
        Command::Synth(_) => "synth",
        Command::Dataset(_) => "dataset",
        Command::Augment(_) => "augment",
        Command::Extract(_) => "extract",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Predict(_) => "predict",
        Command::Baseline(_) => "baseline",
        Command::Viz(_) => "viz",
        Command::Bench(_) => "bench",
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Synth(a) => commands::synth(a, &cfg),
        Command::Dataset(c) => commands::dataset(c, &cfg),
        Command::Augment(c) => commands::augment(c, &cfg),
        Command::Extract(a) => commands::extract(a, &cfg),
        Command::Train(a) => commands::train(a, &cfg),
        Command::Eval(a) => commands::eval(a, &cfg),
        Command::Predict(a) => commands::predict(a, &cfg),
        Command::Baseline(c) => commands::baseline(c, &cfg),
        Command::Viz(c) => commands::viz(c, &cfg),
        Command::Bench(c) => commands::bench(c, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors exit with status 2, `--help` and `--version` with 0.
    let cli = Cli::parse();
    match run(&cli).with_context(|| format!("{} failed", stage(&cli.command))) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
