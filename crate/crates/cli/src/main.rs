mod cli;
mod commands;
mod config;
mod error;

use clap::Parser;

use crate::cli::Cli;
use crate::commands::Context;
use crate::config::Config;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = Config::load(cli.config.as_deref()).and_then(|config| {
        let ctx = Context {
            seed: cli.seed.or(config.seed).unwrap_or(0),
            workers: cli.workers.or(config.workers),
            config,
        };
        commands::run(cli.command, &ctx)
    });
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
