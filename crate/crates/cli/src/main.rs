mod cli;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use cli::{Args, Command};
use config::RunConfig;

fn run(args: &Args) -> aim_core::Result<()> {
    let cfg = RunConfig::resolve(args)?;
    match args.command {
        Command::Simulate => commands::simulate_cmd(&cfg),
        Command::Fit => commands::fit_cmd(&cfg),
        Command::Estimate => commands::estimate_cmd(&cfg),
        Command::Attribute => commands::attribute_cmd(&cfg),
        Command::Pareto => commands::pareto_cmd(&cfg),
        Command::Validate => commands::validate_cmd(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AIM_LOG", "warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_computational() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
