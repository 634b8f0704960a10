//! `cmc`: generate synthetic scenarios, train compatibility transformations,
//! evaluate them and run the method comparison and loss ablation.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// 0 success, 1 I/O, 2 validation, 3 numeric failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    use cmc_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io { .. }
                | E::Magic { .. }
                | E::Version { .. }
                | E::PayloadLength(_)
                | E::Truncated(_) => 1,
                E::Numeric(_) | E::DegenerateEmbedding { .. } => 3,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| cmc_core::Error::Config(format!("--threads: {e}")))?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Generate(a) => commands::generate(g, a),
        Command::Train(a) => commands::train(g, a),
        Command::Eval(a) => commands::eval(g, a),
        Command::Compare(a) => commands::compare(g, a),
        Command::Ablate(a) => commands::ablate(g, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.global.log_level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
