use std::ffi::OsString;
use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;

use args::Cli;

/// Exit status for runtime failures; clap exits with 2 on usage errors.
const RUNTIME_FAILURE: u8 = 1;
const USAGE_ERROR: u8 = 2;

fn main() -> ExitCode {
    let argv = match args::expand_config(std::env::args_os().collect::<Vec<OsString>>()) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(USAGE_ERROR);
        }
    };
    let cli = Cli::parse_from(argv);
    if let Err(e) = cli.check() {
        eprintln!("error: {e}");
        return ExitCode::from(USAGE_ERROR);
    }
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return ExitCode::from(RUNTIME_FAILURE);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(RUNTIME_FAILURE)
        }
    }
}
