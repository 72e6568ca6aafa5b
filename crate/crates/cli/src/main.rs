//! `plumekit` command-line front end.
//!
//! Exit codes: 0 success, 1 validation failure (flags, config, inputs),
//! 2 runtime failure. Log verbosity comes from `PLUMEKIT_LOG`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod config;
mod failure;
mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use crate::args::Cli;
use crate::report::Ctx;

fn main() {
    report::init_logging();
    std::process::exit(run(std::env::args_os().collect()));
}

fn run(argv: Vec<OsString>) -> i32 {
    let cli = match parse(argv) {
        Ok(cli) => cli,
        Err(code) => return code,
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("plumekit: validation error: field `threads`: must be >= 1");
            return 1;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("plumekit: runtime error: thread pool: {e}");
            return 2;
        }
    }

    let mut ctx = Ctx::new();
    let result = commands::run(&cli.command, &mut ctx);
    let (mut code, error) = match &result {
        Ok(()) => (0, None),
        Err(f) => {
            eprintln!("plumekit: {f}");
            (f.exit_code(), Some(f.to_string()))
        }
    };
    if code == 1 {
        return code;
    }
    let path: Option<PathBuf> = cli.run_report.clone().or_else(|| ctx.default_report.clone());
    if let Some(path) = path {
        let report = ctx.finish(cli.command.name(), cli.command.params(), code, error);
        if let Err(e) = commands::write_json(&path, &report) {
            eprintln!("plumekit: runtime error: run report: {e:#}");
            code = 2;
        }
    }
    code
}

/// Parses the command line, filling unset flags from `--config`.
fn parse(argv: Vec<OsString>) -> Result<Cli, i32> {
    let first = Cli::command().try_get_matches_from(&argv).map_err(clap_exit)?;
    let argv = config::merge(argv, &first).map_err(|e| {
        eprintln!("plumekit: validation error: {e:#}");
        1
    })?;
    Cli::try_parse_from(argv).map_err(clap_exit)
}

fn clap_exit(e: clap::Error) -> i32 {
    let _ = e.print();
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
        _ => 1,
    }
}
