//! `smell` command-line driver.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;
use smell::SmellError;

use args::{Cli, Command};

/// A problem with the invocation or its inputs rather than with the tool.
#[derive(Debug)]
pub struct UserError(pub String);

impl fmt::Display for UserError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UserError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<SmellError>() {
            return match e {
                SmellError::Io { .. }
                | SmellError::Csv { .. }
                | SmellError::InvalidDataset(_)
                | SmellError::InvalidConfig(_)
                | SmellError::DimensionMismatch { .. }
                | SmellError::Checkpoint(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => commands::train_cmd(a),
        Command::Eval(a) => commands::eval_cmd(a),
        Command::Ablate(a) => commands::ablate_cmd(a),
        Command::Export(a) => commands::export_cmd(a),
        Command::Risk(a) => commands::risk_cmd(a),
        Command::Synth(a) => commands::synth_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
