//! `maskedge` command-line front end.
//!
//! Exit status: 0 on success, 1 on a validation error (bad flags, config,
//! model or manifest contents), 2 on an I/O error. Every failure prints one
//! line starting `error[validation]:` or `error[io]:` to stderr.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use maskedge::evalbench::EvalError;
use maskedge::pipeline::PipelineError;

use args::{with_config, Cli, Command};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "error[validation]: {m}"),
            CliError::Io(m) => write!(f, "error[io]: {m}"),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Io { .. } => CliError::Io(e.to_string()),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io { .. } | EvalError::NoReadableImages => CliError::Io(e.to_string()),
            EvalError::Pipeline(p) => p.into(),
            e => CliError::Validation(e.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Infer(a) => {
            let cfg = a.config.clone();
            commands::infer(with_config(a, cfg.as_deref())?)
        }
        Command::Eval(a) => {
            let cfg = a.config.clone();
            commands::eval(with_config(a, cfg.as_deref())?)
        }
        Command::Bench(a) => {
            let cfg = a.config.clone();
            commands::bench(with_config(a, cfg.as_deref())?)
        }
        Command::Surgery(a) => {
            let cfg = a.config.clone();
            commands::surgery(with_config(a, cfg.as_deref())?)
        }
        Command::MakeFixture(a) => {
            let cfg = a.config.clone();
            commands::make_fixture(with_config(a, cfg.as_deref())?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MASKEDGE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let mut lines = rendered.lines();
            let first = lines.next().unwrap_or_default();
            eprintln!("error[validation]: {}", first.strip_prefix("error: ").unwrap_or(first));
            for l in lines {
                eprintln!("{l}");
            }
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
