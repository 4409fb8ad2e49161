mod args;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::Cli;

/// A failed run: message and process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { code: 1, msg: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }

    /// Prefix the message, keeping the code.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        Self {
            code: self.code,
            msg: format!("{ctx}: {}", self.msg),
        }
    }
}

impl From<mdspace::Error> for Failure {
    fn from(e: mdspace::Error) -> Self {
        let code = match e {
            mdspace::Error::Numeric(_) => 3,
            _ => 2,
        };
        Self { code, msg: e.to_string() }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self::data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;

fn run() -> CliResult<()> {
    let root = Cli::command();
    let argv = config::merge(std::env::args_os().collect(), &root)?;
    let matches = match root.try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return if code == 0 { Ok(()) } else { Err(Failure { code, msg: String::new() }) };
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Failure::usage(e.to_string()))?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::usage("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot set up {jobs} workers: {e}")))?;
    }
    commands::dispatch(&cli)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.msg.is_empty() {
                eprintln!("error: {}", f.msg);
            }
            ExitCode::from(f.code)
        }
    }
}
