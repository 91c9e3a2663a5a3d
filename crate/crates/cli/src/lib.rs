//! Library side of the `romdx` command-line tool. The binary only parses
//! arguments and maps [`Failure`] codes to the process exit status.

pub mod cases;
pub mod cli;
pub mod config;
pub mod eval;
pub mod grades;
pub mod run;
pub mod serve;
pub mod workspace;

use std::fmt;

pub use cli::{Cli, Command};

/// Exit statuses shared by every command.
pub mod exit {
    pub const OK: u8 = 0;
    /// Unexpected I/O or internal errors.
    pub const INTERNAL: u8 = 1;
    pub const INPUT: u8 = 2;
    pub const BACKEND: u8 = 3;
    pub const INCOMPLETE: u8 = 4;
}

/// A command error paired with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn input(message: impl fmt::Display) -> Self {
        Self::new(exit::INPUT, anyhow::anyhow!("{message}"))
    }

    pub fn backend(message: impl fmt::Display) -> Self {
        Self::new(exit::BACKEND, anyhow::anyhow!("{message}"))
    }

    pub fn incomplete(message: impl fmt::Display) -> Self {
        Self::new(exit::INCOMPLETE, anyhow::anyhow!("{message}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(exit::INTERNAL, e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::new(exit::INTERNAL, e)
    }
}

/// Attaches an exit status to any error.
pub trait ExitOnErr<T> {
    fn exit_with(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitOnErr<T> for Result<T, E> {
    fn exit_with(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(code, e))
    }
}

pub type CmdResult = Result<(), Failure>;

/// Runs a parsed command line.
pub fn execute(cli: Cli) -> CmdResult {
    let ws = workspace::Workspace::new(&cli.workspace);
    let cfg = config::CliConfig::load(&ws, cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(args) => cases::ingest(&ws, &args),
        Command::Preprocess(args) => cases::preprocess(&ws, &cfg, &args),
        Command::Simulate(args) => cases::simulate(&ws, &cfg, &args),
        Command::Run(args) => run::run(&ws, &cfg, &args),
        Command::Serve(args) => serve::serve(&ws, &cfg, &args),
        Command::Eval(args) => eval::eval(&ws, &cfg, &args),
        Command::Report(args) => eval::report(&ws, &args),
        Command::Export(args) => grades::export(&ws, &args),
        Command::Import(args) => grades::import(&ws, &args),
    }
}
