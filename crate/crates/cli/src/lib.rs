//! `lbal` command-line driver: dataset generation, selection, evaluation and
//! the desk-scale reproduction protocol.

pub mod args;
pub mod commands;
pub mod config;
pub mod protocol;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;
use thiserror::Error;

use crate::args::{Cli, Command};

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid flags or configuration; nothing has been written.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] lbal_core::Error),

    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(_) | CliError::Failed(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 runtime error, 2 usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    run_with_output(argv, &mut std::io::stdout())
}

/// [`run`] with command output (written paths, tables, criterion lines)
/// sent to `out` instead of stdout.
pub fn run_with_output<I, T>(argv: I, out: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match config::expand(argv) {
        Ok(a) => a,
        Err(e) => return report(e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> i32 {
    let _ = writeln!(std::io::stderr(), "error: {e}");
    e.exit_code()
}

/// Runs a parsed command inside a dedicated thread pool.
pub fn execute(cli: &Cli, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Failed(format!("cannot start thread pool: {e}")))?;
    let text = pool.install(|| -> CliResult<String> {
        Ok(match &cli.command {
            Command::Gen(a) => list_paths(&commands::gen(a, cli.seed.unwrap_or(0), &cli.out_dir)?),
            Command::Select(a) => list_paths(&commands::select(a, cli.seed, &cli.out_dir)?),
            Command::Eval(a) => commands::render_tables(&commands::eval(a, &cli.out_dir)?),
            Command::Reproduce(a) => return protocol::reproduce(a, out).map(|()| String::new()),
        })
    })?;
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Failed(format!("cannot write output: {e}")))
}

fn list_paths(paths: &[std::path::PathBuf]) -> String {
    paths.iter().map(|p| format!("{}\n", p.display())).collect()
}
