mod args;
mod commands;
mod serve;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

/// Exit status for I/O failures (missing or unreadable paths, busy port).
const EXIT_IO: u8 = 3;
/// Exit status for malformed or inconsistent data and configs.
const EXIT_DATA: u8 = 4;

fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<azoo_core::Error>() {
            return match e {
                azoo_core::Error::Io(_) | azoo_core::Error::MissingStream(_) => (EXIT_IO, "io"),
                _ => (EXIT_DATA, "invalid-data"),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return (EXIT_IO, "io");
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() || cause.downcast_ref::<csv::Error>().is_some() {
            return (EXIT_DATA, "invalid-data");
        }
    }
    (1, "error")
}

fn broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) if broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = classify(&err);
            eprintln!("azoo: error[{kind}]: {err:#}");
            ExitCode::from(code)
        }
    }
}
