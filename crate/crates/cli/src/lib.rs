//! Command-line front end for the `medmarg` library.

pub mod args;
pub mod commands;
pub mod error;
pub mod input;
pub mod report;
pub mod study;

pub use args::Cli;
pub use error::{CliError, CliResult};

use args::{Command, Format};
use report::{to_csv, to_json, write_output};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "MEDMARG_THREADS";

/// `--threads` (or all cores), capped by `MEDMARG_THREADS` when set.
pub fn thread_count(flag: Option<usize>) -> CliResult<usize> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => return Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got '{s}'"))),
        },
        Err(_) => None,
    };
    let n = match flag {
        Some(0) => return Err(CliError::Config("--threads must be positive".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    Ok(cap.map_or(n, |c| n.min(c)))
}

fn emit<J: serde::Serialize, R: serde::Serialize>(
    report: &J,
    rows: &[R],
    format: Format,
    out: Option<&std::path::Path>,
) -> CliResult<()> {
    let text = match format {
        Format::Json => to_json(report)?,
        Format::Csv => to_csv(rows)?,
    };
    write_output(&text, out)
}

fn dispatch(command: &Command) -> CliResult<()> {
    match command {
        Command::Fit(a) => {
            let r = commands::cmd_fit(a)?;
            emit(&r, &r.coefficients, a.output.format, a.output.out.as_deref())
        }
        Command::Mediate(a) => {
            let r = commands::cmd_mediate(a)?;
            emit(&r, &r.rows(), a.output.format, a.output.out.as_deref())
        }
        Command::Marginal(a) => {
            let r = commands::cmd_marginal(a)?;
            emit(&r, &r.rows, a.format, a.out.as_deref())
        }
        Command::Sensitivity(a) => {
            let r = commands::cmd_sensitivity(a)?;
            emit(&r, &r.rows, a.format, a.out.as_deref())
        }
        Command::Simulate(a) => {
            let o = commands::cmd_simulate(a)?;
            eprintln!("wrote {} and {}", o.csv_path.display(), o.json_path.display());
            let meta = &o.report.metadata;
            if meta.failed_scenarios > 0 {
                return Err(CliError::PartialStudy { failed: meta.failed_scenarios, total: meta.scenarios });
            }
            Ok(())
        }
    }
}

/// Runs a parsed command line on a dedicated worker pool.
pub fn execute(cli: &Cli) -> CliResult<()> {
    let threads = thread_count(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command))
}
