mod args;
mod commands;
mod io;
mod job;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use job::JobFile;

/// A problem with how the tool was invoked rather than with the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const EXIT_DATA: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<mbrkit::Error>() {
        Some(
            mbrkit::Error::Config(_)
            | mbrkit::Error::UnknownUtility { .. }
            | mbrkit::Error::UtilityKindMismatch { .. },
        ) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn resolve(cli: Cli) -> anyhow::Result<(Command, usize, Option<std::path::PathBuf>)> {
    match (cli.job, cli.command) {
        (Some(_), Some(_)) => Err(UsageError("give either --job or a subcommand, not both".into()).into()),
        (None, None) => Err(UsageError("no subcommand given; see --help".into()).into()),
        (None, Some(cmd)) => Ok((cmd, cli.workers, cli.save_job)),
        (Some(path), None) => {
            let job = JobFile::load(&path).map_err(|e| UsageError(format!("{e:#}")))?;
            let argv = job.to_argv().map_err(|e| UsageError(format!("{e:#}")))?;
            let parsed = Cli::try_parse_from(argv).map_err(|e| UsageError(format!("job file {}: {e}", path.display())))?;
            let cmd = parsed
                .command
                .ok_or_else(|| UsageError("job file names no command".into()))?;
            Ok((cmd, parsed.workers, cli.save_job))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (command, workers, save_job) = resolve(cli)?;
    let job = JobFile::from_command(&command, workers);
    log::info!("job: {}", serde_json::to_string(&job)?);
    if let Some(p) = save_job {
        io::write_json(&p, &job)?;
    }
    match &command {
        Command::Sample(a) => commands::sample(a, workers),
        Command::Decide(a) => commands::decide(a, workers),
        Command::Distill(a) => commands::distill(a, workers),
        Command::Mix(a) => commands::mix(a),
        Command::Filter(a) => commands::filter(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Metaeval(a) => commands::metaeval(a),
        Command::Crossbleu(a) => commands::crossbleu(a),
        Command::ToyModel(a) => commands::toy_model(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
