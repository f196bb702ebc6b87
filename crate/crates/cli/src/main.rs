use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use ccr_cli::{run, CliError, Format, Mode, Overrides, RunSpec};

#[derive(Debug, Parser)]
#[command(name = "ccr", version, about = "Counterparty credit risk pricing, axiom checks and tranche jobs")]
struct Cli {
    #[command(subcommand)]
    mode: Mode,
    /// JSON run spec.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report file; overrides `output.path`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    paths: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
}

fn execute(cli: &Cli) -> Result<u8, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::invalid("config", "pass the run spec with --config"))?;
    let mut spec = RunSpec::load(path)?;
    spec.apply(&Overrides {
        out: cli.out.clone(),
        format: cli.format,
        seed: cli.seed,
        paths: cli.paths,
        workers: cli.workers,
    });
    let outcome = run(&spec, cli.mode)?;
    let bytes = outcome.report.to_bytes(spec.output.format)?;
    match &spec.output.path {
        Some(p) => std::fs::write(p, &bytes).map_err(|source| CliError::Io { path: p.clone(), source })?,
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|source| CliError::Io { path: "<stdout>".into(), source })?,
    }
    for failure in &outcome.failed_expectations {
        eprintln!("expected pass: {failure}");
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
