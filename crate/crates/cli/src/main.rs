mod config;
mod fit;
mod manifest;
mod output;
mod prior;
mod simulate;
mod summarize;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hsbm::NetworkFormat;

/// Two-level stochastic blockmodel: simulate, fit, diagnose and summarize.
#[derive(Debug, Parser)]
#[command(name = "hsbm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic network with known structure.
    Simulate(simulate::SimulateArgs),
    /// Fit the model by MCMC or variational Bayes with parallel restarts.
    Fit(fit::FitArgs),
    /// Monte Carlo and analytic prior diagnostics for the occupied counts.
    PriorDiag(prior::PriorArgs),
    /// Co-membership, point partitions, orderings and comparisons from fit outputs.
    Summarize(summarize::SummarizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    EdgeList,
    Dense,
}

impl From<FormatArg> for NetworkFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::EdgeList => NetworkFormat::EdgeList,
            FormatArg::Dense => NetworkFormat::Dense,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct NetworkArgs {
    /// Network file.
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long, value_enum, default_value = "edge-list")]
    pub format: FormatArg,
}

/// Bad arguments or configuration; exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Every run failed for numerical reasons; exit code 3.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if cause.is::<NumericalFailure>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<hsbm::Error>() {
            return match e {
                _ if e.is_numerical() => 3,
                hsbm::Error::InvalidConfig(_)
                | hsbm::Error::UnknownScenario { .. }
                | hsbm::Error::Domain(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Fit(a) => fit::run(a),
        Command::PriorDiag(a) => prior::run(a),
        Command::Summarize(a) => summarize::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
