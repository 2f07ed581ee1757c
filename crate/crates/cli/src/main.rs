//! `hamcert` command-line front end.

mod arl;
mod certify;
mod monitor;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::Settings;

/// Environment variable consulted for the seed when neither flag nor config sets it.
pub const SEED_ENV: &str = "HAMCERT_SEED";

#[derive(Debug, Parser)]
#[command(name = "hamcert", version, about = "Hamiltonian certification and drift detection experiments")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Master seed; falls back to the config, then HAMCERT_SEED, then the preset.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// `key = value` config file. Flags take precedence over its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fixed-sample certification of one Hamiltonian, or the verdict sweep.
    Certify(certify::Args),
    /// Online CUSUM monitoring of a drifting Hamiltonian.
    Monitor(monitor::Args),
    /// Average run length tables.
    Arl(arl::Args),
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Lib(hamcert::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<hamcert::Error> for CliError {
    fn from(e: hamcert::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use hamcert::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Lib(E::Capacity { .. }) => 3,
            CliError::Lib(E::Commensurability { .. }) => 4,
            CliError::Lib(
                E::Parameter(_) | E::Parse { .. } | E::Coefficient { .. } | E::NormBound { .. } | E::Usage(_),
            ) => 2,
            CliError::Lib(_) => 1,
        }
    }
}

/// Seed resolution shared by the subcommands.
pub fn resolve_seed(settings: &Settings, flag: Option<u64>, preset: u64) -> Result<u64, CliError> {
    if let Some(s) = settings.get("seed", flag)? {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|e| CliError::Config(format!("{SEED_ENV}={v}: {e}"))),
        Err(_) => Ok(preset),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let settings = Settings::load(cli.config.as_deref())?;
    let files = match &cli.command {
        Command::Certify(a) => certify::run(a, &settings, cli.seed)?,
        Command::Monitor(a) => monitor::run(a, &settings, cli.seed)?,
        Command::Arl(a) => arl::run(a, &settings, cli.seed)?,
    };
    settings.finish()?;
    files.commit(&cli.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hamcert: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        use hamcert::Error as E;
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        let cap = E::Capacity {
            what: "qubits",
            size: 30,
            limit: 20,
        };
        assert_eq!(CliError::from(cap).exit_code(), 3);
        let com = E::Commensurability {
            up: 1.0,
            down: -1.1,
            tol: 1e-9,
        };
        assert_eq!(CliError::from(com).exit_code(), 4);
    }
}
