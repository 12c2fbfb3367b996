use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use isac_cr::sweep::{self, RunConfig};
use isac_cr::Error;

#[derive(Parser)]
#[command(name = "isac-cr", version, about = "CRB-rate tradeoff for multicast ISAC")]
struct Cli {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Channel CSV, one user per row.
    #[arg(long, global = true)]
    channels: Option<PathBuf>,
    /// Appends progress lines to this file.
    #[arg(long, global = true)]
    log: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// CRB-minimizing and rate-maximizing endpoints as JSON.
    Endpoints,
    /// Rates of all schemes over a CRB-threshold grid as CSV.
    Sweep,
    /// Average rates versus the number of users as CSV.
    Ksweep {
        /// Comma-separated user counts; overrides k_list.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
    },
    /// Monte Carlo CRB check as JSON.
    Montecarlo,
    /// Writes generated channels as CSV.
    GenChannels,
}

enum Failure {
    Config(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::Parse { .. } | Error::Io(_) | Error::DimensionMismatch { .. } => {
                Failure::Config(e.to_string())
            }
            other => Failure::Solver(other.to_string()),
        }
    }
}

struct Logger(Option<std::fs::File>);

impl Logger {
    fn open(path: Option<&Path>) -> Result<Self, Failure> {
        match path {
            None => Ok(Self(None)),
            Some(p) => OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map(|f| Self(Some(f)))
                .map_err(|e| Failure::Config(format!("cannot open log {}: {e}", p.display()))),
        }
    }

    fn line(&mut self, msg: &str) {
        if let Some(f) = &mut self.0 {
            let _ = writeln!(f, "{msg}");
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut run = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        run.seed = seed;
    }
    if let Some(path) = &cli.channels {
        run.channels = Some(path.clone());
    }
    run.validate()?;
    Ok(run)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let run = load_config(cli)?;
    let mut log = Logger::open(cli.log.as_deref())?;
    let out = cli.out.as_deref();
    let start = Instant::now();
    let text = match &cli.command {
        Command::Endpoints => sweep::to_json(&sweep::endpoints(&run, &run.load_channels()?)?),
        Command::Sweep => {
            let ch = run.load_channels()?;
            let rows = sweep::sweep(&run, &ch)?;
            for r in &rows {
                log.line(&format!(
                    "gamma={:.6} optimal={:?} beamforming={:?} isotropic={:?}",
                    r.gamma, r.optimal.status, r.beamforming.status, r.isotropic.status
                ));
            }
            sweep::sweep_csv(&rows)
        }
        Command::Ksweep { k } => {
            let k_list = k.clone().unwrap_or_else(|| run.k_list.clone());
            let rows = sweep::k_sweep(&run, &k_list)?;
            for r in &rows {
                log.line(&format!("k={} failures={}", r.k, r.failures));
            }
            sweep::k_sweep_csv(&rows)
        }
        Command::Montecarlo => {
            let ch = match run.mc_scheme {
                sweep::Scheme::Optimal => Some(run.load_channels()?),
                _ => None,
            };
            sweep::to_json(&sweep::montecarlo(&run, ch.as_ref())?)
        }
        Command::GenChannels => {
            let mut buf = Vec::new();
            run.load_channels()?.write_csv(&mut buf)?;
            String::from_utf8(buf).expect("CSV is UTF-8")
        }
    };
    sweep::emit(&text, out)?;
    log.line(&format!("done in {:.3}s", start.elapsed().as_secs_f64()));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver error: {msg}");
            ExitCode::from(3)
        }
    }
}
