use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use minewatch::{CliError, RunOptions, SimOverrides};
use minewatch_core::config::RunConfig;

#[derive(Parser)]
#[command(name = "minewatch", version, about = "Tree-topology sensor network simulator and base-station gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run-config TOML file
    #[arg(value_name = "CONFIG", required_unless_present = "config")]
    path: Option<PathBuf>,
    /// Run-config TOML file (alternative to the positional argument)
    #[arg(long, conflicts_with = "path")]
    config: Option<PathBuf>,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Args)]
struct SimArgs {
    /// Override [sim] seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override [sim] rounds
    #[arg(long)]
    rounds: Option<u64>,
    /// Override [link] loss_prob
    #[arg(long)]
    loss: Option<f64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let path = self.path.as_ref().or(self.config.as_ref()).expect("clap enforces a config path");
        self.sim.load(path)
    }
}

impl SimArgs {
    fn load(&self, path: &Path) -> Result<RunConfig, CliError> {
        minewatch::load_config(path, SimOverrides { seed: self.seed, rounds: self.rounds, loss: self.loss })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and publish every round through the gateway
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Publish rounds back to back instead of once per round_interval
        #[arg(long)]
        fast: bool,
        /// Serve the line protocol on this address
        #[arg(long, value_name = "TCP-ADDR")]
        serve: Option<String>,
        /// Serve HTTP+JSON on this address
        #[arg(long, value_name = "ADDR")]
        http: Option<String>,
        /// Ignore the config's gateway endpoints and serve nothing
        #[arg(long, conflicts_with_all = ["serve", "http"])]
        no_serve: bool,
        /// Keep serving after the last round until interrupted
        #[arg(long)]
        hold: bool,
        /// Snapshot file rewritten on every publication
        #[arg(long, value_name = "PATH")]
        snapshot_file: Option<PathBuf>,
        /// Directory for snapshots.log, delivery.log and alarms.log
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Print every snapshot rendering of a run to stdout
    Replay {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write the CSV series of one node channel
    Export {
        /// Run-config TOML file
        config: PathBuf,
        /// Node address, e.g. 1.1
        addr: String,
        /// Channel name, e.g. TEMP_C
        channel: String,
        /// Output file (stdout when omitted)
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[command(flatten)]
        sim: SimArgs,
    },
}

fn write_output(path: Option<&PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|source| CliError::Output { path: p.clone(), source }),
        None => std::io::stdout().write_all(bytes).map_err(|source| CliError::Output { path: "stdout".into(), source }),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, fast, serve, http, no_serve, hold, snapshot_file, out } => {
            let cfg = config.load()?;
            let opts = RunOptions { fast, tcp: serve, http, no_serve, hold, snapshot_file, out_dir: out };
            let runtime =
                tokio::runtime::Runtime::new().map_err(|source| CliError::Output { path: "runtime".into(), source })?;
            let summary = runtime.block_on(minewatch::run(cfg, opts))?;
            log::info!(
                "{} rounds published, {} NULL readings, {} alarm events{}",
                summary.rounds,
                summary.null_readings,
                summary.alarms,
                if summary.interrupted { " (interrupted)" } else { "" }
            );
            Ok(())
        }
        Command::Replay { config } => {
            let cfg = config.load()?;
            let stdout = std::io::stdout().lock();
            minewatch::replay(&cfg, std::io::BufWriter::new(stdout))
                .map(|_| ())
                .map_err(|source| CliError::Output { path: "stdout".into(), source })
        }
        Command::Export { config, addr, channel, out, sim } => {
            let cfg = sim.load(&config)?;
            let csv = minewatch::export(&cfg, &addr, &channel)?;
            write_output(out.as_ref(), &csv)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MINEWATCH_LOG", "info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("minewatch: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
