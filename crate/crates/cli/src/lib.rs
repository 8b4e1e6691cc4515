//! Run, replay and export drivers behind the `minewatch` binary.
//!
//! The simulation and publication loop is the gateway's single writer; the
//! TCP and HTTP services run alongside it on the same runtime.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use log::{info, warn};
use minewatch_core::config::{ConfigError, RunConfig};
use minewatch_core::netsim::LinkModel;
use minewatch_core::{Channel, NodeAddress};
use minewatch_gateway::series::series_csv;
use minewatch_gateway::{build_snapshot, render_snapshot, BindError, Gateway, GatewayOptions, PublishError, Server};
use thiserror::Error;
use tokio::time::MissedTickBehavior;

/// How long shutdown waits for streaming clients to drain.
pub const DRAIN_GRACE: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Bind(#[from] BindError),
    #[error("{0}")]
    Publish(#[from] PublishError),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Bind(_) => 3,
            CliError::Publish(_) | CliError::Output { .. } => 1,
        }
    }
}

/// Command-line overrides of the `[sim]` and `[link]` sections.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimOverrides {
    pub seed: Option<u64>,
    pub rounds: Option<u64>,
    pub loss: Option<f64>,
}

pub fn load_config(path: &Path, o: SimOverrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = o.seed {
        cfg.sim.seed = seed;
    }
    if let Some(rounds) = o.rounds {
        cfg.sim.rounds = rounds;
    }
    if let Some(loss) = o.loss {
        cfg.link = LinkModel::new(cfg.link.max_range_m, loss).map_err(ConfigError::from)?;
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Publish rounds back to back instead of one per `round_interval`.
    pub fast: bool,
    /// Line-protocol endpoint; falls back to `[gateway] tcp`.
    pub tcp: Option<String>,
    /// HTTP endpoint; falls back to `[gateway] http`.
    pub http: Option<String>,
    /// Do not serve at all, whatever the config says.
    pub no_serve: bool,
    /// Keep serving after the last round until interrupted.
    pub hold: bool,
    pub snapshot_file: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunSummary {
    pub rounds: u64,
    pub null_readings: u64,
    pub alarms: u64,
    pub interrupted: bool,
}

/// Files under `--out`: every snapshot rendering, every transmission and
/// every alarm, each appended in publication order.
struct OutDir {
    snapshots: (PathBuf, BufWriter<File>),
    delivery: (PathBuf, BufWriter<File>),
    alarms: (PathBuf, BufWriter<File>),
}

fn create(path: PathBuf) -> Result<(PathBuf, BufWriter<File>), CliError> {
    match File::create(&path) {
        Ok(f) => Ok((path, BufWriter::new(f))),
        Err(source) => Err(CliError::Output { path, source }),
    }
}

fn append(out: &mut (PathBuf, BufWriter<File>), bytes: &[u8]) -> Result<(), CliError> {
    out.1.write_all(bytes).map_err(|source| CliError::Output { path: out.0.clone(), source })
}

impl OutDir {
    fn open(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Output { path: dir.to_path_buf(), source })?;
        Ok(OutDir {
            snapshots: create(dir.join("snapshots.log"))?,
            delivery: create(dir.join("delivery.log"))?,
            alarms: create(dir.join("alarms.log"))?,
        })
    }

    fn flush(&mut self) -> Result<(), CliError> {
        for out in [&mut self.snapshots, &mut self.delivery, &mut self.alarms] {
            out.1.flush().map_err(|source| CliError::Output { path: out.0.clone(), source })?;
        }
        Ok(())
    }
}

fn make_gateway(
    cfg: &RunConfig,
    history_capacity: usize,
    snapshot_file: Option<PathBuf>,
) -> Result<Arc<Gateway>, CliError> {
    let options = GatewayOptions { history_capacity, subscriber_queue: cfg.gateway.subscriber_queue, snapshot_file };
    let gw = Gateway::new(cfg.topology.clone(), options)
        .with_rules(cfg.alerts.iter().cloned())
        .map_err(ConfigError::from)?;
    Ok(Arc::new(gw))
}

async fn start_server(gw: Arc<Gateway>, tcp: Option<String>, http: Option<String>) -> Result<Option<Server>, CliError> {
    if tcp.is_none() && http.is_none() {
        return Ok(None);
    }
    let tcp = match tcp {
        Some(a) => Some(minewatch_gateway::bind(&a).await?),
        None => None,
    };
    let http = match http {
        Some(a) => Some(minewatch_gateway::bind(&a).await?),
        None => None,
    };
    let server = minewatch_gateway::serve(gw, tcp, http);
    if let Some(a) = server.tcp_addr {
        info!("line protocol on {a}");
    }
    if let Some(a) = server.http_addr {
        info!("http on {a}");
    }
    Ok(Some(server))
}

/// Runs the configured simulation, publishing every round.
pub async fn run(cfg: RunConfig, opts: RunOptions) -> Result<RunSummary, CliError> {
    let sim = cfg.simulator().map_err(ConfigError::from)?;
    let snapshot_file = opts.snapshot_file.clone().or_else(|| cfg.output.snapshot_file.clone());
    let out_dir = opts.out_dir.clone().or_else(|| cfg.output.out_dir.clone());
    let gw = make_gateway(&cfg, cfg.gateway.history_capacity, snapshot_file.clone())?;
    let (tcp, http) = if opts.no_serve {
        (None, None)
    } else {
        (opts.tcp.clone().or_else(|| cfg.gateway.tcp.clone()), opts.http.clone().or_else(|| cfg.gateway.http.clone()))
    };
    let server = start_server(gw.clone(), tcp, http).await?;
    if let Some(parent) = snapshot_file.as_deref().and_then(Path::parent).filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Output { path: parent.to_path_buf(), source })?;
    }
    let mut out = out_dir.as_deref().map(OutDir::open).transpose()?;

    let mut ticker = tokio::time::interval(Duration::from_secs_f64(cfg.sim.round_interval));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let interrupt = tokio::signal::ctrl_c();
    tokio::pin!(interrupt);

    let mut summary = RunSummary::default();
    let result: Result<(), CliError> = async {
        for round in sim.run_sim() {
            if !opts.fast {
                tokio::select! {
                    _ = ticker.tick() => {}
                    _ = &mut interrupt => {
                        summary.interrupted = true;
                        break;
                    }
                }
            }
            let snapshot = build_snapshot(&round, &cfg.topology).expect("simulator covers every sensing pair");
            summary.null_readings += snapshot.null_count() as u64;
            let rendered = out.is_some().then(|| render_snapshot(&snapshot));
            let alarms = gw.publish(snapshot)?;
            summary.rounds += 1;
            summary.alarms += alarms.len() as u64;
            for a in &alarms {
                info!("{a}");
            }
            if let (Some(out), Some(rendered)) = (out.as_mut(), rendered) {
                append(&mut out.snapshots, &rendered)?;
                for d in &round.delivery_log {
                    append(&mut out.delivery, format!("{d}\n").as_bytes())?;
                }
                for a in &alarms {
                    append(&mut out.alarms, format!("{a}\n").as_bytes())?;
                }
            }
            if opts.fast {
                // let server tasks run between back-to-back publications
                tokio::task::yield_now().await;
            }
        }
        Ok(())
    }
    .await;
    if let Some(out) = out.as_mut() {
        out.flush()?;
    }
    if let Some(server) = server {
        if result.is_ok() && opts.hold && !summary.interrupted {
            info!("run complete, serving until interrupted");
            if let Err(e) = (&mut interrupt).await {
                warn!("cannot wait for interrupt: {e}");
            }
        }
        server.shutdown(DRAIN_GRACE).await;
    }
    result.map(|()| summary)
}

/// Concatenated snapshot renderings of a full run, without serving.
pub fn replay(cfg: &RunConfig, mut sink: impl Write) -> std::io::Result<u64> {
    let sim = cfg.simulator().expect("validated config builds a simulator");
    let mut n = 0;
    for round in sim.run_sim() {
        let snapshot = build_snapshot(&round, &cfg.topology).expect("simulator covers every sensing pair");
        sink.write_all(&render_snapshot(&snapshot))?;
        n += 1;
    }
    sink.flush()?;
    Ok(n)
}

/// CSV series of one node channel over a full replay of the config.
pub fn export(cfg: &RunConfig, addr: &str, channel: &str) -> Result<Vec<u8>, CliError> {
    let address: NodeAddress = addr.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
    let channel: Channel = channel.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
    let node = cfg.topology.get(&address).ok_or_else(|| CliError::Usage(format!("unknown node {address}")))?;
    if !node.channels.contains(&channel) {
        return Err(CliError::Usage(format!("node {address} does not sense {channel}")));
    }
    let capacity = usize::try_from(cfg.sim.rounds).unwrap_or(usize::MAX).max(1);
    let gw = make_gateway(cfg, capacity, None)?;
    let sim = cfg.simulator().map_err(ConfigError::from)?;
    for round in sim.run_sim() {
        gw.publish(build_snapshot(&round, &cfg.topology).expect("simulator covers every sensing pair"))?;
    }
    let points = gw.series(&address, channel, 0, u64::MAX).unwrap_or_default();
    Ok(series_csv(channel, &points))
}
