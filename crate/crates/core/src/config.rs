//! The run-config document.
//!
//! A single TOML file fully determines a run:
//!
//! ```toml
//! [sim]          # seed, rounds, round_interval (s)
//! [link]         # max_range_m, loss_prob
//! [topology]     # max_depth + [[topology.nodes]]
//! [scenario]     # [[scenario.fields]] + [[scenario.events]]
//! [[sensors]]    # per-channel overrides of the built-in device models
//! [gateway]      # tcp / http endpoints, history and subscriber queue sizes
//! [[alerts]]     # threshold rules
//! [output]       # snapshot_file, out_dir
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::alerting::{AlertError, AlertRule};
use crate::channel::Channel;
use crate::environment::{Scenario, ScenarioError, ScenarioSection};
use crate::netsim::{LinkModel, NetsimError, SimConfig, Simulator, DEFAULT_MAX_RANGE_M};
use crate::sensing::{default_sensor_suite, SensorError, SensorOverride, SensorSuite};
use crate::topology::{syntax_error, Topology, TopologyError, TopologySection};

pub const DEFAULT_HISTORY_CAPACITY: usize = 10_000;
pub const DEFAULT_SUBSCRIBER_QUEUE: usize = 64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("sensors: {0}")]
    Sensor(#[from] SensorError),
    #[error("simulation: {0}")]
    Netsim(#[from] NetsimError),
    #[error("alerts: {0}")]
    Alert(#[from] AlertError),
    #[error("gateway: {0}")]
    Gateway(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewaySettings {
    pub tcp: Option<String>,
    pub http: Option<String>,
    pub history_capacity: usize,
    pub subscriber_queue: usize,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        GatewaySettings {
            tcp: None,
            http: None,
            history_capacity: DEFAULT_HISTORY_CAPACITY,
            subscriber_queue: DEFAULT_SUBSCRIBER_QUEUE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputSettings {
    pub snapshot_file: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub topology: Arc<Topology>,
    pub scenario: Scenario,
    pub sensors: SensorSuite,
    pub link: LinkModel,
    pub sim: SimConfig,
    pub gateway: GatewaySettings,
    pub alerts: Vec<AlertRule>,
    pub output: OutputSettings,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    sim: RawSim,
    #[serde(default)]
    link: RawLink,
    topology: TopologySection,
    #[serde(default)]
    scenario: ScenarioSection,
    #[serde(default)]
    sensors: Vec<SensorOverride>,
    #[serde(default)]
    gateway: RawGateway,
    #[serde(default)]
    alerts: Vec<AlertRule>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSim {
    seed: u64,
    rounds: u64,
    round_interval: f64,
}

impl Default for RawSim {
    fn default() -> Self {
        let d = SimConfig::default();
        RawSim { seed: d.seed, rounds: d.rounds, round_interval: d.round_interval }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawLink {
    max_range_m: f64,
    loss_prob: f64,
}

impl Default for RawLink {
    fn default() -> Self {
        RawLink { max_range_m: DEFAULT_MAX_RANGE_M, loss_prob: 0.0 }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawGateway {
    tcp: Option<String>,
    http: Option<String>,
    history_capacity: usize,
    subscriber_queue: usize,
}

impl Default for RawGateway {
    fn default() -> Self {
        let d = GatewaySettings::default();
        RawGateway {
            tcp: d.tcp,
            http: d.http,
            history_capacity: d.history_capacity,
            subscriber_queue: d.subscriber_queue,
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    snapshot_file: Option<PathBuf>,
    out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let (line, column, message) = syntax_error(text, &e);
            ConfigError::Syntax { line, column, message }
        })?;
        let topology = Arc::new(raw.topology.build()?);
        let scenario = raw.scenario.build()?;
        let sensed: BTreeSet<Channel> = topology.sensing_pairs().map(|(_, c)| c).collect();
        let mut sensors = default_sensor_suite(&sensed);
        for o in &raw.sensors {
            o.apply(&mut sensors)?;
        }
        let link = LinkModel::new(raw.link.max_range_m, raw.link.loss_prob)?;
        let sim = SimConfig { seed: raw.sim.seed, rounds: raw.sim.rounds, round_interval: raw.sim.round_interval };
        if raw.gateway.history_capacity == 0 || raw.gateway.subscriber_queue == 0 {
            return Err(ConfigError::Gateway("history_capacity and subscriber_queue must be positive".into()));
        }
        // duplicate ids and malformed rules are rejected up front
        crate::alerting::AlertEngine::with_rules(raw.alerts.iter().cloned())?;
        let config = RunConfig {
            topology,
            scenario,
            sensors,
            link,
            sim,
            gateway: GatewaySettings {
                tcp: raw.gateway.tcp,
                http: raw.gateway.http,
                history_capacity: raw.gateway.history_capacity,
                subscriber_queue: raw.gateway.subscriber_queue,
            },
            alerts: raw.alerts,
            output: OutputSettings { snapshot_file: raw.output.snapshot_file, out_dir: raw.output.out_dir },
        };
        config.simulator()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn simulator(&self) -> Result<Simulator, NetsimError> {
        Simulator::new(self.topology.clone(), self.scenario.clone(), self.sensors.clone(), self.link, self.sim)
    }
}
