//! Synthetic ground truth sampled by the sensors.
//!
//! A field value is a pure function of `(field, events, position, time, seed)`:
//!
//! ```text
//! baseline + amplitude·sin(2πt/period) + gradient·x + noise_std·N(key) + Σ events
//! ```
//!
//! where `N(key)` is a standard normal drawn from [`RngKey`] keyed by the
//! seed, the channel, the position quantised to millimetres and the time
//! quantised to milliseconds. An event contributes
//! `magnitude·(1 − e^(−(t−start)/τ))` inside its radius once started.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::channel::Channel;
use crate::rng::RngKey;
use crate::topology::{syntax_error, Position};

const DEFAULT_DIURNAL_PERIOD: f64 = 86_400.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("invalid {parameter} for {channel}: {value}")]
    InvalidParameter { channel: Channel, parameter: &'static str, value: f64 },
    #[error("channel {0} declared twice")]
    DuplicateField(Channel),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvField {
    pub channel: Channel,
    pub baseline: f64,
    pub diurnal_amplitude: f64,
    pub diurnal_period: f64,
    pub noise_std: f64,
    pub spatial_gradient: f64,
}

impl EnvField {
    /// A constant field with every variation term off.
    pub fn constant(channel: Channel, baseline: f64) -> Self {
        EnvField {
            channel,
            baseline,
            diurnal_amplitude: 0.0,
            diurnal_period: DEFAULT_DIURNAL_PERIOD,
            noise_std: 0.0,
            spatial_gradient: 0.0,
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let checks = [
            ("baseline", self.baseline, self.baseline.is_finite()),
            ("diurnal_amplitude", self.diurnal_amplitude, self.diurnal_amplitude >= 0.0),
            ("diurnal_period", self.diurnal_period, self.diurnal_period > 0.0),
            ("noise_std", self.noise_std, self.noise_std >= 0.0),
            ("spatial_gradient", self.spatial_gradient, self.spatial_gradient.is_finite()),
        ];
        check_all(self.channel, &checks)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioEvent {
    pub start_time: f64,
    pub channel: Channel,
    pub center: Position,
    pub radius: f64,
    pub magnitude: f64,
    pub rise_time_constant: f64,
}

impl ScenarioEvent {
    /// Contribution of this event at `pos` and time `t`.
    pub fn contribution(&self, pos: Position, t: f64) -> f64 {
        if t < self.start_time || pos.distance(self.center) > self.radius {
            return 0.0;
        }
        self.magnitude * (1.0 - (-(t - self.start_time) / self.rise_time_constant).exp())
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let checks = [
            ("start_time", self.start_time, self.start_time >= 0.0),
            ("radius", self.radius, self.radius > 0.0),
            ("magnitude", self.magnitude, self.magnitude.is_finite()),
            ("rise_time_constant", self.rise_time_constant, self.rise_time_constant > 0.0),
            ("center", self.center.x, self.center.x.is_finite() && self.center.y.is_finite()),
        ];
        check_all(self.channel, &checks)
    }
}

fn check_all(channel: Channel, checks: &[(&'static str, f64, bool)]) -> Result<(), ScenarioError> {
    for &(parameter, value, ok) in checks {
        // comparisons above are false for NaN, so NaN is rejected too
        if !ok || value.is_nan() {
            return Err(ScenarioError::InvalidParameter { channel, parameter, value });
        }
    }
    Ok(())
}

/// Ground-truth value of `field` at `pos` and time `t` (seconds, `t >= 0`).
pub fn env_value(field: &EnvField, events: &[ScenarioEvent], pos: Position, t: f64, seed: u64) -> f64 {
    let diurnal = field.diurnal_amplitude * (2.0 * std::f64::consts::PI * t / field.diurnal_period).sin();
    let gradient = field.spatial_gradient * pos.x;
    let noise =
        if field.noise_std > 0.0 { field.noise_std * noise_key(field.channel, pos, t, seed).gaussian() } else { 0.0 };
    let leaks: f64 = events.iter().filter(|e| e.channel == field.channel).map(|e| e.contribution(pos, t)).sum();
    field.baseline + diurnal + gradient + noise + leaks
}

fn noise_key(channel: Channel, pos: Position, t: f64, seed: u64) -> RngKey {
    RngKey::new(seed)
        .with_tag(b"env")
        .with(channel.tag())
        .with((pos.x * 1000.0).round() as i64 as u64)
        .with((pos.y * 1000.0).round() as i64 as u64)
        .with((t * 1000.0).round() as i64 as u64)
}

/// Fields keyed by channel plus events sorted by start time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub fields: BTreeMap<Channel, EnvField>,
    pub events: Vec<ScenarioEvent>,
}

impl Scenario {
    pub fn new(fields: Vec<EnvField>, mut events: Vec<ScenarioEvent>) -> Result<Self, ScenarioError> {
        let mut map = BTreeMap::new();
        for f in fields {
            f.validate()?;
            if map.insert(f.channel, f).is_some() {
                return Err(ScenarioError::DuplicateField(f.channel));
            }
        }
        for e in &events {
            e.validate()?;
        }
        events.sort_by(|a, b| a.start_time.total_cmp(&b.start_time));
        Ok(Scenario { fields: map, events })
    }

    /// Truth for `channel` at `pos`, `t`; `None` if the channel has no field.
    pub fn value(&self, channel: Channel, pos: Position, t: f64, seed: u64) -> Option<f64> {
        self.fields.get(&channel).map(|f| env_value(f, &self.events, pos, t, seed))
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ScenarioSection {
    #[serde(default)]
    fields: Vec<FieldEntry>,
    #[serde(default)]
    events: Vec<EventEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldEntry {
    channel: String,
    baseline: f64,
    #[serde(default)]
    diurnal_amplitude: f64,
    #[serde(default = "default_period")]
    diurnal_period: f64,
    #[serde(default)]
    noise_std: f64,
    #[serde(default)]
    spatial_gradient: f64,
}

fn default_period() -> f64 {
    DEFAULT_DIURNAL_PERIOD
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventEntry {
    start_time: f64,
    channel: String,
    center: [f64; 2],
    radius: f64,
    magnitude: f64,
    rise_time_constant: f64,
}

fn channel_of(name: &str) -> Result<Channel, ScenarioError> {
    name.parse().map_err(|_| ScenarioError::UnknownChannel(name.to_string()))
}

impl ScenarioSection {
    pub(crate) fn build(self) -> Result<Scenario, ScenarioError> {
        let fields = self
            .fields
            .into_iter()
            .map(|f| {
                Ok(EnvField {
                    channel: channel_of(&f.channel)?,
                    baseline: f.baseline,
                    diurnal_amplitude: f.diurnal_amplitude,
                    diurnal_period: f.diurnal_period,
                    noise_std: f.noise_std,
                    spatial_gradient: f.spatial_gradient,
                })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let events = self
            .events
            .into_iter()
            .map(|e| {
                Ok(ScenarioEvent {
                    start_time: e.start_time,
                    channel: channel_of(&e.channel)?,
                    center: Position::new(e.center[0], e.center[1]),
                    radius: e.radius,
                    magnitude: e.magnitude,
                    rise_time_constant: e.rise_time_constant,
                })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        Scenario::new(fields, events)
    }
}

#[derive(Deserialize)]
struct ScenarioDocument {
    #[serde(default)]
    scenario: ScenarioSection,
}

/// Parses the `[scenario]` section of a run-config document.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDocument = toml::from_str(text).map_err(|e| {
        let (line, column, message) = syntax_error(text, &e);
        ScenarioError::Syntax { line, column, message }
    })?;
    doc.scenario.build()
}
