//! Sensor models: noisy, quantised, range-clamped sampling of ground truth.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use thiserror::Error;

use crate::channel::Channel;
use crate::rng::RngKey;
use crate::topology::NodeAddress;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensorError {
    #[error("{channel}: quant_step must be positive, got {value}")]
    InvalidStep { channel: Channel, value: f64 },
    #[error("{channel}: min_value {min} must be below max_value {max}")]
    InvalidRange { channel: Channel, min: f64, max: f64 },
    #[error("{channel}: range bound {value} is not a multiple of quant_step {step}")]
    OffGrid { channel: Channel, value: f64, step: f64 },
    #[error("{channel}: sensor_noise_std must be non-negative, got {value}")]
    InvalidNoise { channel: Channel, value: f64 },
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    pub channel: Channel,
    pub quant_step: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub sensor_noise_std: f64,
}

impl SensorSpec {
    pub fn new(
        channel: Channel,
        quant_step: f64,
        min_value: f64,
        max_value: f64,
        sensor_noise_std: f64,
    ) -> Result<Self, SensorError> {
        let spec = SensorSpec { channel, quant_step, min_value, max_value, sensor_noise_std };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let channel = self.channel;
        if !(self.quant_step > 0.0 && self.quant_step.is_finite()) {
            return Err(SensorError::InvalidStep { channel, value: self.quant_step });
        }
        if !self.min_value.is_finite() || !self.max_value.is_finite() || self.min_value >= self.max_value {
            return Err(SensorError::InvalidRange { channel, min: self.min_value, max: self.max_value });
        }
        // clamped outputs must stay on the quantisation grid
        for bound in [self.min_value, self.max_value] {
            if quantize(bound, self.quant_step) != bound {
                return Err(SensorError::OffGrid { channel, value: bound, step: self.quant_step });
            }
        }
        if self.sensor_noise_std.is_nan() || self.sensor_noise_std < 0.0 {
            return Err(SensorError::InvalidNoise { channel, value: self.sensor_noise_std });
        }
        Ok(())
    }
}

/// Rounds to the nearest multiple of `step`, ties away from zero.
pub fn quantize(value: f64, step: f64) -> f64 {
    (value / step).round() * step
}

/// One sensor reading for a round; `None` means absent at the base station.
#[derive(Debug, Clone, PartialEq)]
pub struct Reading {
    pub address: NodeAddress,
    pub channel: Channel,
    pub value: Option<f64>,
}

impl Reading {
    pub fn new(address: NodeAddress, channel: Channel, value: Option<f64>) -> Self {
        Reading { address, channel, value }
    }
}

/// Samples a sensor: add noise, quantise, clamp to the device range.
pub fn sample(spec: &SensorSpec, truth: f64, rng_key: RngKey) -> f64 {
    let noisy = if spec.sensor_noise_std > 0.0 { truth + spec.sensor_noise_std * rng_key.gaussian() } else { truth };
    quantize(noisy, spec.quant_step).clamp(spec.min_value, spec.max_value)
}

pub type SensorSuite = BTreeMap<Channel, SensorSpec>;

/// Built-in device models for each requested channel.
///
/// | channel   | device     | step | range        | noise σ |
/// |-----------|------------|------|--------------|---------|
/// | TEMP_C    | TMP-275    | 0.5  | −40..125     | 0.1     |
/// | LIGHT_RAW | APDS-9300  | 1    | 0..65535     | 0       |
/// | CH4_PPM   | TGS-2611   | 1    | 0..50000     | 5       |
/// | CO_PPM    | TGS-2442   | 1    | 0..1000      | 1       |
///
/// Gas ranges are placeholder defaults; override them per deployment.
pub fn default_sensor_suite(channels: &BTreeSet<Channel>) -> SensorSuite {
    channels.iter().map(|&c| (c, default_spec(c))).collect()
}

pub fn default_spec(channel: Channel) -> SensorSpec {
    let (step, min, max, noise) = match channel {
        Channel::TempC => (0.5, -40.0, 125.0, 0.1),
        Channel::LightRaw => (1.0, 0.0, 65_535.0, 0.0),
        Channel::Ch4Ppm => (1.0, 0.0, 50_000.0, 5.0),
        Channel::CoPpm => (1.0, 0.0, 1_000.0, 1.0),
    };
    SensorSpec { channel, quant_step: step, min_value: min, max_value: max, sensor_noise_std: noise }
}

/// One `[[sensors]]` override; unset fields keep the default.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct SensorOverride {
    channel: String,
    quant_step: Option<f64>,
    min_value: Option<f64>,
    max_value: Option<f64>,
    sensor_noise_std: Option<f64>,
}

impl SensorOverride {
    pub(crate) fn apply(&self, suite: &mut SensorSuite) -> Result<(), SensorError> {
        let channel: Channel = self.channel.parse().map_err(|_| SensorError::UnknownChannel(self.channel.clone()))?;
        let mut spec = suite.get(&channel).copied().unwrap_or_else(|| default_spec(channel));
        if let Some(v) = self.quant_step {
            spec.quant_step = v;
        }
        if let Some(v) = self.min_value {
            spec.min_value = v;
        }
        if let Some(v) = self.max_value {
            spec.max_value = v;
        }
        if let Some(v) = self.sensor_noise_std {
            spec.sensor_noise_std = v;
        }
        spec.validate()?;
        suite.insert(channel, spec);
        Ok(())
    }
}
