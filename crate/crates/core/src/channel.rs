use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A sensed quantity. The set is closed.
///
/// Variants are declared in alphabetical order of their wire names so that
/// the derived `Ord` is the canonical channel order used in renderings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    /// Methane concentration, ppm.
    #[serde(rename = "CH4_PPM")]
    Ch4Ppm,
    /// Carbon monoxide concentration, ppm.
    #[serde(rename = "CO_PPM")]
    CoPpm,
    /// Ambient light, raw 16-bit sensor counts.
    #[serde(rename = "LIGHT_RAW")]
    LightRaw,
    /// Temperature, degrees Celsius.
    #[serde(rename = "TEMP_C")]
    TempC,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown channel `{0}`")]
pub struct UnknownChannel(pub String);

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Ch4Ppm, Channel::CoPpm, Channel::LightRaw, Channel::TempC];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Ch4Ppm => "CH4_PPM",
            Channel::CoPpm => "CO_PPM",
            Channel::LightRaw => "LIGHT_RAW",
            Channel::TempC => "TEMP_C",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Channel::Ch4Ppm | Channel::CoPpm => "ppm",
            Channel::LightRaw => "counts",
            Channel::TempC => "°C",
        }
    }

    /// Number of decimals in every textual rendering of a value.
    pub fn decimals(self) -> usize {
        match self {
            Channel::TempC => 1,
            _ => 0,
        }
    }

    /// Renders a value at the channel's canonical precision.
    pub fn format_value(self, value: f64) -> String {
        let s = format!("{:.*}", self.decimals(), value);
        // never print a negative zero
        if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
            s[1..].to_string()
        } else {
            s
        }
    }

    /// Renders an optional value, `NULL` for absence.
    pub fn format_optional(self, value: Option<f64>) -> String {
        match value {
            Some(v) => self.format_value(v),
            None => "NULL".to_string(),
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            Channel::Ch4Ppm => 1,
            Channel::CoPpm => 2,
            Channel::LightRaw => 3,
            Channel::TempC => 4,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = UnknownChannel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| UnknownChannel(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_alphabetical() {
        let mut names: Vec<_> = Channel::ALL.iter().map(|c| c.name()).collect();
        names.sort_unstable();
        let ordered: Vec<_> = Channel::ALL.iter().map(|c| c.name()).collect();
        assert_eq!(names, ordered);
        assert!(Channel::LightRaw < Channel::TempC);
    }

    #[test]
    fn parse_names() {
        for c in Channel::ALL {
            assert_eq!(c.name().parse::<Channel>().unwrap(), c);
        }
        assert!("O2_PCT".parse::<Channel>().is_err());
    }

    #[test]
    fn canonical_precision() {
        assert_eq!(Channel::TempC.format_value(25.5), "25.5");
        assert_eq!(Channel::TempC.format_value(-0.0), "0.0");
        assert_eq!(Channel::TempC.format_value(-0.02), "0.0");
        assert_eq!(Channel::LightRaw.format_value(512.0), "512");
        assert_eq!(Channel::Ch4Ppm.format_optional(None), "NULL");
    }
}
