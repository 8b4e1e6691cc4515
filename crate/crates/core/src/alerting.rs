//! Threshold alarms with consecutive-sample hysteresis.
//!
//! State is tracked per `(rule, node)`. A matching numeric reading that
//! satisfies the comparator extends the streak; once the streak reaches the
//! rule's `consecutive` count an inactive alarm is RAISED. The first
//! in-range numeric reading resets the streak and CLEARS an active alarm.
//! NULL readings leave the state untouched.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Channel;
use crate::topology::NodeAddress;

pub const DEFAULT_CONSECUTIVE: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlertError {
    #[error("rule `{0}` already exists")]
    DuplicateId(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("no active alarm for rule `{rule_id}` at node {address}")]
    NotActive { rule_id: String, address: NodeAddress },
    #[error("invalid rule: {0}")]
    InvalidRule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "GE")]
    Ge,
    #[serde(rename = "LE")]
    Le,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Ge => value >= threshold,
            Comparator::Le => value <= threshold,
        }
    }
}

/// Which nodes a rule watches.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Scope {
    #[default]
    All,
    Subtree(NodeAddress),
}

impl Scope {
    pub fn contains(&self, addr: &NodeAddress) -> bool {
        match self {
            Scope::All => true,
            Scope::Subtree(root) => addr.is_descendant_of(root),
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::All => f.write_str("ALL"),
            Scope::Subtree(a) => a.fmt(f),
        }
    }
}

impl FromStr for Scope {
    type Err = AlertError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "ALL" {
            return Ok(Scope::All);
        }
        s.parse().map(Scope::Subtree).map_err(|_| AlertError::InvalidRule(format!("bad scope `{s}`")))
    }
}

impl Serialize for Scope {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scope {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

fn default_consecutive() -> u32 {
    DEFAULT_CONSECUTIVE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlertRule {
    pub id: String,
    pub channel: Channel,
    #[serde(default)]
    pub scope: Scope,
    pub comparator: Comparator,
    pub threshold: f64,
    #[serde(default = "default_consecutive")]
    pub consecutive: u32,
}

impl AlertRule {
    pub fn matches(&self, addr: &NodeAddress, channel: Channel) -> bool {
        channel == self.channel && self.scope.contains(addr)
    }

    pub fn validate(&self) -> Result<(), AlertError> {
        if self.id.is_empty() || !self.id.bytes().all(|b| b.is_ascii_alphanumeric() || b"-_.".contains(&b)) {
            return Err(AlertError::InvalidRule(format!("bad rule id `{}`", self.id)));
        }
        if !self.threshold.is_finite() {
            return Err(AlertError::InvalidRule(format!("{}: threshold must be finite", self.id)));
        }
        if self.consecutive == 0 {
            return Err(AlertError::InvalidRule(format!("{}: consecutive must be at least 1", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlarmKind {
    Raised,
    Cleared,
}

impl fmt::Display for AlarmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlarmKind::Raised => "RAISED",
            AlarmKind::Cleared => "CLEARED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmEvent {
    pub kind: AlarmKind,
    pub rule_id: String,
    pub address: NodeAddress,
    pub channel: Channel,
    pub value: f64,
    pub seq: u64,
}

impl fmt::Display for AlarmEvent {
    /// `ALARM <KIND> <rule> <addr> <CHANNEL>=<value> <seq>`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ALARM {} {} {} {}={} {}",
            self.kind,
            self.rule_id,
            self.address,
            self.channel,
            self.channel.format_value(self.value),
            self.seq
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AlarmState {
    pub streak: u32,
    pub active: bool,
    pub acknowledged: bool,
    raised_seq: u64,
    raised_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveAlarm {
    pub rule_id: String,
    pub address: NodeAddress,
    pub channel: Channel,
    pub raised_seq: u64,
    pub value: f64,
    pub acknowledged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleCommand {
    Add(AlertRule),
    Remove(String),
    List,
    Ack { rule_id: String, address: NodeAddress },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleResponse {
    Added,
    Removed(AlertRule),
    Listing { rules: Vec<AlertRule>, active: Vec<ActiveAlarm> },
    Acknowledged,
}

/// Rules plus per-(rule, node) state.
#[derive(Debug, Clone, Default)]
pub struct AlertEngine {
    rules: BTreeMap<String, AlertRule>,
    states: BTreeMap<(String, NodeAddress), AlarmState>,
}

impl AlertEngine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_rules(rules: impl IntoIterator<Item = AlertRule>) -> Result<Self, AlertError> {
        let mut engine = Self::new();
        for rule in rules {
            engine.add(rule)?;
        }
        Ok(engine)
    }

    pub fn add(&mut self, rule: AlertRule) -> Result<(), AlertError> {
        rule.validate()?;
        if self.rules.contains_key(&rule.id) {
            return Err(AlertError::DuplicateId(rule.id));
        }
        self.rules.insert(rule.id.clone(), rule);
        Ok(())
    }

    pub fn remove(&mut self, id: &str) -> Result<AlertRule, AlertError> {
        let rule = self.rules.remove(id).ok_or_else(|| AlertError::UnknownRule(id.to_string()))?;
        self.states.retain(|(rule_id, _), _| rule_id != id);
        Ok(rule)
    }

    pub fn rules(&self) -> impl Iterator<Item = &AlertRule> {
        self.rules.values()
    }

    pub fn state(&self, rule_id: &str, addr: &NodeAddress) -> Option<&AlarmState> {
        self.states.get(&(rule_id.to_string(), addr.clone()))
    }

    pub fn active(&self) -> Vec<ActiveAlarm> {
        self.states
            .iter()
            .filter(|(_, s)| s.active)
            .map(|((rule_id, address), s)| ActiveAlarm {
                rule_id: rule_id.clone(),
                address: address.clone(),
                channel: self.rules[rule_id].channel,
                raised_seq: s.raised_seq,
                value: s.raised_value,
                acknowledged: s.acknowledged,
            })
            .collect()
    }

    pub fn acknowledge(&mut self, rule_id: &str, address: &NodeAddress) -> Result<(), AlertError> {
        if !self.rules.contains_key(rule_id) {
            return Err(AlertError::UnknownRule(rule_id.to_string()));
        }
        match self.states.get_mut(&(rule_id.to_string(), address.clone())) {
            Some(s) if s.active => {
                s.acknowledged = true;
                Ok(())
            }
            _ => Err(AlertError::NotActive { rule_id: rule_id.to_string(), address: address.clone() }),
        }
    }

    pub fn manage(&mut self, command: RuleCommand) -> Result<RuleResponse, AlertError> {
        match command {
            RuleCommand::Add(rule) => self.add(rule).map(|_| RuleResponse::Added),
            RuleCommand::Remove(id) => self.remove(&id).map(RuleResponse::Removed),
            RuleCommand::List => {
                Ok(RuleResponse::Listing { rules: self.rules.values().cloned().collect(), active: self.active() })
            }
            RuleCommand::Ack { rule_id, address } => {
                self.acknowledge(&rule_id, &address).map(|_| RuleResponse::Acknowledged)
            }
        }
    }

    /// Feeds one snapshot's entries (in snapshot order) through every rule.
    pub fn evaluate<'a, I>(&mut self, seq: u64, entries: I) -> Vec<AlarmEvent>
    where
        I: IntoIterator<Item = (&'a NodeAddress, Channel, Option<f64>)>,
    {
        let mut events = Vec::new();
        for (address, channel, value) in entries {
            let Some(value) = value else { continue };
            for rule in self.rules.values().filter(|r| r.matches(address, channel)) {
                let state = self.states.entry((rule.id.clone(), address.clone())).or_default();
                let kind = if rule.comparator.holds(value, rule.threshold) {
                    state.streak = state.streak.saturating_add(1);
                    if !state.active && state.streak >= rule.consecutive {
                        state.active = true;
                        state.acknowledged = false;
                        state.raised_seq = seq;
                        state.raised_value = value;
                        Some(AlarmKind::Raised)
                    } else {
                        None
                    }
                } else {
                    state.streak = 0;
                    if state.active {
                        state.active = false;
                        state.acknowledged = false;
                        Some(AlarmKind::Cleared)
                    } else {
                        None
                    }
                };
                if let Some(kind) = kind {
                    events.push(AlarmEvent {
                        kind,
                        rule_id: rule.id.clone(),
                        address: address.clone(),
                        channel,
                        value,
                        seq,
                    });
                }
            }
        }
        events
    }
}
