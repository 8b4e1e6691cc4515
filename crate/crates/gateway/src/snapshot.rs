//! The base station's per-round view and its canonical text rendering.
//!
//! ```text
//! SNAPSHOT <seq> <sim_time_ms>
//! NODE <addr> <CHANNEL>=<value|NULL> ...
//! END
//! ```
//!
//! Nodes appear in address order, channels alphabetically, values at the
//! channel's canonical precision, `\n` line endings throughout.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use minewatch_core::netsim::RoundResult;
use minewatch_core::{Channel, NodeAddress, Topology};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnapshotError {
    #[error("round {round} does not cover the topology: {missing} missing, {extra} unexpected pairs")]
    CoverageMismatch { round: u64, missing: usize, extra: usize },
    #[error("malformed snapshot: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub address: NodeAddress,
    pub channel: Channel,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub seq: u64,
    pub sim_time: f64,
    pub entries: Vec<Entry>,
}

pub fn sim_time_ms(sim_time: f64) -> u64 {
    (sim_time * 1000.0).round() as u64
}

impl Snapshot {
    pub fn sim_time_ms(&self) -> u64 {
        sim_time_ms(self.sim_time)
    }

    pub fn value(&self, addr: &NodeAddress, channel: Channel) -> Option<Option<f64>> {
        self.entries.iter().find(|e| &e.address == addr && e.channel == channel).map(|e| e.value)
    }

    /// Entries in the subtree rooted at `root` (inclusive).
    pub fn cluster(&self, root: &NodeAddress) -> Snapshot {
        Snapshot {
            seq: self.seq,
            sim_time: self.sim_time,
            entries: self.entries.iter().filter(|e| e.address.is_descendant_of(root)).cloned().collect(),
        }
    }

    pub fn null_count(&self) -> usize {
        self.entries.iter().filter(|e| e.value.is_none()).count()
    }
}

/// Canonical snapshot of one round.
pub fn build_snapshot(r: &RoundResult, topo: &Topology) -> Result<Snapshot, SnapshotError> {
    let expected: BTreeSet<(NodeAddress, Channel)> = topo.sensing_pairs().map(|(a, c)| (a.clone(), c)).collect();
    let missing = expected.iter().filter(|k| !r.readings.contains_key(*k)).count();
    let extra = r.readings.keys().filter(|k| !expected.contains(*k)).count();
    if missing > 0 || extra > 0 {
        return Err(SnapshotError::CoverageMismatch { round: r.round, missing, extra });
    }
    // BTreeMap order is (address, channel): already canonical
    let entries = r
        .readings
        .iter()
        .map(|((address, channel), value)| Entry { address: address.clone(), channel: *channel, value: *value })
        .collect();
    Ok(Snapshot { seq: r.round, sim_time: r.sim_time, entries })
}

pub fn render_snapshot(s: &Snapshot) -> Vec<u8> {
    let mut out = String::with_capacity(32 + s.entries.len() * 16);
    let _ = writeln!(out, "SNAPSHOT {} {}", s.seq, s.sim_time_ms());
    let mut current: Option<&NodeAddress> = None;
    for e in &s.entries {
        if current != Some(&e.address) {
            if current.is_some() {
                out.push('\n');
            }
            let _ = write!(out, "NODE {}", e.address);
            current = Some(&e.address);
        }
        let _ = write!(out, " {}={}", e.channel, e.channel.format_optional(e.value));
    }
    if current.is_some() {
        out.push('\n');
    }
    out.push_str("END\n");
    out.into_bytes()
}

/// Strict inverse of [`render_snapshot`]; rejects partial or trailing data.
pub fn parse_snapshot(bytes: &[u8]) -> Result<Snapshot, SnapshotError> {
    let bad = |m: &str| SnapshotError::Malformed(m.to_string());
    let text = std::str::from_utf8(bytes).map_err(|_| bad("not UTF-8"))?;
    let body = text.strip_suffix("END\n").ok_or_else(|| bad("missing END terminator"))?;
    let mut lines = body.split_terminator('\n');
    let header = lines.next().ok_or_else(|| bad("missing header"))?;
    let mut parts = header.split(' ');
    if parts.next() != Some("SNAPSHOT") {
        return Err(bad("missing SNAPSHOT header"));
    }
    let seq: u64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad seq"))?;
    let ms: u64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad sim_time_ms"))?;
    if parts.next().is_some() {
        return Err(bad("trailing header fields"));
    }
    let mut entries = Vec::new();
    for line in lines {
        let mut tokens = line.split(' ');
        if tokens.next() != Some("NODE") {
            return Err(SnapshotError::Malformed(format!("unexpected line `{line}`")));
        }
        let address: NodeAddress = tokens.next().and_then(|a| a.parse().ok()).ok_or_else(|| bad("bad node address"))?;
        let mut any = false;
        for token in tokens {
            let (channel, value) = token.split_once('=').ok_or_else(|| bad("bad reading"))?;
            let channel: Channel = channel.parse().map_err(|_| bad("unknown channel"))?;
            let value = match value {
                "NULL" => None,
                v => Some(v.parse::<f64>().map_err(|_| bad("bad value"))?),
            };
            entries.push(Entry { address: address.clone(), channel, value });
            any = true;
        }
        if !any {
            return Err(bad("node line without readings"));
        }
    }
    Ok(Snapshot { seq, sim_time: ms as f64 / 1000.0, entries })
}
