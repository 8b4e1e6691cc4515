//! Round-by-round simulation of the interrupt-call polling protocol.
//!
//! Each round the base station sends an `INTCALL` to each of its children.
//! An end device answers with a `DATAREPLY`; a cluster head first polls its
//! own children the same way and then answers with an `AGGREGATE` carrying
//! its whole subtree. Every frame transmission is an independent Bernoulli
//! trial on the shared [`LinkModel`]; there are no retries, so a lost frame
//! turns the affected readings into `NULL` for that round.

mod frame;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use frame::{decode_frame, encode_frame, Frame, FrameError, FrameKind};

use crate::channel::Channel;
use crate::environment::Scenario;
use crate::rng::RngKey;
use crate::sensing::{sample, Reading, SensorSuite};
use crate::topology::{NodeAddress, NodeRole, NodeSpec, Position, Topology};

pub const DEFAULT_MAX_RANGE_M: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetsimError {
    #[error("max_range_m must be positive, got {0}")]
    InvalidRange(f64),
    #[error("loss_prob must be within [0, 1], got {0}")]
    InvalidLoss(f64),
    #[error("round_interval must be positive, got {0}")]
    InvalidInterval(f64),
    #[error("node {address} senses {channel} but the scenario has no field for it")]
    MissingField { address: NodeAddress, channel: Channel },
    #[error("node {address} senses {channel} but no sensor model is configured")]
    MissingSensor { address: NodeAddress, channel: Channel },
}

/// Radio link shared by every node pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    pub max_range_m: f64,
    pub loss_prob: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel { max_range_m: DEFAULT_MAX_RANGE_M, loss_prob: 0.0 }
    }
}

impl LinkModel {
    pub fn new(max_range_m: f64, loss_prob: f64) -> Result<Self, NetsimError> {
        if max_range_m.is_nan() || max_range_m <= 0.0 {
            return Err(NetsimError::InvalidRange(max_range_m));
        }
        if !(0.0..=1.0).contains(&loss_prob) {
            return Err(NetsimError::InvalidLoss(loss_prob));
        }
        Ok(LinkModel { max_range_m, loss_prob })
    }
}

/// Whether one frame transmission from `src` to `dst` arrives.
pub fn deliver(link: &LinkModel, src: Position, dst: Position, rng_key: RngKey) -> bool {
    if src.distance(dst) > link.max_range_m {
        return false;
    }
    rng_key.uniform() >= link.loss_prob
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub round_interval: f64,
    pub rounds: u64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { round_interval: 1.0, rounds: 600, seed: 0 }
    }
}

impl SimConfig {
    pub fn sim_time(&self, round: u64) -> f64 {
        round as f64 * self.round_interval
    }
}

/// One transmission attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub round: u64,
    pub kind: FrameKind,
    pub src: NodeAddress,
    pub dst: NodeAddress,
    pub delivered: bool,
}

impl fmt::Display for DeliveryRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let outcome = if self.delivered { "OK" } else { "DROP" };
        write!(f, "{} {} {} {} {}", self.round, self.kind, self.src, self.dst, outcome)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub round: u64,
    pub sim_time: f64,
    pub readings: BTreeMap<(NodeAddress, Channel), Option<f64>>,
    pub delivery_log: Vec<DeliveryRecord>,
}

impl RoundResult {
    pub fn numeric_count(&self) -> usize {
        self.readings.values().filter(|v| v.is_some()).count()
    }

    pub fn null_count(&self) -> usize {
        self.readings.values().filter(|v| v.is_none()).count()
    }

    pub fn value(&self, addr: &NodeAddress, channel: Channel) -> Option<Option<f64>> {
        self.readings.get(&(addr.clone(), channel)).copied()
    }
}

/// Decides the fate of each frame transmission.
pub trait Medium {
    fn transmit(&mut self, kind: FrameKind, src: &NodeSpec, dst: &NodeSpec, round: u64) -> bool;
}

/// The seeded radio: loss keyed by `(round, src, dst, kind)`.
#[derive(Debug, Clone, Copy)]
pub struct Radio {
    pub link: LinkModel,
    key: RngKey,
}

impl Radio {
    pub fn new(link: LinkModel, seed: u64) -> Self {
        Radio { link, key: RngKey::new(seed).with_tag(b"loss") }
    }
}

impl Medium for Radio {
    fn transmit(&mut self, kind: FrameKind, src: &NodeSpec, dst: &NodeSpec, round: u64) -> bool {
        let key = self.key.with(round).with(src.address.digest()).with(dst.address.digest()).with(kind.tag());
        deliver(&self.link, src.position, dst.position, key)
    }
}

/// Everything needed to simulate a run.
#[derive(Debug, Clone)]
pub struct Simulator {
    topology: Arc<Topology>,
    scenario: Scenario,
    sensors: SensorSuite,
    link: LinkModel,
    config: SimConfig,
}

struct RoundCtx<'m> {
    round: u64,
    sim_time: f64,
    medium: &'m mut dyn Medium,
    log: Vec<DeliveryRecord>,
}

impl RoundCtx<'_> {
    fn send(&mut self, kind: FrameKind, src: &NodeSpec, dst: &NodeSpec) -> bool {
        let delivered = self.medium.transmit(kind, src, dst, self.round);
        self.log.push(DeliveryRecord {
            round: self.round,
            kind,
            src: src.address.clone(),
            dst: dst.address.clone(),
            delivered,
        });
        delivered
    }
}

impl Simulator {
    pub fn new(
        topology: Arc<Topology>,
        scenario: Scenario,
        sensors: SensorSuite,
        link: LinkModel,
        config: SimConfig,
    ) -> Result<Self, NetsimError> {
        LinkModel::new(link.max_range_m, link.loss_prob)?;
        if !(config.round_interval > 0.0 && config.round_interval.is_finite()) {
            return Err(NetsimError::InvalidInterval(config.round_interval));
        }
        for (address, channel) in topology.sensing_pairs() {
            if !scenario.fields.contains_key(&channel) {
                return Err(NetsimError::MissingField { address: address.clone(), channel });
            }
            if !sensors.contains_key(&channel) {
                return Err(NetsimError::MissingSensor { address: address.clone(), channel });
            }
        }
        Ok(Simulator { topology, scenario, sensors, link, config })
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn link(&self) -> &LinkModel {
        &self.link
    }

    pub fn radio(&self) -> Radio {
        Radio::new(self.link, self.config.seed)
    }

    /// Samples every channel of `node` at the current instant.
    fn own_readings(&self, node: &NodeSpec, ctx: &RoundCtx<'_>) -> Vec<Reading> {
        let key = RngKey::new(self.config.seed).with_tag(b"sensor").with(ctx.round).with(node.address.digest());
        node.channels
            .iter()
            .map(|&channel| {
                let truth = self
                    .scenario
                    .value(channel, node.position, ctx.sim_time, self.config.seed)
                    .expect("validated in Simulator::new");
                let value = sample(&self.sensors[&channel], truth, key.with(channel.tag()));
                Reading::new(node.address.clone(), channel, Some(value))
            })
            .collect()
    }

    fn nulls_for_subtree(&self, root: &NodeAddress, out: &mut Vec<Reading>) {
        for node in self.topology.subtree(root) {
            out.extend(node.channels.iter().map(|&c| Reading::new(node.address.clone(), c, None)));
        }
    }

    /// Sends an INTCALL to `child` and collects its reply, or NULLs on loss.
    fn poll_child(&self, parent: &NodeSpec, child: &NodeSpec, ctx: &mut RoundCtx<'_>, out: &mut Vec<Reading>) {
        if !ctx.send(FrameKind::IntCall, parent, child) {
            self.nulls_for_subtree(&child.address, out);
            return;
        }
        let reply = match child.role {
            NodeRole::ClusterHead => self.collect_cluster(child, ctx),
            _ => Frame {
                kind: FrameKind::DataReply,
                src: child.address.clone(),
                dst: parent.address.clone(),
                round: ctx.round,
                payload: self.own_readings(child, ctx),
            },
        };
        if ctx.send(reply.kind, child, parent) {
            out.extend(reply.payload);
        } else {
            self.nulls_for_subtree(&child.address, out);
        }
    }

    fn collect_cluster(&self, head: &NodeSpec, ctx: &mut RoundCtx<'_>) -> Frame {
        let mut payload = Vec::new();
        for child in self.topology.children(&head.address) {
            self.poll_child(head, child, ctx, &mut payload);
        }
        payload.extend(self.own_readings(head, ctx));
        Frame {
            kind: FrameKind::Aggregate,
            src: head.address.clone(),
            dst: head.address.parent().unwrap_or_default(),
            round: ctx.round,
            payload,
        }
    }

    /// Runs one cluster head's collection; returns its AGGREGATE frame and
    /// the transmission log of the exchange.
    pub fn poll_cluster(&self, head: &NodeSpec, round: u64, medium: &mut dyn Medium) -> (Frame, Vec<DeliveryRecord>) {
        debug_assert_eq!(head.role, NodeRole::ClusterHead);
        let mut ctx = RoundCtx { round, sim_time: self.config.sim_time(round), medium, log: Vec::new() };
        let frame = self.collect_cluster(head, &mut ctx);
        (frame, ctx.log)
    }

    /// One complete poll cycle of the whole tree.
    pub fn run_round_with(&self, round: u64, medium: &mut dyn Medium) -> RoundResult {
        let sim_time = self.config.sim_time(round);
        let mut ctx = RoundCtx { round, sim_time, medium, log: Vec::new() };
        let base = self.topology.base();
        let mut collected = self.own_readings(base, &ctx);
        for child in self.topology.children(&base.address) {
            self.poll_child(base, child, &mut ctx, &mut collected);
        }
        let readings: BTreeMap<_, _> = collected.into_iter().map(|r| ((r.address, r.channel), r.value)).collect();
        debug_assert_eq!(readings.len(), self.topology.sensing_pairs().count());
        RoundResult { round, sim_time, readings, delivery_log: ctx.log }
    }

    pub fn run_round(&self, round: u64) -> RoundResult {
        self.run_round_with(round, &mut self.radio())
    }

    /// All configured rounds, in order.
    pub fn run_sim(&self) -> impl Iterator<Item = RoundResult> + '_ {
        (0..self.config.rounds).map(move |r| self.run_round(r))
    }
}
