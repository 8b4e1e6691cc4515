//! Deterministic simulation of a tree-topology wireless sensor network used
//! for mine environment monitoring.
//!
//! The crate is organised bottom-up:
//!
//! - [`topology`]: node addressing, tree validation and routing.
//! - [`environment`]: ground-truth fields and scenario events.
//! - [`sensing`]: quantised, bounded sensor sampling.
//! - [`netsim`]: radio links, the interrupt-call polling protocol and the
//!   frame wire codec.
//! - [`alerting`]: threshold rules with consecutive-sample hysteresis.
//! - [`config`]: the TOML run-config document tying it all together.
//!
//! All randomness flows through [`rng::RngKey`], a keyed SplitMix64 mixer, so
//! that every run is reproducible bit for bit from its seed.

pub mod alerting;
pub mod channel;
pub mod config;
pub mod environment;
pub mod netsim;
pub mod rng;
pub mod sensing;
pub mod topology;

#[cfg(test)]
mod testutil;

pub use channel::Channel;
pub use topology::{NodeAddress, NodeRole, NodeSpec, Topology};
