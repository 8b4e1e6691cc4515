//! Fixtures shared by unit tests.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::channel::Channel;
use crate::environment::{EnvField, Scenario};
use crate::netsim::{LinkModel, SimConfig, Simulator};
use crate::sensing::default_sensor_suite;
use crate::topology::{NodeAddress, NodeRole, NodeSpec, Position, Topology};

pub(crate) fn addr(s: &str) -> NodeAddress {
    s.parse().unwrap()
}

pub(crate) fn node(a: &str, role: NodeRole, x: f64, y: f64, channels: &[Channel]) -> NodeSpec {
    NodeSpec { address: addr(a), role, position: Position::new(x, y), channels: channels.iter().copied().collect() }
}

const TL: &[Channel] = &[Channel::TempC, Channel::LightRaw];

/// Base, two cluster heads, two leaflets each; every non-base node senses
/// temperature and light.
pub(crate) fn two_cluster_tree() -> Topology {
    Topology::new(
        vec![
            node("0", NodeRole::BaseStation, 0.0, 0.0, &[]),
            node("1", NodeRole::ClusterHead, 12.0, 0.0, TL),
            node("1.1", NodeRole::EndDevice, 20.0, 5.0, TL),
            node("1.2", NodeRole::EndDevice, 20.0, -5.0, TL),
            node("2", NodeRole::ClusterHead, -12.0, 0.0, TL),
            node("2.1", NodeRole::EndDevice, -20.0, 5.0, TL),
            node("2.2", NodeRole::EndDevice, -20.0, -5.0, TL),
        ],
        2,
    )
    .unwrap()
}

pub(crate) fn lab_scenario() -> Scenario {
    Scenario::new(
        vec![
            EnvField { noise_std: 0.2, diurnal_amplitude: 1.5, ..EnvField::constant(Channel::TempC, 26.0) },
            EnvField { noise_std: 15.0, spatial_gradient: 2.0, ..EnvField::constant(Channel::LightRaw, 820.0) },
        ],
        vec![],
    )
    .unwrap()
}

pub(crate) fn simulator(topology: Topology, loss_prob: f64, rounds: u64, seed: u64) -> Simulator {
    let channels: BTreeSet<Channel> = topology.sensing_pairs().map(|(_, c)| c).collect();
    Simulator::new(
        Arc::new(topology),
        lab_scenario(),
        default_sensor_suite(&channels),
        LinkModel::new(30.0, loss_prob).unwrap(),
        SimConfig { round_interval: 1.0, rounds, seed },
    )
    .unwrap()
}

pub(crate) fn arb_address() -> impl proptest::strategy::Strategy<Value = NodeAddress> {
    use proptest::prelude::*;
    prop::collection::vec(1u32..6, 0..5).prop_map(|p| NodeAddress::new(p).unwrap())
}

/// Random valid trees: every internal node is a cluster head, every leaf an
/// end device, depth up to `max_depth`.
pub(crate) fn arb_topology() -> impl proptest::strategy::Strategy<Value = Topology> {
    use proptest::prelude::*;
    fn shape(levels: usize) -> BoxedStrategy<Vec<usize>> {
        // pre-order child counts
        if levels == 0 {
            return Just(vec![0]).boxed();
        }
        prop_oneof![
            Just(vec![0]),
            prop::collection::vec(shape(levels - 1), 1..4).prop_map(|kids| {
                let mut out = vec![kids.len()];
                kids.into_iter().for_each(|k| out.extend(k));
                out
            }),
        ]
        .boxed()
    }
    fn build(counts: &mut std::slice::Iter<usize>, a: NodeAddress, out: &mut Vec<(NodeAddress, bool)>) {
        let n = *counts.next().unwrap();
        out.push((a.clone(), n > 0));
        for i in 1..=n {
            build(counts, a.child(i as u32).unwrap(), out);
        }
    }
    (1usize..=3)
        .prop_flat_map(|depth| (Just(depth), prop::collection::vec(shape(depth - 1), 1..4)))
        .prop_flat_map(|(depth, roots)| {
            let mut nodes = Vec::new();
            for (i, r) in roots.iter().enumerate() {
                build(&mut r.iter(), NodeAddress::base().child(i as u32 + 1).unwrap(), &mut nodes);
            }
            let coord = prop_oneof![(-100i32..100).prop_map(f64::from), -1e3f64..1e3];
            let attrs = prop::collection::vec(
                (coord.clone(), coord, prop::sample::subsequence(Channel::ALL.to_vec(), 0..=4)),
                nodes.len(),
            );
            (Just(depth), Just(nodes), attrs)
        })
        .prop_map(|(depth, nodes, attrs)| {
            let mut specs = vec![NodeSpec {
                address: NodeAddress::base(),
                role: NodeRole::BaseStation,
                position: Position::new(0.0, 0.0),
                channels: BTreeSet::new(),
            }];
            for ((address, head), (x, y, channels)) in nodes.into_iter().zip(attrs) {
                let role = if head { NodeRole::ClusterHead } else { NodeRole::EndDevice };
                specs.push(NodeSpec {
                    address,
                    role,
                    position: Position::new(x, y),
                    channels: channels.into_iter().collect(),
                });
            }
            Topology::new(specs, depth).unwrap()
        })
}
