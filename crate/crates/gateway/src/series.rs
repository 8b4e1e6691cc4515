//! Bounded per-(node, channel) history and its CSV export.

use std::collections::{BTreeMap, VecDeque};

use minewatch_core::{Channel, NodeAddress, Topology};

use crate::snapshot::Snapshot;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub seq: u64,
    pub sim_time_ms: u64,
    pub value: Option<f64>,
}

/// Ring buffers keyed by every sensed pair of the topology.
#[derive(Debug, Clone)]
pub struct SeriesStore {
    capacity: usize,
    series: BTreeMap<(NodeAddress, Channel), VecDeque<SeriesPoint>>,
}

impl SeriesStore {
    pub fn new(topology: &Topology, capacity: usize) -> Self {
        let capacity = capacity.max(1);
        let series = topology
            .sensing_pairs()
            .map(|(a, c)| ((a.clone(), c), VecDeque::with_capacity(capacity.min(1024))))
            .collect();
        SeriesStore { capacity, series }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn contains(&self, addr: &NodeAddress, channel: Channel) -> bool {
        self.series.contains_key(&(addr.clone(), channel))
    }

    /// Appends every entry of `s`. Entries not newer than the series tail
    /// are ignored so sequence numbers stay strictly increasing.
    pub fn append(&mut self, s: &Snapshot) {
        let ms = s.sim_time_ms();
        for e in &s.entries {
            let Some(buf) = self.series.get_mut(&(e.address.clone(), e.channel)) else { continue };
            if buf.back().is_some_and(|p| p.seq >= s.seq) {
                continue;
            }
            if buf.len() == self.capacity {
                buf.pop_front();
            }
            buf.push_back(SeriesPoint { seq: s.seq, sim_time_ms: ms, value: e.value });
        }
    }

    /// Points with `from <= seq <= to`; `None` for an unknown pair.
    pub fn window(&self, addr: &NodeAddress, channel: Channel, from: u64, to: u64) -> Option<Vec<SeriesPoint>> {
        let buf = self.series.get(&(addr.clone(), channel))?;
        let start = buf.partition_point(|p| p.seq < from);
        Some(buf.iter().skip(start).take_while(|p| p.seq <= to).copied().collect())
    }
}

/// `seq,sim_time_ms,value` with NULL as an empty field.
pub fn series_csv(channel: Channel, points: &[SeriesPoint]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["seq", "sim_time_ms", "value"]).expect("in-memory write");
    for p in points {
        let value = p.value.map(|v| channel.format_value(v)).unwrap_or_default();
        w.write_record([p.seq.to_string(), p.sim_time_ms.to_string(), value]).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[cfg(test)]
mod tests {
    use minewatch_core::topology::{NodeRole, NodeSpec, Position};
    use proptest::prelude::*;

    use super::*;
    use crate::snapshot::Entry;

    fn topo() -> Topology {
        let node = |a: &str, role, ch: &[Channel]| NodeSpec {
            address: a.parse().unwrap(),
            role,
            position: Position::default(),
            channels: ch.iter().copied().collect(),
        };
        Topology::new(vec![node("0", NodeRole::BaseStation, &[]), node("1", NodeRole::EndDevice, &[Channel::TempC])], 2)
            .unwrap()
    }

    fn snap(seq: u64, value: Option<f64>) -> Snapshot {
        Snapshot {
            seq,
            sim_time: seq as f64,
            entries: vec![Entry { address: "1".parse().unwrap(), channel: Channel::TempC, value }],
        }
    }

    #[test]
    fn window_and_csv() {
        let mut store = SeriesStore::new(&topo(), 10);
        let a: NodeAddress = "1".parse().unwrap();
        for seq in 0..3 {
            store.append(&snap(seq, if seq == 1 { None } else { Some(20.0 + seq as f64) }));
        }
        let points = store.window(&a, Channel::TempC, 0, 2).unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!(series_csv(Channel::TempC, &points), b"seq,sim_time_ms,value\n0,0,20.0\n1,1000,\n2,2000,22.0\n");
        assert_eq!(store.window(&a, Channel::TempC, 1, 1).unwrap().len(), 1);
        assert!(store.window(&a, Channel::LightRaw, 0, 2).is_none());
        assert_eq!(series_csv(Channel::TempC, &[]), b"seq,sim_time_ms,value\n");
    }

    #[test]
    fn evicts_oldest() {
        let mut store = SeriesStore::new(&topo(), 4);
        for seq in 0..10 {
            store.append(&snap(seq, Some(1.0)));
        }
        let seqs: Vec<u64> =
            store.window(&"1".parse().unwrap(), Channel::TempC, 0, u64::MAX).unwrap().iter().map(|p| p.seq).collect();
        assert_eq!(seqs, [6, 7, 8, 9]);
    }

    proptest! {
        #[test]
        fn seqs_strictly_increase(seqs in prop::collection::vec(0u64..50, 0..100), cap in 1usize..20) {
            let mut store = SeriesStore::new(&topo(), cap);
            for s in seqs {
                store.append(&snap(s, Some(1.0)));
            }
            let pts = store.window(&"1".parse().unwrap(), Channel::TempC, 0, u64::MAX).unwrap();
            prop_assert!(pts.len() <= cap);
            prop_assert!(pts.windows(2).all(|w| w[0].seq < w[1].seq));
        }
    }
}
