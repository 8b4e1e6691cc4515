//! Tree addressing, validation and routing.
//!
//! A node address is the path of child indices from the base station: the
//! base is the empty path (rendered `"0"`), its children are `"1"`, `"2"`, and
//! so on, and their children `"1.1"`, `"1.2"`. Because every component is at
//! least 1 the rendering is unambiguous and a tree is acyclic by construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Channel;

pub const DEFAULT_MAX_DEPTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("invalid node address `{0}`")]
    InvalidAddress(String),
    #[error("node {address} has no parent node {parent}")]
    MissingParent { address: NodeAddress, parent: NodeAddress },
    #[error("duplicate node address {0}")]
    DuplicateAddress(NodeAddress),
    #[error("role mismatch at node {address}: {reason}")]
    RoleMismatch { address: NodeAddress, reason: String },
    #[error("node {address} has depth {depth}, exceeding max_depth {max_depth}")]
    DepthExceeded { address: NodeAddress, depth: usize, max_depth: usize },
    #[error("topology has no base station")]
    MissingBase,
    #[error("invalid position for node {0}")]
    InvalidPosition(NodeAddress),
    #[error("max_depth must be at least 1")]
    InvalidMaxDepth,
    #[error("base station has no parent")]
    NoParent,
    #[error("unknown node address {0}")]
    UnknownAddress(NodeAddress),
}

/// Tree address of a node; the empty path is the base station.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NodeAddress(Vec<u32>);

impl NodeAddress {
    pub fn base() -> Self {
        NodeAddress(Vec::new())
    }

    pub fn new(path: Vec<u32>) -> Result<Self, TopologyError> {
        if path.contains(&0) {
            let rendered = path.iter().map(u32::to_string).collect::<Vec<_>>().join(".");
            return Err(TopologyError::InvalidAddress(rendered));
        }
        Ok(NodeAddress(path))
    }

    pub fn path(&self) -> &[u32] {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn is_base(&self) -> bool {
        self.0.is_empty()
    }

    pub fn parent(&self) -> Result<NodeAddress, TopologyError> {
        match self.0.split_last() {
            Some((_, rest)) => Ok(NodeAddress(rest.to_vec())),
            None => Err(TopologyError::NoParent),
        }
    }

    /// Address of the `index`-th child (`index >= 1`).
    pub fn child(&self, index: u32) -> Result<NodeAddress, TopologyError> {
        let mut path = self.0.clone();
        path.push(index);
        NodeAddress::new(path)
    }

    /// Stable 64-bit digest of the path, used to key random draws.
    pub fn digest(&self) -> u64 {
        self.0.iter().fold(self.0.len() as u64, |h, c| crate::rng::splitmix64(h ^ u64::from(*c)))
    }

    /// True iff `ancestor`'s path is a prefix of (or equal to) this path.
    pub fn is_descendant_of(&self, ancestor: &NodeAddress) -> bool {
        self.0.starts_with(&ancestor.0)
    }
}

/// `a` is in the subtree rooted at `b` (reflexive).
pub fn is_descendant(a: &NodeAddress, b: &NodeAddress) -> bool {
    a.is_descendant_of(b)
}

pub fn parent(addr: &NodeAddress) -> Result<NodeAddress, TopologyError> {
    addr.parent()
}

impl fmt::Display for NodeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("0");
        }
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_char('.')?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for NodeAddress {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "0" {
            return Ok(NodeAddress::base());
        }
        let invalid = || TopologyError::InvalidAddress(s.to_string());
        let mut path = Vec::new();
        for part in s.split('.') {
            // no signs, no leading zeros: parse(render(a)) must be exact
            if part.is_empty() || part.starts_with('0') || !part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(invalid());
            }
            path.push(part.parse::<u32>().map_err(|_| invalid())?);
        }
        Ok(NodeAddress(path))
    }
}

impl Serialize for NodeAddress {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeAddress {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    BaseStation,
    ClusterHead,
    EndDevice,
}

impl NodeRole {
    pub fn name(self) -> &'static str {
        match self {
            NodeRole::BaseStation => "base_station",
            NodeRole::ClusterHead => "cluster_head",
            NodeRole::EndDevice => "end_device",
        }
    }
}

/// Planar position in metres on the mine map.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub address: NodeAddress,
    pub role: NodeRole,
    pub position: Position,
    pub channels: BTreeSet<Channel>,
}

impl NodeSpec {
    pub fn is_sensing(&self) -> bool {
        !self.channels.is_empty()
    }
}

/// A validated, immutable network tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub(crate) nodes: BTreeMap<NodeAddress, NodeSpec>,
    pub(crate) max_depth: usize,
}

impl Topology {
    /// Validates `nodes` against every tree invariant.
    pub fn new(nodes: Vec<NodeSpec>, max_depth: usize) -> Result<Self, TopologyError> {
        if max_depth == 0 {
            return Err(TopologyError::InvalidMaxDepth);
        }
        let mut map = BTreeMap::new();
        for node in nodes {
            if !(node.position.x.is_finite() && node.position.y.is_finite()) {
                return Err(TopologyError::InvalidPosition(node.address));
            }
            if map.contains_key(&node.address) {
                return Err(TopologyError::DuplicateAddress(node.address));
            }
            map.insert(node.address.clone(), node);
        }
        if !map.contains_key(&NodeAddress::base()) {
            return Err(TopologyError::MissingBase);
        }
        for node in map.values() {
            let addr = &node.address;
            if addr.depth() > max_depth {
                return Err(TopologyError::DepthExceeded { address: addr.clone(), depth: addr.depth(), max_depth });
            }
            if let Ok(parent) = addr.parent() {
                if !map.contains_key(&parent) {
                    return Err(TopologyError::MissingParent { address: addr.clone(), parent });
                }
            }
        }
        let topo = Topology { nodes: map, max_depth };
        for node in topo.nodes.values() {
            let addr = &node.address;
            let has_children = topo.children(addr).next().is_some();
            let reason = match node.role {
                NodeRole::BaseStation if !addr.is_base() => Some("only the base address may be a base station"),
                _ if addr.is_base() && node.role != NodeRole::BaseStation => {
                    Some("the base address must be a base station")
                }
                NodeRole::EndDevice if has_children => Some("end devices cannot have children"),
                NodeRole::ClusterHead if !has_children => Some("cluster heads need at least one child"),
                _ => None,
            };
            if let Some(reason) = reason {
                return Err(TopologyError::RoleMismatch { address: addr.clone(), reason: reason.to_string() });
            }
        }
        Ok(topo)
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, addr: &NodeAddress) -> Option<&NodeSpec> {
        self.nodes.get(addr)
    }

    pub fn contains(&self, addr: &NodeAddress) -> bool {
        self.nodes.contains_key(addr)
    }

    pub fn base(&self) -> &NodeSpec {
        &self.nodes[&NodeAddress::base()]
    }

    /// All nodes in canonical address order.
    pub fn nodes(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.values()
    }

    /// Direct children of `addr`, in address order.
    pub fn children<'a>(&'a self, addr: &'a NodeAddress) -> impl Iterator<Item = &'a NodeSpec> + 'a {
        let depth = addr.depth() + 1;
        self.nodes
            .range(addr.clone()..)
            .take_while(move |(a, _)| a.is_descendant_of(addr))
            .filter(move |(a, _)| a.depth() == depth)
            .map(|(_, n)| n)
    }

    /// Nodes of the subtree rooted at `addr`, including `addr` itself.
    pub fn subtree<'a>(&'a self, addr: &'a NodeAddress) -> impl Iterator<Item = &'a NodeSpec> + 'a {
        self.nodes.range(addr.clone()..).take_while(move |(a, _)| a.is_descendant_of(addr)).map(|(_, n)| n)
    }

    pub fn sensing_nodes(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.values().filter(|n| n.is_sensing())
    }

    /// Every sensed (node, channel) pair in canonical order.
    pub fn sensing_pairs(&self) -> impl Iterator<Item = (&NodeAddress, Channel)> {
        self.nodes.values().flat_map(|n| n.channels.iter().map(move |c| (&n.address, *c)))
    }

    /// Hop path `[addr, parent(addr), ..., base]`.
    pub fn route_to_base(&self, addr: &NodeAddress) -> Result<Vec<NodeAddress>, TopologyError> {
        if !self.contains(addr) {
            return Err(TopologyError::UnknownAddress(addr.clone()));
        }
        let path = addr.path();
        Ok((0..=path.len()).rev().map(|n| NodeAddress(path[..n].to_vec())).collect())
    }

    /// Canonical TOML rendering of the topology section.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[topology]");
        let _ = writeln!(out, "max_depth = {}", self.max_depth);
        for node in self.nodes.values() {
            let channels: Vec<String> = node.channels.iter().map(|c| format!("\"{c}\"")).collect();
            let _ = writeln!(out);
            let _ = writeln!(out, "[[topology.nodes]]");
            let _ = writeln!(out, "address = \"{}\"", node.address);
            let _ = writeln!(out, "role = \"{}\"", node.role.name());
            let _ = writeln!(out, "position = [{:?}, {:?}]", node.position.x, node.position.y);
            let _ = writeln!(out, "channels = [{}]", channels.join(", "));
        }
        out
    }
}

pub fn route_to_base(addr: &NodeAddress, topo: &Topology) -> Result<Vec<NodeAddress>, TopologyError> {
    topo.route_to_base(addr)
}

/// `[topology]` section of the run-config document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct TopologySection {
    #[serde(default = "default_max_depth")]
    max_depth: usize,
    #[serde(default)]
    nodes: Vec<NodeEntry>,
}

fn default_max_depth() -> usize {
    DEFAULT_MAX_DEPTH
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeEntry {
    address: String,
    role: NodeRole,
    position: [f64; 2],
    #[serde(default)]
    channels: BTreeSet<Channel>,
}

impl TopologySection {
    pub(crate) fn build(self) -> Result<Topology, TopologyError> {
        let nodes = self
            .nodes
            .into_iter()
            .map(|e| {
                Ok(NodeSpec {
                    address: e.address.parse()?,
                    role: e.role,
                    position: Position::new(e.position[0], e.position[1]),
                    channels: e.channels,
                })
            })
            .collect::<Result<Vec<_>, TopologyError>>()?;
        Topology::new(nodes, self.max_depth)
    }
}

#[derive(Deserialize)]
struct TopologyDocument {
    topology: TopologySection,
}

/// Converts a TOML error into a 1-based line/column syntax error.
pub(crate) fn syntax_error(text: &str, err: &toml::de::Error) -> (usize, usize, String) {
    let offset = err.span().map(|s| s.start).unwrap_or(0).min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map(|l| l.chars().count()).unwrap_or(0) + 1;
    (line, column, err.message().to_string())
}

/// Parses the `[topology]` section of a run-config document.
pub fn parse_topology(text: &str) -> Result<Topology, TopologyError> {
    let doc: TopologyDocument = toml::from_str(text).map_err(|e| {
        let (line, column, message) = syntax_error(text, &e);
        TopologyError::Syntax { line, column, message }
    })?;
    doc.topology.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(s: &str) -> NodeAddress {
        s.parse().unwrap()
    }

    const LAB: &str = r#"
[topology]
max_depth = 2

[[topology.nodes]]
address = "0"
role = "base_station"
position = [0.0, 0.0]

[[topology.nodes]]
address = "1"
role = "cluster_head"
position = [12.0, 0.0]
channels = ["TEMP_C", "LIGHT_RAW"]

[[topology.nodes]]
address = "1.1"
role = "end_device"
position = [20.0, 5.0]
channels = ["TEMP_C", "LIGHT_RAW"]

[[topology.nodes]]
address = "1.2"
role = "end_device"
position = [20.0, -5.0]
channels = ["TEMP_C", "LIGHT_RAW"]

[[topology.nodes]]
address = "2"
role = "cluster_head"
position = [-12.0, 0.0]
channels = ["TEMP_C", "LIGHT_RAW"]

[[topology.nodes]]
address = "2.2"
role = "end_device"
position = [-20.0, -5.0]
channels = ["TEMP_C", "LIGHT_RAW"]

[[topology.nodes]]
address = "2.1"
role = "end_device"
position = [-20.0, 5.0]
channels = ["TEMP_C", "LIGHT_RAW"]
"#;

    #[test]
    fn address_render_and_parse() {
        assert_eq!(NodeAddress::base().to_string(), "0");
        assert_eq!(addr("1.2").path(), &[1, 2]);
        assert_eq!(addr("1.2").to_string(), "1.2");
        for bad in ["", "00", "1.0", "01", "1..2", "-1", "1.", "a", "+1"] {
            assert!(bad.parse::<NodeAddress>().is_err(), "{bad}");
        }
        assert!(NodeAddress::new(vec![1, 0]).is_err());
    }

    #[test]
    fn parent_truncates() {
        assert_eq!(parent(&addr("1.2")).unwrap(), addr("1"));
        assert_eq!(parent(&addr("2")).unwrap(), addr("0"));
        assert_eq!(parent(&addr("0")), Err(TopologyError::NoParent));
    }

    #[test]
    fn descendant_examples() {
        assert!(is_descendant(&addr("1.2"), &addr("1")));
        assert!(!is_descendant(&addr("2.1"), &addr("1")));
        assert!(is_descendant(&addr("1"), &addr("1")));
        assert!(is_descendant(&addr("2.1"), &addr("0")));
        assert!(!is_descendant(&addr("1"), &addr("1.1")));
        // prefix is per component, not per character
        assert!(!is_descendant(&addr("11"), &addr("1")));
    }

    #[test]
    fn lab_topology_parses() {
        let topo = parse_topology(LAB).unwrap();
        assert_eq!(topo.len(), 7);
        assert_eq!(topo.sensing_nodes().count(), 6);
        let order: Vec<String> = topo.nodes().map(|n| n.address.to_string()).collect();
        assert_eq!(order, ["0", "1", "1.1", "1.2", "2", "2.1", "2.2"]);
        let kids: Vec<String> = topo.children(&addr("2")).map(|n| n.address.to_string()).collect();
        assert_eq!(kids, ["2.1", "2.2"]);
        let heads: Vec<String> = topo.children(&NodeAddress::base()).map(|n| n.address.to_string()).collect();
        assert_eq!(heads, ["1", "2"]);
    }

    #[test]
    fn base_only_topology() {
        let text = "[topology]\n[[topology.nodes]]\naddress = \"0\"\nrole = \"base_station\"\nposition = [0.0, 0.0]\n";
        let topo = parse_topology(text).unwrap();
        assert_eq!(topo.len(), 1);
        assert_eq!(topo.sensing_nodes().count(), 0);
        assert_eq!(topo.max_depth(), DEFAULT_MAX_DEPTH);
    }

    fn doc(nodes: &[(&str, &str)]) -> String {
        let mut s = String::from("[topology]\n");
        for (a, r) in nodes {
            s.push_str(&format!("[[topology.nodes]]\naddress = \"{a}\"\nrole = \"{r}\"\nposition = [0.0, 0.0]\n"));
        }
        s
    }

    #[test]
    fn error_kinds_are_distinct() {
        let missing = parse_topology(&doc(&[("0", "base_station"), ("1.1", "end_device")]));
        assert!(matches!(missing, Err(TopologyError::MissingParent { .. })));

        let dup = parse_topology(&doc(&[("0", "base_station"), ("1", "end_device"), ("1", "end_device")]));
        assert_eq!(dup, Err(TopologyError::DuplicateAddress(addr("1"))));

        let leaf_with_kids = parse_topology(&doc(&[("0", "base_station"), ("1", "end_device"), ("1.1", "end_device")]));
        assert!(matches!(leaf_with_kids, Err(TopologyError::RoleMismatch { .. })));

        let childless_head = parse_topology(&doc(&[("0", "base_station"), ("1", "cluster_head")]));
        assert!(matches!(childless_head, Err(TopologyError::RoleMismatch { .. })));

        let two_bases = parse_topology(&doc(&[("0", "base_station"), ("1", "base_station")]));
        assert!(matches!(two_bases, Err(TopologyError::RoleMismatch { .. })));

        let deep = parse_topology(&doc(&[
            ("0", "base_station"),
            ("1", "cluster_head"),
            ("1.1", "cluster_head"),
            ("1.1.1", "end_device"),
        ]));
        assert!(matches!(deep, Err(TopologyError::DepthExceeded { depth: 3, .. })));

        let no_base = parse_topology(&doc(&[]));
        assert_eq!(no_base, Err(TopologyError::MissingBase));

        let bad_addr = parse_topology(&doc(&[("0", "base_station"), ("1.x", "end_device")]));
        assert!(matches!(bad_addr, Err(TopologyError::InvalidAddress(_))));
    }

    #[test]
    fn syntax_error_reports_position() {
        let text = "[topology]\nmax_depth = 2\n[[topology.nodes]\n";
        match parse_topology(text) {
            Err(TopologyError::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn routes() {
        let topo = parse_topology(LAB).unwrap();
        let show =
            |a: &str| -> Vec<String> { topo.route_to_base(&addr(a)).unwrap().iter().map(|a| a.to_string()).collect() };
        assert_eq!(show("1.1"), ["1.1", "1", "0"]);
        assert_eq!(show("0"), ["0"]);
        assert_eq!(show("2"), ["2", "0"]);
        assert_eq!(topo.route_to_base(&addr("3")), Err(TopologyError::UnknownAddress(addr("3"))));
    }

    #[test]
    fn render_round_trips() {
        let topo = parse_topology(LAB).unwrap();
        let text = topo.render();
        assert_eq!(parse_topology(&text).unwrap(), topo);
        assert_eq!(parse_topology(&text).unwrap().render(), text);
    }

    mod properties {
        use super::*;
        use crate::testutil::{arb_address, arb_topology};
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn descendant_is_a_partial_order(a in arb_address(), b in arb_address(), c in arb_address()) {
                prop_assert!(is_descendant(&a, &a));
                if is_descendant(&a, &b) && is_descendant(&b, &a) {
                    prop_assert_eq!(&a, &b);
                }
                if is_descendant(&a, &b) && is_descendant(&b, &c) {
                    prop_assert!(is_descendant(&a, &c));
                }
            }

            #[test]
            fn render_parse_round_trip(topo in arb_topology()) {
                let text = topo.render();
                let parsed = parse_topology(&text).unwrap();
                prop_assert_eq!(&parsed, &topo);
                prop_assert_eq!(parsed.render(), text);
            }

            #[test]
            fn routes_follow_parents(topo in arb_topology()) {
                for n in topo.nodes().filter(|n| !n.address.is_base()) {
                    let route = topo.route_to_base(&n.address).unwrap();
                    prop_assert_eq!(route.len(), n.address.depth() + 1);
                    prop_assert_eq!(&route[0], &n.address);
                    for w in route.windows(2) {
                        prop_assert_eq!(w[0].parent().unwrap(), w[1].clone());
                    }
                }
            }
        }
    }
}
