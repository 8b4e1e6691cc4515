//! Client request vocabulary shared by the TCP line protocol and HTTP.
//!
//! ```text
//! GET SNAPSHOT
//! GET CLUSTER <addr>
//! SUBSCRIBE [<addr>]
//! GET SERIES <addr> <CHANNEL> <from_seq> <to_seq>
//! ```
//!
//! Failures are reported as `ERR <code> <message>`.

use std::fmt;
use std::sync::Arc;

use minewatch_core::alerting::AlarmEvent;
use minewatch_core::{Channel, NodeAddress};
use tokio::sync::broadcast;

use crate::series::series_csv;
use crate::snapshot::render_snapshot;
use crate::state::{Gateway, Publication, Published};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientRequest {
    Snapshot,
    Cluster(NodeAddress),
    Subscribe(Option<NodeAddress>),
    Series { address: NodeAddress, channel: Channel, from: u64, to: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    BadRequest = 400,
    NotFound = 404,
    Conflict = 409,
    Unavailable = 503,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorResponse {
    pub code: ErrorCode,
    pub message: String,
}

impl ErrorResponse {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ErrorResponse { code, message: message.into() }
    }

    pub fn status(&self) -> u16 {
        self.code as u16
    }

    pub fn to_line(&self) -> Vec<u8> {
        format!("{self}\n").into_bytes()
    }
}

impl fmt::Display for ErrorResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ERR {} {}", self.status(), self.message)
    }
}

impl std::error::Error for ErrorResponse {}

fn bad_request(msg: impl Into<String>) -> ErrorResponse {
    ErrorResponse::new(ErrorCode::BadRequest, msg)
}

fn parse_address(token: &str) -> Result<NodeAddress, ErrorResponse> {
    token.parse().map_err(|_| bad_request(format!("bad address `{token}`")))
}

fn parse_seq(token: &str) -> Result<u64, ErrorResponse> {
    token.parse().map_err(|_| bad_request(format!("bad sequence number `{token}`")))
}

impl ClientRequest {
    pub fn parse(line: &str) -> Result<ClientRequest, ErrorResponse> {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["GET", "SNAPSHOT"] => Ok(ClientRequest::Snapshot),
            ["GET", "CLUSTER", a] => Ok(ClientRequest::Cluster(parse_address(a)?)),
            ["SUBSCRIBE"] => Ok(ClientRequest::Subscribe(None)),
            ["SUBSCRIBE", a] => Ok(ClientRequest::Subscribe(Some(parse_address(a)?))),
            ["GET", "SERIES", a, c, from, to] => {
                let address = parse_address(a)?;
                let channel =
                    c.parse().map_err(|_| ErrorResponse::new(ErrorCode::NotFound, format!("unknown channel {c}")))?;
                let (from, to) = (parse_seq(from)?, parse_seq(to)?);
                if from > to {
                    return Err(bad_request("from_seq exceeds to_seq"));
                }
                Ok(ClientRequest::Series { address, channel, from, to })
            }
            _ => Err(bad_request("malformed request")),
        }
    }
}

/// A live view of future publications, optionally restricted to a cluster.
pub struct Subscription {
    pub rx: broadcast::Receiver<Arc<Publication>>,
    pub cluster: Option<NodeAddress>,
}

pub enum ClientResponse {
    /// A snapshot rendering (full or cluster-filtered).
    Snapshot(Arc<[u8]>),
    Csv(Vec<u8>),
    Stream(Subscription),
    Error(ErrorResponse),
}

impl fmt::Debug for ClientResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClientResponse::Snapshot(b) => f.debug_tuple("Snapshot").field(&String::from_utf8_lossy(b)).finish(),
            ClientResponse::Csv(b) => f.debug_tuple("Csv").field(&String::from_utf8_lossy(b)).finish(),
            ClientResponse::Stream(s) => f.debug_struct("Stream").field("cluster", &s.cluster).finish(),
            ClientResponse::Error(e) => f.debug_tuple("Error").field(e).finish(),
        }
    }
}

fn unknown_node(addr: &NodeAddress) -> ErrorResponse {
    ErrorResponse::new(ErrorCode::NotFound, format!("unknown address {addr}"))
}

impl Gateway {
    pub(crate) fn known(&self, addr: &NodeAddress) -> Result<(), ErrorResponse> {
        if self.topology().contains(addr) {
            Ok(())
        } else {
            Err(unknown_node(addr))
        }
    }

    pub(crate) fn current_or_conflict(&self) -> Result<Arc<Published>, ErrorResponse> {
        self.current().ok_or_else(|| ErrorResponse::new(ErrorCode::Conflict, "no snapshot published yet"))
    }

    pub(crate) fn series_or_missing(
        &self,
        address: &NodeAddress,
        channel: Channel,
        from: u64,
        to: u64,
    ) -> Result<Vec<crate::series::SeriesPoint>, ErrorResponse> {
        self.known(address)?;
        self.series(address, channel, from, to)
            .ok_or_else(|| ErrorResponse::new(ErrorCode::NotFound, format!("node {address} has no channel {channel}")))
    }
}

pub fn handle_request(req: &ClientRequest, gateway: &Gateway) -> ClientResponse {
    let result = match req {
        ClientRequest::Snapshot => {
            gateway.current_or_conflict().map(|p| ClientResponse::Snapshot(p.rendered.as_slice().into()))
        }
        ClientRequest::Cluster(root) => gateway.known(root).and_then(|_| {
            let p = gateway.current_or_conflict()?;
            Ok(ClientResponse::Snapshot(render_snapshot(&p.snapshot.cluster(root)).into()))
        }),
        ClientRequest::Subscribe(cluster) => {
            let checked = match cluster {
                Some(root) => gateway.known(root),
                None => Ok(()),
            };
            checked.and_then(|_| {
                let rx = gateway
                    .subscribe()
                    .ok_or_else(|| ErrorResponse::new(ErrorCode::Unavailable, "gateway shutting down"))?;
                Ok(ClientResponse::Stream(Subscription { rx, cluster: cluster.clone() }))
            })
        }
        ClientRequest::Series { address, channel, from, to } => gateway
            .series_or_missing(address, *channel, *from, *to)
            .map(|points| ClientResponse::Csv(series_csv(*channel, &points))),
    };
    result.unwrap_or_else(ClientResponse::Error)
}

/// Parses and answers one request line.
pub fn handle_line(line: &str, gateway: &Gateway) -> ClientResponse {
    match ClientRequest::parse(line) {
        Ok(req) => handle_request(&req, gateway),
        Err(e) => ClientResponse::Error(e),
    }
}

pub(crate) fn alarm_in_scope(alarm: &AlarmEvent, cluster: Option<&NodeAddress>) -> bool {
    cluster.is_none_or(|root| alarm.address.is_descendant_of(root))
}

/// Stream rendering of one publication: the snapshot followed by its
/// `ALARM ...` lines.
pub fn render_publication(p: &Publication, cluster: Option<&NodeAddress>) -> Vec<u8> {
    let mut out = match cluster {
        Some(root) => render_snapshot(&p.published.snapshot.cluster(root)),
        None => p.published.rendered.clone(),
    };
    for alarm in p.alarms.iter().filter(|a| alarm_in_scope(a, cluster)) {
        out.extend_from_slice(alarm.to_string().as_bytes());
        out.push(b'\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_requests() {
        assert_eq!(ClientRequest::parse("GET SNAPSHOT"), Ok(ClientRequest::Snapshot));
        assert_eq!(ClientRequest::parse("GET CLUSTER 1"), Ok(ClientRequest::Cluster("1".parse().unwrap())));
        assert_eq!(ClientRequest::parse("SUBSCRIBE"), Ok(ClientRequest::Subscribe(None)));
        assert_eq!(ClientRequest::parse("SUBSCRIBE 2"), Ok(ClientRequest::Subscribe(Some("2".parse().unwrap()))));
        assert_eq!(
            ClientRequest::parse("GET SERIES 1.1 TEMP_C 0 599"),
            Ok(ClientRequest::Series { address: "1.1".parse().unwrap(), channel: Channel::TempC, from: 0, to: 599 })
        );
    }

    #[test]
    fn parse_errors() {
        let code = |l: &str| ClientRequest::parse(l).unwrap_err().status();
        assert_eq!(code("HELLO"), 400);
        assert_eq!(code(""), 400);
        assert_eq!(code("GET CLUSTER"), 400);
        assert_eq!(code("GET CLUSTER 1.x"), 400);
        assert_eq!(code("GET SERIES 1 TEMP_C a 3"), 400);
        assert_eq!(code("GET SERIES 1 TEMP_C 5 3"), 400);
        assert_eq!(code("GET SERIES 1 O2_PCT 0 3"), 404);
        assert_eq!(ClientRequest::parse("HELLO").unwrap_err().to_string(), "ERR 400 malformed request");
    }
}
