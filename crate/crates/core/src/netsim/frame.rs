//! Line-oriented frame wire format.
//!
//! ```text
//! FRAME <KIND> <src> <dst> <round> [<addr>:<CHANNEL>=<value|NULL> ...]\n
//! ```
//!
//! Tokens are separated by single spaces. Values use the channel's canonical
//! precision (one decimal for `TEMP_C`, none for integer channels).

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::channel::Channel;
use crate::sensing::Reading;
use crate::topology::NodeAddress;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameKind {
    /// Interrupt call: a parent asking a child to send the data it has.
    IntCall,
    /// A leaflet's own readings, answering an interrupt call.
    DataReply,
    /// A cluster head's readings for its whole subtree.
    Aggregate,
}

impl FrameKind {
    pub fn name(self) -> &'static str {
        match self {
            FrameKind::IntCall => "INTCALL",
            FrameKind::DataReply => "DATAREPLY",
            FrameKind::Aggregate => "AGGREGATE",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            FrameKind::IntCall => 1,
            FrameKind::DataReply => 2,
            FrameKind::Aggregate => 3,
        }
    }
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FrameKind {
    type Err = FrameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "INTCALL" => Ok(FrameKind::IntCall),
            "DATAREPLY" => Ok(FrameKind::DataReply),
            "AGGREGATE" => Ok(FrameKind::Aggregate),
            other => Err(FrameError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: FrameKind,
    pub src: NodeAddress,
    pub dst: NodeAddress,
    pub round: u64,
    pub payload: Vec<Reading>,
}

impl Frame {
    pub fn intcall(src: NodeAddress, dst: NodeAddress, round: u64) -> Self {
        Frame { kind: FrameKind::IntCall, src, dst, round, payload: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unknown frame kind `{0}`")]
    UnknownKind(String),
    #[error("bad address `{0}`")]
    BadAddress(String),
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("non-numeric value `{0}`")]
    NonNumericValue(String),
}

impl fmt::Display for Frame {
    /// The wire line without its terminating newline.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FRAME {} {} {} {}", self.kind, self.src, self.dst, self.round)?;
        for r in &self.payload {
            write!(f, " {}:{}={}", r.address, r.channel, r.channel.format_optional(r.value))?;
        }
        Ok(())
    }
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut line = frame.to_string();
    line.push('\n');
    line.into_bytes()
}

fn address(token: &str) -> Result<NodeAddress, FrameError> {
    token.parse().map_err(|_| FrameError::BadAddress(token.to_string()))
}

fn reading(token: &str) -> Result<Reading, FrameError> {
    let (addr, rest) =
        token.split_once(':').ok_or_else(|| FrameError::Malformed(format!("payload item `{token}` lacks ':'")))?;
    let (channel, value) =
        rest.split_once('=').ok_or_else(|| FrameError::Malformed(format!("payload item `{token}` lacks '='")))?;
    let channel: Channel = channel.parse().map_err(|_| FrameError::UnknownChannel(channel.to_string()))?;
    let value = match value {
        "NULL" => None,
        v => {
            let numeric = !v.is_empty() && v.bytes().all(|b| b.is_ascii_digit() || b == b'.' || b == b'-');
            match v.parse::<f64>() {
                Ok(x) if numeric && x.is_finite() => Some(x),
                _ => return Err(FrameError::NonNumericValue(v.to_string())),
            }
        }
    };
    Ok(Reading::new(address(addr)?, channel, value))
}

/// Decodes one wire line; a single trailing newline is accepted.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    let text = std::str::from_utf8(bytes).map_err(|_| FrameError::Malformed("not UTF-8".into()))?;
    let line = text.strip_suffix('\n').unwrap_or(text);
    if line.contains('\n') || line.contains('\r') {
        return Err(FrameError::Malformed("embedded line break".into()));
    }
    let mut tokens = line.split(' ');
    if tokens.next() != Some("FRAME") {
        return Err(FrameError::Malformed("missing FRAME keyword".into()));
    }
    let mut header = || tokens.next().ok_or_else(|| FrameError::Malformed("truncated header".into()));
    let kind: FrameKind = header()?.parse()?;
    let src = address(header()?)?;
    let dst = address(header()?)?;
    let round_token = header()?;
    if round_token.is_empty() || !round_token.bytes().all(|b| b.is_ascii_digit()) {
        return Err(FrameError::Malformed(format!("bad round `{round_token}`")));
    }
    let round = round_token.parse().map_err(|_| FrameError::Malformed(format!("bad round `{round_token}`")))?;
    let payload = tokens.map(reading).collect::<Result<Vec<_>, _>>()?;
    if kind == FrameKind::IntCall && !payload.is_empty() {
        return Err(FrameError::Malformed("INTCALL carries no payload".into()));
    }
    Ok(Frame { kind, src, dst, round, payload })
}
