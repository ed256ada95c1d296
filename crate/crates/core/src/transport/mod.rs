//! Length-prefixed framing, in-memory and TCP channels, and byte/time
//! accounting of every frame exchanged in a session.
//!
//! Frame layout: `u32` payload length (LE), `u8` message type, payload.

mod channel;
mod transcript;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use channel::{memory_pair, Channel, LoggedChannel, MemoryChannel, TapChannel, TcpChannel};
pub use transcript::{
    reduction_factor, transcript_json, CostSummary, Direction, Phase, TranscriptEntry, TranscriptLog,
};

/// Largest payload a frame may carry.
pub const MAX_FRAME_LEN: usize = 1 << 31;
pub const HEADER_LEN: usize = 5;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport failure: {0}")]
    Failure(String),
    #[error("corrupt frame: {0}")]
    FrameCorrupt(String),
    #[error("channel closed by peer")]
    Closed,
}

impl From<std::io::Error> for TransportError {
    fn from(e: std::io::Error) -> Self {
        match e.kind() {
            std::io::ErrorKind::UnexpectedEof
            | std::io::ErrorKind::ConnectionReset
            | std::io::ErrorKind::BrokenPipe => TransportError::Closed,
            _ => TransportError::Failure(e.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum MsgType {
    Setup = 0,
    CentroidQuery = 1,
    CentroidScores = 2,
    ColumnQuery = 3,
    ColumnScore = 4,
    Done = 5,
    Error = 6,
}

impl MsgType {
    pub const ALL: [MsgType; 7] = [
        MsgType::Setup,
        MsgType::CentroidQuery,
        MsgType::CentroidScores,
        MsgType::ColumnQuery,
        MsgType::ColumnScore,
        MsgType::Done,
        MsgType::Error,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MsgType::Setup => "setup",
            MsgType::CentroidQuery => "centroid_query",
            MsgType::CentroidScores => "centroid_scores",
            MsgType::ColumnQuery => "column_query",
            MsgType::ColumnScore => "column_score",
            MsgType::Done => "done",
            MsgType::Error => "error",
        }
    }
}

impl TryFrom<u8> for MsgType {
    type Error = TransportError;

    fn try_from(b: u8) -> Result<Self, TransportError> {
        MsgType::ALL
            .get(b as usize)
            .copied()
            .ok_or_else(|| TransportError::FrameCorrupt(format!("unknown message type {b}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Self { msg_type, payload }
    }

    pub fn empty(msg_type: MsgType) -> Self {
        Self::new(msg_type, Vec::new())
    }

    /// Bytes on the wire, header included.
    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, TransportError> {
        let header = encode_header(self.msg_type, self.payload.len())?;
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&header);
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Parses exactly one frame; trailing bytes are an error.
    pub fn decode(bytes: &[u8]) -> Result<Self, TransportError> {
        if bytes.len() < HEADER_LEN {
            return Err(TransportError::FrameCorrupt("short header".into()));
        }
        let (msg_type, len) = decode_header(bytes[..HEADER_LEN].try_into().expect("5 bytes"))?;
        if bytes.len() - HEADER_LEN != len {
            return Err(TransportError::FrameCorrupt(format!(
                "length field {len} but {} payload bytes",
                bytes.len() - HEADER_LEN
            )));
        }
        Ok(Self::new(msg_type, bytes[HEADER_LEN..].to_vec()))
    }
}

pub fn encode_header(msg_type: MsgType, payload_len: usize) -> Result<[u8; HEADER_LEN], TransportError> {
    if payload_len > MAX_FRAME_LEN {
        return Err(TransportError::FrameCorrupt(format!(
            "payload of {payload_len} bytes exceeds {MAX_FRAME_LEN}"
        )));
    }
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(&(payload_len as u32).to_le_bytes());
    h[4] = msg_type as u8;
    Ok(h)
}

pub fn decode_header(h: [u8; HEADER_LEN]) -> Result<(MsgType, usize), TransportError> {
    let len = u32::from_le_bytes([h[0], h[1], h[2], h[3]]) as usize;
    if len > MAX_FRAME_LEN {
        return Err(TransportError::FrameCorrupt(format!("length field {len} exceeds {MAX_FRAME_LEN}")));
    }
    Ok((MsgType::try_from(h[4])?, len))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMode {
    #[default]
    InMemory,
    Tcp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub mode: ChannelMode,
    pub address: String,
    /// zstd-compress ciphertext payloads. Both endpoints must agree.
    pub compress: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            mode: ChannelMode::InMemory,
            address: "127.0.0.1:7878".into(),
            compress: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_roundtrip() {
        for t in MsgType::ALL {
            let f = Frame::new(t, vec![1, 2, 3, t as u8]);
            let bytes = f.encode().unwrap();
            assert_eq!(bytes.len(), f.wire_len());
            assert_eq!(Frame::decode(&bytes).unwrap(), f);
        }
    }

    #[test]
    fn oversized_frame_is_rejected_on_send() {
        let err = encode_header(MsgType::ColumnScore, MAX_FRAME_LEN + 1).unwrap_err();
        assert!(matches!(err, TransportError::FrameCorrupt(_)));
        assert!(encode_header(MsgType::ColumnScore, MAX_FRAME_LEN).is_ok());
    }

    #[test]
    fn corrupt_headers() {
        assert!(matches!(decode_header([0, 0, 0, 0, 7]), Err(TransportError::FrameCorrupt(_))));
        assert!(matches!(
            decode_header([1, 0, 0, 0x80, 0]),
            Err(TransportError::FrameCorrupt(_))
        ));
        let mut bytes = Frame::new(MsgType::Done, vec![9; 4]).encode().unwrap();
        bytes.push(0);
        assert!(Frame::decode(&bytes).is_err());
        assert!(Frame::decode(&bytes[..3]).is_err());
    }
}
