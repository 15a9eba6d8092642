//! Framed channels between sync peers and the byte ledger behind every
//! [`Observation`](crate::Observation).
//!
//! Every message is a frame: a one-byte kind, a big-endian 32-bit payload
//! length, then the payload. Frames are delivered in order per direction.

use std::io;
use std::time::{Duration, Instant};

use thiserror::Error;

mod cost;
mod memory;
mod tcp;

pub use cost::{ChannelParamError, ChannelParams};
pub use memory::{memory_pair, MemoryEndpoint};
pub use tcp::TcpChannel;

use crate::protocol::SyncRole;

/// Largest payload a peer may announce.
pub const MAX_PAYLOAD: u32 = 1 << 30;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("peer closed the channel")]
    Closed,
    #[error("timed out waiting for the peer")]
    Timeout,
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameKind {
    Handshake = 1,
    Sketch = 2,
    Diffs = 3,
    Ack = 4,
    Abort = 5,
}

impl FrameKind {
    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            1 => FrameKind::Handshake,
            2 => FrameKind::Sketch,
            3 => FrameKind::Diffs,
            4 => FrameKind::Ack,
            5 => FrameKind::Abort,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub payload: Vec<u8>,
}

impl Frame {
    pub const HEADER_LEN: usize = 5;

    pub fn new(kind: FrameKind, payload: Vec<u8>) -> Self {
        Frame { kind, payload }
    }

    pub fn empty(kind: FrameKind) -> Self {
        Frame::new(kind, Vec::new())
    }

    /// Header plus payload bytes.
    pub fn wire_len(&self) -> usize {
        Self::HEADER_LEN + self.payload.len()
    }

    pub fn header(&self) -> [u8; 5] {
        let len = (self.payload.len() as u32).to_be_bytes();
        [self.kind as u8, len[0], len[1], len[2], len[3]]
    }

    /// Validates a received header, returning the kind and payload length.
    pub fn parse_header(header: [u8; 5]) -> Result<(FrameKind, u32), TransportError> {
        let kind = FrameKind::from_tag(header[0])
            .ok_or_else(|| TransportError::Malformed(format!("unknown frame kind {}", header[0])))?;
        let len = u32::from_be_bytes([header[1], header[2], header[3], header[4]]);
        if len > MAX_PAYLOAD {
            return Err(TransportError::Malformed(format!("payload length {len} too large")));
        }
        Ok((kind, len))
    }
}

/// Which way a frame travels; `Up` is client to server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn sent_by(role: SyncRole) -> Self {
        match role {
            SyncRole::Client => Direction::Up,
            SyncRole::Server => Direction::Down,
        }
    }
}

/// A maximal run of consecutive frames in one direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Burst {
    pub direction: Direction,
    pub frames: u32,
    pub bytes: u64,
}

/// Frames seen by one endpoint, in the order it sent or received them.
///
/// Because the protocols alternate strictly between the two sides, both
/// endpoints of a session record the same bursts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ledger {
    bursts: Vec<Burst>,
}

impl Ledger {
    pub fn record(&mut self, direction: Direction, bytes: usize) {
        match self.bursts.last_mut() {
            Some(b) if b.direction == direction => {
                b.frames += 1;
                b.bytes += bytes as u64;
            }
            _ => self.bursts.push(Burst {
                direction,
                frames: 1,
                bytes: bytes as u64,
            }),
        }
    }

    pub fn bursts(&self) -> &[Burst] {
        &self.bursts
    }

    pub fn total_bytes(&self) -> u64 {
        self.bursts.iter().map(|b| b.bytes).sum()
    }

    pub fn bytes_in(&self, direction: Direction) -> u64 {
        self.bursts
            .iter()
            .filter(|b| b.direction == direction)
            .map(|b| b.bytes)
            .sum()
    }

    pub fn frames(&self) -> u32 {
        self.bursts.iter().map(|b| b.frames).sum()
    }
}

/// A bidirectional, in-order frame transport.
pub trait Channel: Send {
    fn send_frame(&mut self, frame: &Frame) -> Result<(), TransportError>;
    fn recv_frame(&mut self) -> Result<Frame, TransportError>;

    /// The emulated link, when this channel models one.
    fn simulated(&self) -> Option<&ChannelParams> {
        None
    }
}

/// A channel wrapped with the per-session byte ledger and a clock for time
/// spent blocked on the transport.
pub struct Link<'a> {
    channel: &'a mut dyn Channel,
    role: SyncRole,
    ledger: Ledger,
    blocked: Duration,
}

impl<'a> Link<'a> {
    pub fn new(channel: &'a mut dyn Channel, role: SyncRole) -> Self {
        Link {
            channel,
            role,
            ledger: Ledger::default(),
            blocked: Duration::ZERO,
        }
    }

    /// Sends a frame and returns its size on the wire.
    pub fn send(&mut self, frame: Frame) -> Result<usize, TransportError> {
        let start = Instant::now();
        let res = self.channel.send_frame(&frame);
        self.blocked += start.elapsed();
        res?;
        let n = frame.wire_len();
        self.ledger.record(Direction::sent_by(self.role), n);
        Ok(n)
    }

    pub fn recv(&mut self) -> Result<Frame, TransportError> {
        let start = Instant::now();
        let res = self.channel.recv_frame();
        self.blocked += start.elapsed();
        let frame = res?;
        let incoming = match self.role {
            SyncRole::Client => Direction::Down,
            SyncRole::Server => Direction::Up,
        };
        self.ledger.record(incoming, frame.wire_len());
        Ok(frame)
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn blocked(&self) -> Duration {
        self.blocked
    }

    pub fn simulated(&self) -> Option<ChannelParams> {
        self.channel.simulated().copied()
    }

    pub fn into_ledger(self) -> Ledger {
        self.ledger
    }
}
