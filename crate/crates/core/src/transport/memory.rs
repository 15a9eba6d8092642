//! In-process channel pair with per-direction FIFO queues.

use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use super::{Channel, ChannelParams, Frame, TransportError};

/// One end of an in-memory channel.
pub struct MemoryEndpoint {
    tx: Sender<Frame>,
    rx: Receiver<Frame>,
    params: ChannelParams,
    timeout: Duration,
}

/// Links two endpoints over an emulated link; conventionally the first is
/// handed to the server and the second to the client.
pub fn memory_pair(params: ChannelParams) -> (MemoryEndpoint, MemoryEndpoint) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    let timeout = Duration::from_secs(120);
    (
        MemoryEndpoint { tx: a_tx, rx: a_rx, params, timeout },
        MemoryEndpoint { tx: b_tx, rx: b_rx, params, timeout },
    )
}

impl MemoryEndpoint {
    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }
}

impl Channel for MemoryEndpoint {
    fn send_frame(&mut self, frame: &Frame) -> Result<(), TransportError> {
        self.tx.send(frame.clone()).map_err(|_| TransportError::Closed)
    }

    fn recv_frame(&mut self) -> Result<Frame, TransportError> {
        self.rx.recv_timeout(self.timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => TransportError::Timeout,
            RecvTimeoutError::Disconnected => TransportError::Closed,
        })
    }

    fn simulated(&self) -> Option<&ChannelParams> {
        Some(&self.params)
    }
}
