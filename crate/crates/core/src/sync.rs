//! The application-facing API: [`Builder`] configures a [`GenSync`], which
//! owns a local set, runs a sync session against one peer and records an
//! [`Observation`].
//!
//! Every session opens with a single HANDSHAKE frame from the client. The
//! client is the decoding side for CPI and IBLT; cuckoo sync is symmetric.
//!
//! | protocol | client                 | server                 |
//! |----------|------------------------|------------------------|
//! | CPI      | HANDSHAKE              |                        |
//! |          |                        | SKETCH (evaluations)   |
//! |          | DIFFS (server-missing) |                        |
//! |          |                        | ACK                    |
//! | IBLT     | HANDSHAKE              |                        |
//! |          |                        | SKETCH (table)         |
//! |          | DIFFS (server-missing) |                        |
//! |          |                        | ACK                    |
//! | Cuckoo   | HANDSHAKE, SKETCH      |                        |
//! |          |                        | SKETCH, DIFFS          |
//! |          | DIFFS                  |                        |
//! |          |                        | ACK                    |
//!
//! A failed CPI decode may request a doubled bound with a one-word SKETCH
//! frame, answered by a SKETCH carrying the extra evaluations. Either side
//! may send ABORT in place of its next frame.

use std::collections::BTreeSet;
use std::fmt;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::cpi::{self, CpiSketch, EvalCache, EvaluationBlock};
use crate::cuckoo::{self, CuckooError, CuckooFilter};
use crate::field::Fe;
use crate::iblt::{Iblt, IbltError};
use crate::par::Execution;
use crate::protocol::{ParamError, ProtocolId, ProtocolParams, SyncRole, PARAMS_WIRE_LEN};
use crate::transport::{
    Channel, Frame, FrameKind, Ledger, Link, MemoryEndpoint, TcpChannel, TransportError,
};
use crate::wire::{DecodeError, DiffPayload, Reader, Writer};

/// Version carried in every HANDSHAKE.
pub const WIRE_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown builder key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {reason}")]
    InvalidValue { key: &'static str, reason: String },
    #[error("missing required setting: {0}")]
    Missing(&'static str),
    #[error(transparent)]
    Params(#[from] ParamError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("no sync has been performed yet")]
    NoObservation,
}

/// Why a sync did not succeed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyncFailure {
    /// The peers disagree on protocol, parameters or wire version.
    HandshakeMismatch,
    /// CPI found more differences than its bound allows.
    BoundExceeded,
    /// The subtracted IBLT could not be fully peeled.
    PeelFailed,
    /// A cuckoo filter ran out of room while being built.
    FilterFull,
    /// A decode produced differences inconsistent with the local set.
    InconsistentDecode,
    /// The peer aborted without a more specific reason.
    PeerAborted,
    /// The peer sent something the protocol does not allow here.
    Protocol(String),
    Transport(String),
}

impl SyncFailure {
    fn abort_code(&self) -> u8 {
        match self {
            SyncFailure::HandshakeMismatch => 1,
            SyncFailure::BoundExceeded => 2,
            SyncFailure::PeelFailed => 3,
            SyncFailure::FilterFull => 4,
            SyncFailure::InconsistentDecode => 5,
            SyncFailure::PeerAborted => 6,
            SyncFailure::Protocol(_) => 7,
            SyncFailure::Transport(_) => 8,
        }
    }

    fn from_abort(payload: &[u8]) -> Self {
        match payload.first() {
            Some(1) => SyncFailure::HandshakeMismatch,
            Some(2) => SyncFailure::BoundExceeded,
            Some(3) => SyncFailure::PeelFailed,
            Some(4) => SyncFailure::FilterFull,
            Some(5) => SyncFailure::InconsistentDecode,
            Some(7) => SyncFailure::Protocol("peer reported a protocol error".into()),
            _ => SyncFailure::PeerAborted,
        }
    }

    /// Stable snake_case name.
    pub fn code(&self) -> &'static str {
        match self {
            SyncFailure::HandshakeMismatch => "handshake_mismatch",
            SyncFailure::BoundExceeded => "bound_exceeded",
            SyncFailure::PeelFailed => "peel_failed",
            SyncFailure::FilterFull => "filter_full",
            SyncFailure::InconsistentDecode => "inconsistent_decode",
            SyncFailure::PeerAborted => "peer_aborted",
            SyncFailure::Protocol(_) => "protocol_error",
            SyncFailure::Transport(_) => "transport_error",
        }
    }
}

impl fmt::Display for SyncFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyncFailure::Protocol(m) | SyncFailure::Transport(m) => write!(f, "{}: {m}", self.code()),
            _ => f.write_str(self.code()),
        }
    }
}

impl From<TransportError> for SyncFailure {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Malformed(m) => SyncFailure::Protocol(m),
            other => SyncFailure::Transport(other.to_string()),
        }
    }
}

impl From<DecodeError> for SyncFailure {
    fn from(e: DecodeError) -> Self {
        SyncFailure::Protocol(e.to_string())
    }
}

/// Execution statistics of one sync, from one party's point of view.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub success: bool,
    pub protocol: ProtocolId,
    pub params: ProtocolParams,
    pub role: SyncRole,
    /// Header plus payload bytes of every frame, both directions.
    pub bytes_transmitted: u64,
    /// Simulated on emulated links, wall-clock blocked time on TCP.
    pub communication_time: f64,
    /// Local computation in seconds, scaled by the role's CPU share on
    /// emulated links.
    pub computation_time: f64,
    /// Local set size when the sync started.
    pub local_set_size: usize,
    /// Elements of the symmetric difference this party learned about.
    pub differences_recovered: usize,
    pub failure: Option<SyncFailure>,
    pub ledger: Ledger,
}

impl Observation {
    pub fn total_time(&self) -> f64 {
        self.communication_time + self.computation_time
    }
}

enum Communicant {
    Memory(MemoryEndpoint),
    Tcp {
        host: String,
        port: u16,
        listener: Option<TcpListener>,
    },
}

enum CommunicantChoice {
    Socket,
    Memory(MemoryEndpoint),
}

/// Configures and creates [`GenSync`] instances.
pub struct Builder {
    protocol: Option<ProtocolId>,
    communicant: Option<CommunicantChoice>,
    host: Option<String>,
    port: Option<u16>,
    listener: Option<TcpListener>,
    role: SyncRole,
    params: ProtocolParams,
    execution: Execution,
    connect_timeout: Duration,
    read_timeout: Duration,
}

impl Default for Builder {
    fn default() -> Self {
        Builder {
            protocol: None,
            communicant: None,
            host: None,
            port: None,
            listener: None,
            role: SyncRole::Client,
            params: ProtocolParams::default(),
            execution: Execution::default(),
            connect_timeout: Duration::from_secs(5),
            read_timeout: Duration::from_secs(60),
        }
    }
}

impl Builder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets a field from its textual form.
    ///
    /// Keys: `protocol`, `communicant` (`socket`/`tcp`), `host`, `port`,
    /// `role`, `protocol-params` (comma-separated `name=value` pairs).
    pub fn set(mut self, key: &str, value: &str) -> Result<Self, ConfigError> {
        match key {
            "protocol" => {
                self.protocol = Some(value.parse().map_err(|e: crate::protocol::UnknownProtocol| {
                    ConfigError::InvalidValue {
                        key: "protocol",
                        reason: e.to_string(),
                    }
                })?)
            }
            "communicant" => match value.trim().to_ascii_lowercase().as_str() {
                "socket" | "tcp" => self.communicant = Some(CommunicantChoice::Socket),
                other => {
                    return Err(ConfigError::InvalidValue {
                        key: "communicant",
                        reason: format!(
                            "{other:?} is not a named communicant; attach in-memory endpoints with Builder::memory"
                        ),
                    })
                }
            },
            "host" => {
                if value.trim().is_empty() {
                    return Err(ConfigError::InvalidValue {
                        key: "host",
                        reason: "empty host".into(),
                    });
                }
                self.host = Some(value.trim().to_string())
            }
            "port" => {
                self.port = Some(value.trim().parse().map_err(|_| ConfigError::InvalidValue {
                    key: "port",
                    reason: format!("{value:?} is not a port number"),
                })?)
            }
            "role" => {
                self.role = value
                    .parse()
                    .map_err(|reason| ConfigError::InvalidValue { key: "role", reason })?
            }
            "protocol-params" => {
                for pair in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    let (name, v) = pair.split_once('=').ok_or_else(|| ConfigError::InvalidValue {
                        key: "protocol-params",
                        reason: format!("expected name=value, got {pair:?}"),
                    })?;
                    self.params.set(name, v)?;
                }
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(self)
    }

    pub fn protocol(mut self, protocol: ProtocolId) -> Self {
        self.protocol = Some(protocol);
        self
    }

    pub fn socket(mut self) -> Self {
        self.communicant = Some(CommunicantChoice::Socket);
        self
    }

    pub fn memory(mut self, endpoint: MemoryEndpoint) -> Self {
        self.communicant = Some(CommunicantChoice::Memory(endpoint));
        self
    }

    pub fn host(mut self, host: impl Into<String>) -> Self {
        self.host = Some(host.into());
        self
    }

    pub fn port(mut self, port: u16) -> Self {
        self.port = Some(port);
        self
    }

    /// Serves on an already bound listener instead of binding host/port.
    pub fn listener(mut self, listener: TcpListener) -> Self {
        self.listener = Some(listener);
        self.communicant = Some(CommunicantChoice::Socket);
        self
    }

    pub fn role(mut self, role: SyncRole) -> Self {
        self.role = role;
        self
    }

    pub fn params(mut self, params: ProtocolParams) -> Self {
        self.params = params;
        self
    }

    pub fn execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn connect_timeout(mut self, timeout: Duration) -> Self {
        self.connect_timeout = timeout;
        self
    }

    pub fn read_timeout(mut self, timeout: Duration) -> Self {
        self.read_timeout = timeout;
        self
    }

    pub fn build(self) -> Result<GenSync, ConfigError> {
        let protocol = self.protocol.ok_or(ConfigError::Missing("protocol"))?;
        self.params.validate()?;
        let communicant = match self.communicant.ok_or(ConfigError::Missing("communicant"))? {
            CommunicantChoice::Memory(ep) => Communicant::Memory(ep),
            CommunicantChoice::Socket => {
                if self.listener.is_some() && self.role == SyncRole::Server {
                    Communicant::Tcp {
                        host: self.host.unwrap_or_default(),
                        port: self.port.unwrap_or(0),
                        listener: self.listener,
                    }
                } else {
                    Communicant::Tcp {
                        host: self.host.ok_or(ConfigError::Missing("host"))?,
                        port: self.port.ok_or(ConfigError::Missing("port"))?,
                        listener: None,
                    }
                }
            }
        };
        Ok(GenSync {
            protocol,
            params: self.params,
            role: self.role,
            communicant,
            elements: BTreeSet::new(),
            cpi_cache: EvalCache::default(),
            execution: self.execution,
            connect_timeout: self.connect_timeout,
            read_timeout: self.read_timeout,
            last: None,
        })
    }
}

/// A local set bound to one peer and one protocol.
pub struct GenSync {
    protocol: ProtocolId,
    params: ProtocolParams,
    role: SyncRole,
    communicant: Communicant,
    elements: BTreeSet<u64>,
    cpi_cache: EvalCache,
    execution: Execution,
    connect_timeout: Duration,
    read_timeout: Duration,
    last: Option<Observation>,
}

/// What a session learned, whether or not it completed.
struct Progress {
    incoming: Vec<u64>,
    recovered: usize,
}

struct Failed {
    failure: SyncFailure,
    recovered: usize,
}

impl From<SyncFailure> for Failed {
    fn from(failure: SyncFailure) -> Self {
        Failed {
            failure,
            recovered: 0,
        }
    }
}

impl From<TransportError> for Failed {
    fn from(e: TransportError) -> Self {
        SyncFailure::from(e).into()
    }
}

impl From<DecodeError> for Failed {
    fn from(e: DecodeError) -> Self {
        SyncFailure::from(e).into()
    }
}

type SessionResult = Result<Progress, Failed>;

fn encode_handshake(protocol: ProtocolId, params: &ProtocolParams) -> Vec<u8> {
    let mut w = Writer::with_capacity(1 + PARAMS_WIRE_LEN + 2);
    w.u8(protocol.wire_id());
    params.encode_into(&mut w);
    w.u16(WIRE_VERSION);
    w.finish()
}

struct Handshake {
    protocol: Option<ProtocolId>,
    params: ProtocolParams,
    version: u16,
}

fn decode_handshake(buf: &[u8]) -> Result<Handshake, DecodeError> {
    let mut r = Reader::new(buf);
    let protocol = ProtocolId::from_wire_id(r.u8()?);
    let params = ProtocolParams::decode_from(&mut r)?;
    let version = r.u16()?;
    r.finish()?;
    Ok(Handshake {
        protocol,
        params,
        version,
    })
}

/// Frames that follow HANDSHAKE in the client's opening burst.
fn opening_burst_tail(protocol: Option<ProtocolId>) -> usize {
    match protocol {
        Some(ProtocolId::Cuckoo) => 1,
        _ => 0,
    }
}

fn abort(link: &mut Link<'_>, failure: SyncFailure) -> Failed {
    // best effort: the peer may already be gone
    let _ = link.send(Frame::new(FrameKind::Abort, vec![failure.abort_code()]));
    failure.into()
}

/// Receives the next frame, requiring `kind`.
fn expect(link: &mut Link<'_>, kind: FrameKind) -> Result<Frame, Failed> {
    let frame = match link.recv() {
        Ok(f) => f,
        Err(TransportError::Malformed(m)) => return Err(abort(link, SyncFailure::Protocol(m))),
        Err(e) => return Err(e.into()),
    };
    if frame.kind == FrameKind::Abort {
        return Err(SyncFailure::from_abort(&frame.payload).into());
    }
    if frame.kind != kind {
        let msg = format!("expected {kind:?}, got {:?}", frame.kind);
        return Err(abort(link, SyncFailure::Protocol(msg)));
    }
    Ok(frame)
}

fn decode_or_abort<T>(link: &mut Link<'_>, res: Result<T, DecodeError>) -> Result<T, Failed> {
    res.map_err(|e| abort(link, SyncFailure::Protocol(e.to_string())))
}

impl GenSync {
    pub fn builder() -> Builder {
        Builder::new()
    }

    pub fn protocol(&self) -> ProtocolId {
        self.protocol
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn role(&self) -> SyncRole {
        self.role
    }

    pub fn elements(&self) -> &BTreeSet<u64> {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// The identifier actually stored for `e`; CPI reduces into its field.
    pub fn canonical(&self, e: u64) -> u64 {
        match self.protocol {
            ProtocolId::Cpi => Fe::new(e).value(),
            _ => e,
        }
    }

    pub fn contains(&self, e: u64) -> bool {
        self.elements.contains(&self.canonical(e))
    }

    /// Returns false when the element is already present.
    pub fn add_element(&mut self, e: u64) -> bool {
        let e = self.canonical(e);
        let fresh = self.elements.insert(e);
        if fresh && self.protocol == ProtocolId::Cpi {
            self.cpi_cache.stage_add(Fe::new(e));
        }
        fresh
    }

    /// Returns false when the element was absent.
    pub fn remove_element(&mut self, e: u64) -> bool {
        let e = self.canonical(e);
        let removed = self.elements.remove(&e);
        if removed && self.protocol == ProtocolId::Cpi {
            self.cpi_cache.stage_remove(Fe::new(e));
        }
        removed
    }

    /// The observation of the most recent sync.
    pub fn observation(&self) -> Result<&Observation, StateError> {
        self.last.as_ref().ok_or(StateError::NoObservation)
    }

    /// Runs one blocking sync session. On success both parties hold the
    /// union of their sets (up to cuckoo false positives).
    pub fn sync_begin(&mut self) -> bool {
        let local_set_size = self.elements.len();
        let (mut channel, setup_error) = match self.open_channel() {
            Ok(ch) => (Some(ch), None),
            Err(e) => (None, Some(e)),
        };
        let start = Instant::now();
        let (result, ledger, blocked, simulated) = match channel.as_mut() {
            Some(ch) => {
                let ch: &mut dyn Channel = match ch {
                    OpenChannel::Memory => match &mut self.communicant {
                        Communicant::Memory(ep) => ep,
                        _ => unreachable!(),
                    },
                    OpenChannel::Tcp(tcp) => tcp,
                };
                let mut link = Link::new(ch, self.role);
                let session = Session {
                    protocol: self.protocol,
                    params: self.params,
                    role: self.role,
                    execution: self.execution,
                    elements: &self.elements,
                    cpi_cache: &mut self.cpi_cache,
                };
                let result = session.run(&mut link);
                let blocked = link.blocked();
                let simulated = link.simulated();
                (result, link.into_ledger(), blocked, simulated)
            }
            None => (
                Err(Failed::from(setup_error.expect("set when no channel"))),
                Ledger::default(),
                Duration::ZERO,
                None,
            ),
        };
        let raw_compute = start.elapsed().saturating_sub(blocked).as_secs_f64();
        let (communication_time, computation_time) = match simulated {
            Some(p) => (
                p.communication_time(ledger.bursts()),
                p.scale_compute(self.role, raw_compute),
            ),
            None => (blocked.as_secs_f64(), raw_compute),
        };
        drop(channel);

        let (success, recovered, failure) = match result {
            Ok(progress) => {
                for e in progress.incoming {
                    self.add_element(e);
                }
                (true, progress.recovered, None)
            }
            Err(f) => (false, f.recovered, Some(f.failure)),
        };
        self.last = Some(Observation {
            success,
            protocol: self.protocol,
            params: self.params,
            role: self.role,
            bytes_transmitted: ledger.total_bytes(),
            communication_time,
            computation_time,
            local_set_size,
            differences_recovered: recovered,
            failure,
            ledger,
        });
        success
    }

    fn open_channel(&mut self) -> Result<OpenChannel, SyncFailure> {
        let tf = |e: std::io::Error| SyncFailure::Transport(e.to_string());
        match &mut self.communicant {
            Communicant::Memory(_) => Ok(OpenChannel::Memory),
            Communicant::Tcp {
                host,
                port,
                listener,
            } => {
                let stream = match self.role {
                    SyncRole::Server => {
                        if listener.is_none() {
                            *listener = Some(TcpListener::bind((host.as_str(), *port)).map_err(tf)?);
                        }
                        let l = listener.as_ref().expect("bound above");
                        l.accept().map_err(tf)?.0
                    }
                    SyncRole::Client => connect_with_retry(host, *port, self.connect_timeout)?,
                };
                let ch = TcpChannel::new(stream).map_err(SyncFailure::from)?;
                ch.set_read_timeout(Some(self.read_timeout))
                    .map_err(SyncFailure::from)?;
                Ok(OpenChannel::Tcp(ch))
            }
        }
    }

    /// Address a server instance is listening on, once bound.
    pub fn local_addr(&self) -> Option<SocketAddr> {
        match &self.communicant {
            Communicant::Tcp {
                listener: Some(l), ..
            } => l.local_addr().ok(),
            _ => None,
        }
    }
}

enum OpenChannel {
    Memory,
    Tcp(TcpChannel),
}

fn connect_with_retry(host: &str, port: u16, timeout: Duration) -> Result<TcpStream, SyncFailure> {
    let deadline = Instant::now() + timeout;
    let addrs: Vec<SocketAddr> = (host, port)
        .to_socket_addrs()
        .map_err(|e| SyncFailure::Transport(format!("cannot resolve {host}:{port}: {e}")))?
        .collect();
    loop {
        let mut last_err = None;
        for addr in &addrs {
            match TcpStream::connect_timeout(addr, Duration::from_millis(500)) {
                Ok(s) => return Ok(s),
                Err(e) => last_err = Some(e),
            }
        }
        if Instant::now() >= deadline {
            let msg = last_err.map_or_else(|| "no addresses".to_string(), |e| e.to_string());
            return Err(SyncFailure::Transport(format!(
                "cannot connect to {host}:{port}: {msg}"
            )));
        }
        std::thread::sleep(Duration::from_millis(50));
    }
}

struct Session<'s> {
    protocol: ProtocolId,
    params: ProtocolParams,
    role: SyncRole,
    execution: Execution,
    elements: &'s BTreeSet<u64>,
    cpi_cache: &'s mut EvalCache,
}

impl Session<'_> {
    fn run(self, link: &mut Link<'_>) -> SessionResult {
        match self.role {
            SyncRole::Client => {
                link.send(Frame::new(
                    FrameKind::Handshake,
                    encode_handshake(self.protocol, &self.params),
                ))?;
                match self.protocol {
                    ProtocolId::Cpi => self.cpi_client(link),
                    ProtocolId::Iblt => self.iblt_client(link),
                    ProtocolId::Cuckoo => self.cuckoo_client(link),
                }
            }
            SyncRole::Server => {
                self.accept_handshake(link)?;
                match self.protocol {
                    ProtocolId::Cpi => self.cpi_server(link),
                    ProtocolId::Iblt => self.iblt_server(link),
                    ProtocolId::Cuckoo => self.cuckoo_server(link),
                }
            }
        }
    }

    fn accept_handshake(&self, link: &mut Link<'_>) -> Result<(), Failed> {
        let frame = expect(link, FrameKind::Handshake)?;
        let hs = decode_or_abort(link, decode_handshake(&frame.payload))?;
        let agrees = hs.version == WIRE_VERSION
            && hs.protocol == Some(self.protocol)
            && self.params.agrees_with(&hs.params, self.protocol);
        if !agrees {
            // consume the rest of the client's opening burst so both ledgers match
            for _ in 0..opening_burst_tail(hs.protocol) {
                link.recv()?;
            }
            return Err(abort(link, SyncFailure::HandshakeMismatch));
        }
        Ok(())
    }

    /// Checks decoded differences against the local set.
    fn consistent(&self, only_mine: &[u64], only_theirs: &[u64]) -> bool {
        only_mine.iter().all(|e| self.elements.contains(e))
            && only_theirs.iter().all(|e| !self.elements.contains(e))
    }

    fn receive_diffs_and_ack(&self, link: &mut Link<'_>, already: usize) -> SessionResult {
        let frame = expect(link, FrameKind::Diffs)?;
        let diffs = decode_or_abort(link, DiffPayload::decode(&frame.payload))?;
        link.send(Frame::empty(FrameKind::Ack))?;
        let recovered = already + diffs.elements.len() + diffs.learned_from_peer as usize;
        Ok(Progress {
            incoming: diffs.elements,
            recovered,
        })
    }

    fn send_diffs_and_wait(
        &self,
        link: &mut Link<'_>,
        outgoing: Vec<u64>,
        incoming: Vec<u64>,
        learned_from_peer: usize,
    ) -> SessionResult {
        let recovered = outgoing.len() + incoming.len();
        let payload = DiffPayload {
            elements: outgoing,
            learned_from_peer: learned_from_peer as u32,
        };
        link.send(Frame::new(FrameKind::Diffs, payload.encode()))?;
        expect(link, FrameKind::Ack).map_err(|f| Failed {
            recovered,
            ..f
        })?;
        Ok(Progress {
            incoming,
            recovered,
        })
    }

    fn cpi_block(&mut self, mbar: u32, range: std::ops::Range<usize>) -> EvaluationBlock {
        let evals = self.cpi_cache.evaluations(self.elements, range.end, self.execution);
        EvaluationBlock {
            set_size: self.elements.len() as u64,
            mbar,
            verification_points: self.params.cpi_verification_points,
            first_index: range.start as u32,
            values: evals[range].to_vec(),
        }
    }

    fn cpi_server(mut self, link: &mut Link<'_>) -> SessionResult {
        let v = self.params.cpi_verification_points as usize;
        let mut mbar = self.params.cpi_mbar;
        let mut retries_left = self.params.cpi_retries;
        let block = self.cpi_block(mbar, 0..mbar as usize + v);
        link.send(Frame::new(FrameKind::Sketch, block.encode()))?;
        loop {
            let frame = match link.recv() {
                Ok(f) => f,
                Err(TransportError::Malformed(m)) => return Err(abort(link, SyncFailure::Protocol(m))),
                Err(e) => return Err(e.into()),
            };
            match frame.kind {
                FrameKind::Sketch => {
                    let mut r = Reader::new(&frame.payload);
                    let requested = decode_or_abort(link, r.u32().and_then(|m| r.finish().map(|_| m)))?;
                    if retries_left == 0 || Some(requested) != mbar.checked_mul(2) {
                        return Err(abort(
                            link,
                            SyncFailure::Protocol(format!("unexpected bound extension to {requested}")),
                        ));
                    }
                    retries_left -= 1;
                    let old_len = mbar as usize + v;
                    mbar = requested;
                    let block = self.cpi_block(mbar, old_len..mbar as usize + v);
                    link.send(Frame::new(FrameKind::Sketch, block.encode()))?;
                }
                FrameKind::Diffs => {
                    let diffs = decode_or_abort(link, DiffPayload::decode(&frame.payload))?;
                    link.send(Frame::empty(FrameKind::Ack))?;
                    let recovered = diffs.elements.len() + diffs.learned_from_peer as usize;
                    return Ok(Progress {
                        incoming: diffs.elements,
                        recovered,
                    });
                }
                FrameKind::Abort => return Err(SyncFailure::from_abort(&frame.payload).into()),
                other => {
                    return Err(abort(link, SyncFailure::Protocol(format!("unexpected {other:?}"))))
                }
            }
        }
    }

    fn cpi_client(self, link: &mut Link<'_>) -> SessionResult {
        let v = self.params.cpi_verification_points;
        let mut mbar = self.params.cpi_mbar;
        let frame = expect(link, FrameKind::Sketch)?;
        let first = decode_or_abort(link, EvaluationBlock::decode(&frame.payload))?;
        if first.mbar != mbar
            || first.verification_points != v
            || first.first_index != 0
            || first.values.len() != (mbar + v) as usize
        {
            return Err(abort(link, SyncFailure::Protocol("CPI sketch has wrong dimensions".into())));
        }
        let their_size = first.set_size;
        let mut theirs = first.values;
        let mut retries_left = self.params.cpi_retries;
        let diff = loop {
            let count = (mbar + v) as usize;
            let mine = CpiSketch {
                mbar,
                verification_points: v,
                set_size: self.elements.len() as u64,
                evaluations: self.cpi_cache.evaluations(self.elements, count, self.execution).to_vec(),
            };
            let their_sketch = CpiSketch {
                mbar,
                verification_points: v,
                set_size: their_size,
                evaluations: theirs.clone(),
            };
            let decoded = cpi::reconcile(&mine, &their_sketch).ok().and_then(|d| {
                let only_mine: Vec<u64> = d.only_mine.iter().map(|x| x.value()).collect();
                let only_theirs: Vec<u64> = d.only_theirs.iter().map(|x| x.value()).collect();
                self.consistent(&only_mine, &only_theirs)
                    .then_some((only_mine, only_theirs))
            });
            if let Some(d) = decoded {
                break d;
            }
            let next = mbar.checked_mul(2).filter(|_| retries_left > 0);
            let Some(next) = next else {
                return Err(abort(link, SyncFailure::BoundExceeded));
            };
            retries_left -= 1;
            let mut w = Writer::default();
            w.u32(next);
            link.send(Frame::new(FrameKind::Sketch, w.finish()))?;
            let frame = expect(link, FrameKind::Sketch)?;
            let ext = decode_or_abort(link, EvaluationBlock::decode(&frame.payload))?;
            if ext.mbar != next
                || ext.first_index as usize != count
                || ext.values.len() != (next - mbar) as usize
            {
                return Err(abort(link, SyncFailure::Protocol("CPI extension has wrong dimensions".into())));
            }
            theirs.extend(ext.values);
            mbar = next;
        };
        let (only_mine, only_theirs) = diff;
        let learned = only_theirs.len();
        self.send_diffs_and_wait(link, only_mine, only_theirs, learned)
    }

    fn local_iblt(&self) -> Result<Iblt, IbltError> {
        Iblt::from_keys(
            self.params.iblt_cells(),
            self.params.iblt_num_hashes,
            self.params.rng_seed,
            self.elements.iter().copied(),
        )
    }

    fn iblt_server(self, link: &mut Link<'_>) -> SessionResult {
        let table = self
            .local_iblt()
            .map_err(|e| abort(link, SyncFailure::Protocol(e.to_string())))?;
        link.send(Frame::new(FrameKind::Sketch, table.encode()))?;
        self.receive_diffs_and_ack(link, 0)
    }

    fn iblt_client(self, link: &mut Link<'_>) -> SessionResult {
        let frame = expect(link, FrameKind::Sketch)?;
        let theirs = decode_or_abort(link, Iblt::decode(&frame.payload))?;
        let mine = self
            .local_iblt()
            .map_err(|e| abort(link, SyncFailure::Protocol(e.to_string())))?;
        let diff = mine
            .subtract(&theirs)
            .map_err(|e| abort(link, SyncFailure::Protocol(e.to_string())))?;
        let res = match diff.peel() {
            Ok(res) => res,
            Err(IbltError::PeelFailed { recovered, .. }) => {
                let f = abort(link, SyncFailure::PeelFailed);
                return Err(Failed { recovered, ..f });
            }
            Err(e) => return Err(abort(link, SyncFailure::Protocol(e.to_string()))),
        };
        let only_mine: Vec<u64> = res.positive.into_iter().collect();
        let only_theirs: Vec<u64> = res.negative.into_iter().collect();
        if !self.consistent(&only_mine, &only_theirs) {
            return Err(abort(link, SyncFailure::InconsistentDecode));
        }
        let learned = only_theirs.len();
        self.send_diffs_and_wait(link, only_mine, only_theirs, learned)
    }

    fn local_filter(&self, keys: &[u64]) -> Result<CuckooFilter, CuckooError> {
        CuckooFilter::build(
            keys,
            self.params.cuckoo_bucket_size,
            self.params.cuckoo_fingerprint_bits,
            self.params.rng_seed,
            self.params.cuckoo_max_kicks,
        )
    }

    fn cuckoo_client(self, link: &mut Link<'_>) -> SessionResult {
        let keys: Vec<u64> = self.elements.iter().copied().collect();
        let filter = match self.local_filter(&keys) {
            Ok(f) => f,
            Err(_) => return Err(abort(link, SyncFailure::FilterFull)),
        };
        link.send(Frame::new(FrameKind::Sketch, filter.encode()))?;
        let frame = expect(link, FrameKind::Sketch)?;
        let theirs = decode_or_abort(
            link,
            CuckooFilter::decode(&frame.payload, self.params.cuckoo_max_kicks),
        )?;
        let frame = expect(link, FrameKind::Diffs)?;
        let incoming = decode_or_abort(link, DiffPayload::decode(&frame.payload))?.elements;
        let only_mine = cuckoo::local_only(&keys, &theirs, self.execution);
        let learned = incoming.len();
        self.send_diffs_and_wait(link, only_mine, incoming, learned)
    }

    fn cuckoo_server(self, link: &mut Link<'_>) -> SessionResult {
        let frame = expect(link, FrameKind::Sketch)?;
        let theirs = decode_or_abort(
            link,
            CuckooFilter::decode(&frame.payload, self.params.cuckoo_max_kicks),
        )?;
        let keys: Vec<u64> = self.elements.iter().copied().collect();
        let filter = match self.local_filter(&keys) {
            Ok(f) => f,
            Err(_) => return Err(abort(link, SyncFailure::FilterFull)),
        };
        let only_mine = cuckoo::local_only(&keys, &theirs, self.execution);
        let sent = only_mine.len();
        link.send(Frame::new(FrameKind::Sketch, filter.encode()))?;
        let payload = DiffPayload {
            elements: only_mine,
            learned_from_peer: 0,
        };
        link.send(Frame::new(FrameKind::Diffs, payload.encode()))?;
        let frame = expect(link, FrameKind::Diffs).map_err(|f| Failed {
            recovered: sent,
            ..f
        })?;
        let diffs = decode_or_abort(link, DiffPayload::decode(&frame.payload))?;
        link.send(Frame::empty(FrameKind::Ack))?;
        Ok(Progress {
            recovered: sent + diffs.elements.len(),
            incoming: diffs.elements,
        })
    }
}

/// Runs a server and a client instance against each other on two threads
/// and returns `(server_ok, client_ok)`.
pub fn sync_pair(server: &mut GenSync, client: &mut GenSync) -> (bool, bool) {
    std::thread::scope(|s| {
        let h = s.spawn(|| server.sync_begin());
        let c = client.sync_begin();
        (h.join().expect("server thread panicked"), c)
    })
}
