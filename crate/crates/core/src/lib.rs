//! Set reconciliation between two networked peers.
//!
//! Three protocols are provided behind one API: characteristic polynomial
//! interpolation ([`cpi`]), invertible Bloom lookup tables ([`iblt`]) and
//! cuckoo filters ([`cuckoo`]). A [`GenSync`] holds a local set of 64-bit
//! identifiers and synchronises it with a peer over a framed channel
//! ([`transport`]). The [`bench`] module drives repeated runs over an
//! emulated link and reports bytes and timing.

pub mod bench;
pub mod cpi;
pub mod cuckoo;
pub mod field;
pub mod hash;
pub mod iblt;
pub mod par;
pub mod poly;
pub mod protocol;
pub mod sync;
pub mod transport;
pub mod wire;

pub use par::Execution;
pub use protocol::{ProtocolId, ProtocolParams, SyncRole};
pub use sync::{sync_pair, Builder, ConfigError, GenSync, Observation, SyncFailure};
