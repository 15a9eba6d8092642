use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::wire::{DecodeError, Reader, Writer};

/// Sync protocol selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolId {
    Cpi,
    Iblt,
    Cuckoo,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 3] = [ProtocolId::Cpi, ProtocolId::Iblt, ProtocolId::Cuckoo];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolId::Cpi => "CPI",
            ProtocolId::Iblt => "IBLT",
            ProtocolId::Cuckoo => "CUCKOO",
        }
    }

    pub(crate) fn wire_id(self) -> u8 {
        match self {
            ProtocolId::Cpi => 1,
            ProtocolId::Iblt => 2,
            ProtocolId::Cuckoo => 3,
        }
    }

    pub(crate) fn from_wire_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(ProtocolId::Cpi),
            2 => Some(ProtocolId::Iblt),
            3 => Some(ProtocolId::Cuckoo),
            _ => None,
        }
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown protocol {0:?} (expected CPI, IBLT or CUCKOO)")]
pub struct UnknownProtocol(pub String);

impl FromStr for ProtocolId {
    type Err = UnknownProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CPI" => Ok(ProtocolId::Cpi),
            "IBLT" => Ok(ProtocolId::Iblt),
            "CUCKOO" => Ok(ProtocolId::Cuckoo),
            _ => Err(UnknownProtocol(s.to_string())),
        }
    }
}

/// Which end of a sync session an instance plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SyncRole {
    Server,
    #[default]
    Client,
}

impl FromStr for SyncRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "server" => Ok(SyncRole::Server),
            "client" => Ok(SyncRole::Client),
            other => Err(format!("unknown role {other:?} (expected server or client)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid protocol parameter {name}: {reason}")]
pub struct ParamError {
    pub name: &'static str,
    pub reason: String,
}

/// Tunables for all three protocols. Both peers must agree on the fields
/// relevant to the selected protocol; the handshake checks this.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    /// Upper bound on the number of differences CPI can decode.
    pub cpi_mbar: u32,
    pub cpi_verification_points: u32,
    /// Number of times CPI may double `cpi_mbar` after a failed decode (0..=3).
    pub cpi_retries: u8,
    pub iblt_expected_diffs: u32,
    pub iblt_hedge: f64,
    pub iblt_num_hashes: u8,
    pub cuckoo_fingerprint_bits: u8,
    pub cuckoo_bucket_size: u8,
    pub cuckoo_max_kicks: u32,
    pub rng_seed: u64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            cpi_mbar: 100,
            cpi_verification_points: 8,
            cpi_retries: 0,
            iblt_expected_diffs: 100,
            iblt_hedge: 2.0,
            iblt_num_hashes: 4,
            cuckoo_fingerprint_bits: 12,
            cuckoo_bucket_size: 4,
            cuckoo_max_kicks: 500,
            rng_seed: 0,
        }
    }
}

/// Serialized size of [`ProtocolParams`].
pub const PARAMS_WIRE_LEN: usize = 4 + 4 + 1 + 4 + 8 + 1 + 1 + 1 + 4 + 8;

pub const MAX_CPI_RETRIES: u8 = 3;

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        fn bad(name: &'static str, reason: &str) -> Result<(), ParamError> {
            Err(ParamError {
                name,
                reason: reason.to_string(),
            })
        }
        if self.cpi_mbar == 0 {
            return bad("cpi_mbar", "must be at least 1");
        }
        if self.cpi_retries > MAX_CPI_RETRIES {
            return bad("cpi_retries", "at most 3 retries are allowed");
        }
        if self.iblt_expected_diffs == 0 {
            return bad("iblt_expected_diffs", "must be at least 1");
        }
        if !(self.iblt_hedge.is_finite() && self.iblt_hedge >= 1.0) {
            return bad("iblt_hedge", "must be a finite value >= 1.0");
        }
        if self.iblt_num_hashes < 2 {
            return bad("iblt_num_hashes", "must be at least 2");
        }
        if !(4..=32).contains(&self.cuckoo_fingerprint_bits) {
            return bad("cuckoo_fingerprint_bits", "must be in [4, 32]");
        }
        if self.cuckoo_bucket_size == 0 {
            return bad("cuckoo_bucket_size", "must be at least 1");
        }
        if self.cuckoo_max_kicks == 0 {
            return bad("cuckoo_max_kicks", "must be at least 1");
        }
        Ok(())
    }

    /// IBLT cell count: `k * ceil(hedge * expected_diffs / k)`.
    pub fn iblt_cells(&self) -> usize {
        let k = self.iblt_num_hashes.max(1) as usize;
        let raw = (self.iblt_hedge * self.iblt_expected_diffs as f64).ceil() as usize;
        raw.max(1).div_ceil(k) * k
    }

    /// Whether two peers' parameters allow a `protocol` session.
    pub fn agrees_with(&self, other: &ProtocolParams, protocol: ProtocolId) -> bool {
        self.rng_seed == other.rng_seed
            && match protocol {
                ProtocolId::Cpi => {
                    self.cpi_mbar == other.cpi_mbar
                        && self.cpi_verification_points == other.cpi_verification_points
                        && self.cpi_retries == other.cpi_retries
                }
                ProtocolId::Iblt => {
                    self.iblt_num_hashes == other.iblt_num_hashes
                        && self.iblt_cells() == other.iblt_cells()
                }
                ProtocolId::Cuckoo => {
                    self.cuckoo_fingerprint_bits == other.cuckoo_fingerprint_bits
                        && self.cuckoo_bucket_size == other.cuckoo_bucket_size
                        && self.cuckoo_max_kicks == other.cuckoo_max_kicks
                }
            }
    }

    pub(crate) fn encode_into(&self, w: &mut Writer) {
        w.u32(self.cpi_mbar)
            .u32(self.cpi_verification_points)
            .u8(self.cpi_retries)
            .u32(self.iblt_expected_diffs)
            .u64(self.iblt_hedge.to_bits())
            .u8(self.iblt_num_hashes)
            .u8(self.cuckoo_fingerprint_bits)
            .u8(self.cuckoo_bucket_size)
            .u32(self.cuckoo_max_kicks)
            .u64(self.rng_seed);
    }

    pub(crate) fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(ProtocolParams {
            cpi_mbar: r.u32()?,
            cpi_verification_points: r.u32()?,
            cpi_retries: r.u8()?,
            iblt_expected_diffs: r.u32()?,
            iblt_hedge: f64::from_bits(r.u64()?),
            iblt_num_hashes: r.u8()?,
            cuckoo_fingerprint_bits: r.u8()?,
            cuckoo_bucket_size: r.u8()?,
            cuckoo_max_kicks: r.u32()?,
            rng_seed: r.u64()?,
        })
    }

    /// Applies one `name=value` override, using the same names the benchmark
    /// config and builder accept.
    pub fn set(&mut self, name: &str, value: &str) -> Result<(), ParamError> {
        fn parse<T: FromStr>(name: &'static str, value: &str) -> Result<T, ParamError> {
            value.trim().parse().map_err(|_| ParamError {
                name,
                reason: format!("cannot parse {value:?}"),
            })
        }
        match name.trim() {
            "mbar" | "cpi_mbar" => self.cpi_mbar = parse("cpi_mbar", value)?,
            "verification_points" | "cpi_verification_points" => {
                self.cpi_verification_points = parse("cpi_verification_points", value)?
            }
            "retries" | "cpi_retries" => self.cpi_retries = parse("cpi_retries", value)?,
            "expected_diffs" | "iblt_expected_diffs" => {
                self.iblt_expected_diffs = parse("iblt_expected_diffs", value)?
            }
            "hedge" | "iblt_hedge" => self.iblt_hedge = parse("iblt_hedge", value)?,
            "num_hashes" | "iblt_num_hashes" => {
                self.iblt_num_hashes = parse("iblt_num_hashes", value)?
            }
            "fingerprint_bits" | "cuckoo_fingerprint_bits" => {
                self.cuckoo_fingerprint_bits = parse("cuckoo_fingerprint_bits", value)?
            }
            "bucket_size" | "cuckoo_bucket_size" => {
                self.cuckoo_bucket_size = parse("cuckoo_bucket_size", value)?
            }
            "max_kicks" | "cuckoo_max_kicks" => {
                self.cuckoo_max_kicks = parse("cuckoo_max_kicks", value)?
            }
            "seed" | "rng_seed" => self.rng_seed = parse("rng_seed", value)?,
            _ => {
                return Err(ParamError {
                    name: "protocol-params",
                    reason: format!("unknown parameter {name:?}"),
                })
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_id_round_trips() {
        for p in ProtocolId::ALL {
            assert_eq!(p.to_string().parse::<ProtocolId>().unwrap(), p);
            assert_eq!(ProtocolId::from_wire_id(p.wire_id()), Some(p));
        }
        assert_eq!("cuckoo".parse::<ProtocolId>().unwrap(), ProtocolId::Cuckoo);
        assert!("FOO".parse::<ProtocolId>().is_err());
        assert_eq!(ProtocolId::from_wire_id(0), None);
    }

    #[test]
    fn defaults_are_valid() {
        let p = ProtocolParams::default();
        p.validate().unwrap();
        assert_eq!(p.cpi_verification_points, 8);
        assert_eq!(p.iblt_hedge, 2.0);
        assert_eq!(p.iblt_num_hashes, 4);
        assert_eq!(p.cuckoo_fingerprint_bits, 12);
        assert_eq!(p.cuckoo_bucket_size, 4);
        assert_eq!(p.cuckoo_max_kicks, 500);
    }

    #[test]
    fn iblt_cell_count_is_multiple_of_k() {
        let mut p = ProtocolParams {
            iblt_expected_diffs: 40,
            ..Default::default()
        };
        assert_eq!(p.iblt_cells(), 80);
        p.iblt_expected_diffs = 7; // ceil(14 / 4) * 4
        assert_eq!(p.iblt_cells(), 16);
        p.iblt_num_hashes = 3;
        p.iblt_hedge = 1.5; // ceil(10.5) = 11 -> 12
        assert_eq!(p.iblt_cells(), 12);
    }

    #[test]
    fn params_wire_round_trip() {
        let p = ProtocolParams {
            cpi_mbar: 17,
            iblt_hedge: 1.25,
            rng_seed: u64::MAX,
            ..Default::default()
        };
        let mut w = Writer::default();
        p.encode_into(&mut w);
        let bytes = w.finish();
        assert_eq!(bytes.len(), PARAMS_WIRE_LEN);
        let mut r = Reader::new(&bytes);
        assert_eq!(ProtocolParams::decode_from(&mut r).unwrap(), p);
        r.finish().unwrap();
    }

    #[test]
    fn validation_rejects_out_of_range() {
        let bad = [
            ProtocolParams { cpi_mbar: 0, ..Default::default() },
            ProtocolParams { iblt_hedge: 0.5, ..Default::default() },
            ProtocolParams { iblt_num_hashes: 1, ..Default::default() },
            ProtocolParams { cuckoo_fingerprint_bits: 3, ..Default::default() },
            ProtocolParams { cuckoo_fingerprint_bits: 33, ..Default::default() },
            ProtocolParams { cpi_retries: 4, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn agreement_only_checks_relevant_fields() {
        let a = ProtocolParams::default();
        let b = ProtocolParams { cuckoo_fingerprint_bits: 16, ..a };
        assert!(a.agrees_with(&b, ProtocolId::Cpi));
        assert!(!a.agrees_with(&b, ProtocolId::Cuckoo));
        let c = ProtocolParams { rng_seed: 9, ..a };
        assert!(!a.agrees_with(&c, ProtocolId::Iblt));
    }
}
