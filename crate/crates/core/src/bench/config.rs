use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::protocol::{ProtocolId, ProtocolParams};
use crate::transport::ChannelParams;

/// One benchmark experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub protocol: ProtocolId,
    pub latency_ms: f64,
    /// Client to server.
    pub bandwidth_up_mbps: f64,
    /// Server to client.
    pub bandwidth_down_mbps: f64,
    pub packet_loss: f64,
    pub cpu_server: f64,
    pub cpu_client: f64,
    pub repeat: u32,
    pub set_size: usize,
    pub diff_count: usize,
    /// Share of the differences held only by the server.
    pub overlap_split: f64,
    pub rng_seed: u64,
    /// Protocol parameters. `rng_seed` is replaced per repeat.
    pub protocol_params: ProtocolParams,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigParseError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?} (first set on line {first})")]
    Duplicate { line: usize, key: String, first: usize },
    #[error("line {line}: invalid {key}: {reason}")]
    Value { line: usize, key: String, reason: String },
    #[error("line {line}: missing required key {key:?}")]
    Missing { line: usize, key: &'static str },
}

impl ConfigParseError {
    pub fn line(&self) -> usize {
        match self {
            ConfigParseError::Syntax { line, .. }
            | ConfigParseError::UnknownKey { line, .. }
            | ConfigParseError::Duplicate { line, .. }
            | ConfigParseError::Value { line, .. }
            | ConfigParseError::Missing { line, .. } => *line,
        }
    }
}

const REQUIRED: [&str; 3] = ["protocol", "latency", "bandwidth"];

const CHANNEL_KEYS: [&str; 11] = [
    "protocol",
    "latency",
    "bandwidth",
    "packet_loss",
    "cpu_server",
    "cpu_client",
    "repeat",
    "set_size",
    "diff_count",
    "overlap_split",
    "seed",
];

/// Protocol parameter keys accepted in scripts, in output order.
const PARAM_KEYS: [&str; 9] = [
    "mbar",
    "verification_points",
    "retries",
    "expected_diffs",
    "hedge",
    "num_hashes",
    "fingerprint_bits",
    "bucket_size",
    "max_kicks",
];

fn param_key(key: &str) -> Option<&'static str> {
    let short = key
        .strip_prefix("cpi_")
        .or_else(|| key.strip_prefix("iblt_"))
        .or_else(|| key.strip_prefix("cuckoo_"))
        .unwrap_or(key);
    PARAM_KEYS.iter().copied().find(|k| *k == short)
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    for q in ['"', '\''] {
        if v.len() >= 2 && v.starts_with(q) && v.ends_with(q) {
            return &v[1..v.len() - 1];
        }
    }
    v
}

struct Entry {
    line: usize,
    value: String,
}

fn value_err(line: usize, key: &str, reason: impl Into<String>) -> ConfigParseError {
    ConfigParseError::Value {
        line,
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn parse_num<T: std::str::FromStr>(e: &Entry, key: &str) -> Result<T, ConfigParseError> {
    e.value
        .trim()
        .parse()
        .map_err(|_| value_err(e.line, key, format!("{:?} is not a valid number", e.value)))
}

fn parse_f64(e: &Entry, key: &str) -> Result<f64, ConfigParseError> {
    let v: f64 = parse_num(e, key)?;
    if !v.is_finite() {
        return Err(value_err(e.line, key, "must be finite"));
    }
    Ok(v)
}

/// Parses a benchmark script of `key=value` lines.
///
/// `#` starts a comment. Values may be quoted. `bandwidth` takes either
/// `"up/down"` or a single symmetric value. Besides the channel keys the
/// script accepts `set_size`, `diff_count`, `overlap_split`, `seed` and the
/// protocol parameters (`mbar`, `expected_diffs`, `fingerprint_bits`, ...).
/// `mbar` and `expected_diffs` default to `diff_count`.
pub fn parse_config(text: &str) -> Result<BenchConfig, ConfigParseError> {
    let mut entries: HashMap<&'static str, Entry> = HashMap::new();
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = match raw.find('#') {
            Some(pos) if !in_quotes(raw, pos) => &raw[..pos],
            _ => raw,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigParseError::Syntax {
            line,
            text: content.to_string(),
        })?;
        let key = key.trim();
        let canonical = CHANNEL_KEYS
            .iter()
            .copied()
            .find(|k| *k == key)
            .or_else(|| param_key(key))
            .ok_or_else(|| ConfigParseError::UnknownKey {
                line,
                key: key.to_string(),
            })?;
        if let Some(prev) = entries.get(canonical) {
            return Err(ConfigParseError::Duplicate {
                line,
                key: key.to_string(),
                first: prev.line,
            });
        }
        entries.insert(
            canonical,
            Entry {
                line,
                value: unquote(value).to_string(),
            },
        );
    }
    for key in REQUIRED {
        if !entries.contains_key(key) {
            return Err(ConfigParseError::Missing {
                line: last_line,
                key,
            });
        }
    }

    let protocol_entry = &entries["protocol"];
    let protocol: ProtocolId = protocol_entry
        .value
        .parse()
        .map_err(|e: crate::protocol::UnknownProtocol| value_err(protocol_entry.line, "protocol", e.to_string()))?;

    let e = &entries["latency"];
    let latency_ms = parse_f64(e, "latency")?;
    if latency_ms < 0.0 {
        return Err(value_err(e.line, "latency", "must be non-negative"));
    }

    let e = &entries["bandwidth"];
    let (up, down) = match e.value.split_once('/') {
        Some((u, d)) => (u.trim(), d.trim()),
        None => (e.value.trim(), e.value.trim()),
    };
    let bw = |s: &str| -> Result<f64, ConfigParseError> {
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
            _ => Err(value_err(e.line, "bandwidth", format!("{s:?} is not a positive rate"))),
        }
    };
    let (bandwidth_up_mbps, bandwidth_down_mbps) = (bw(up)?, bw(down)?);

    let get_f64 = |key: &str, default: f64| -> Result<(f64, usize), ConfigParseError> {
        match entries.get(key) {
            Some(e) => Ok((parse_f64(e, key)?, e.line)),
            None => Ok((default, 0)),
        }
    };
    let (packet_loss, line) = get_f64("packet_loss", 0.0)?;
    if !(0.0..1.0).contains(&packet_loss) {
        return Err(value_err(line, "packet_loss", "must be a fraction in [0, 1)"));
    }
    let mut cpu = [0.0; 2];
    for (slot, key) in cpu.iter_mut().zip(["cpu_server", "cpu_client"]) {
        let (v, line) = get_f64(key, 100.0)?;
        if !(v > 0.0 && v <= 100.0) {
            return Err(value_err(line, key, "must be a percentage in (0, 100]"));
        }
        *slot = v;
    }
    let (overlap_split, line) = get_f64("overlap_split", 0.5)?;
    if !(0.0..=1.0).contains(&overlap_split) {
        return Err(value_err(line, "overlap_split", "must be a fraction in [0, 1]"));
    }

    let get_int = |key: &str, default: u64| -> Result<(u64, usize), ConfigParseError> {
        match entries.get(key) {
            Some(e) => Ok((parse_num(e, key)?, e.line)),
            None => Ok((default, 0)),
        }
    };
    let (repeat, line) = get_int("repeat", 1)?;
    if repeat == 0 || repeat > u32::MAX as u64 {
        return Err(value_err(line, "repeat", "must be at least 1"));
    }
    let (set_size, _) = get_int("set_size", 10_000)?;
    let (diff_count, line) = get_int("diff_count", 100)?;
    let (set_size, diff_count) = (set_size as usize, diff_count as usize);
    if diff_count > 2 * set_size {
        return Err(value_err(line, "diff_count", "must not exceed 2 x set_size"));
    }
    if server_only(diff_count, overlap_split) > set_size {
        return Err(value_err(
            line,
            "diff_count",
            "server-only share of the differences exceeds set_size",
        ));
    }
    let (rng_seed, _) = get_int("seed", 0)?;

    let provisioned = diff_count.max(1) as u32;
    let mut protocol_params = ProtocolParams {
        cpi_mbar: provisioned,
        iblt_expected_diffs: provisioned,
        rng_seed,
        ..ProtocolParams::default()
    };
    for key in PARAM_KEYS {
        if let Some(e) = entries.get(key) {
            protocol_params
                .set(key, e.value.trim())
                .map_err(|err| value_err(e.line, key, err.reason))?;
        }
    }
    protocol_params
        .validate()
        .map_err(|err| value_err(last_line, err.name, err.reason))?;

    let cfg = BenchConfig {
        protocol,
        latency_ms,
        bandwidth_up_mbps,
        bandwidth_down_mbps,
        packet_loss,
        cpu_server: cpu[0],
        cpu_client: cpu[1],
        repeat: repeat as u32,
        set_size,
        diff_count,
        overlap_split,
        rng_seed,
        protocol_params,
    };
    cfg.channel()
        .validate()
        .map_err(|err| value_err(last_line, err.name, err.reason))?;
    Ok(cfg)
}

fn in_quotes(s: &str, pos: usize) -> bool {
    s[..pos].chars().filter(|c| *c == '"').count() % 2 == 1
}

/// Number of server-only elements for `diff_count` differences.
pub fn server_only(diff_count: usize, split: f64) -> usize {
    (split * diff_count as f64).round() as usize
}

impl BenchConfig {
    pub fn channel(&self) -> ChannelParams {
        ChannelParams {
            latency_ms: self.latency_ms,
            bandwidth_up_mbps: self.bandwidth_up_mbps,
            bandwidth_down_mbps: self.bandwidth_down_mbps,
            packet_loss: self.packet_loss,
            cpu_server: self.cpu_server,
            cpu_client: self.cpu_client,
            ..ChannelParams::default()
        }
    }

    /// Replaces the workload seed and the protocol seed derived from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self.protocol_params.rng_seed = seed;
        self
    }

    /// Copies latency, bandwidth and loss from `channel`.
    pub fn with_link(mut self, channel: &ChannelParams) -> Self {
        self.latency_ms = channel.latency_ms;
        self.bandwidth_up_mbps = channel.bandwidth_up_mbps;
        self.bandwidth_down_mbps = channel.bandwidth_down_mbps;
        self.packet_loss = channel.packet_loss;
        self
    }

    /// Renders a script that parses back to an equal config.
    pub fn to_script(&self) -> String {
        let p = &self.protocol_params;
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        line("protocol", self.protocol.as_str().to_string());
        line("latency", self.latency_ms.to_string());
        line(
            "bandwidth",
            format!("\"{}/{}\"", self.bandwidth_up_mbps, self.bandwidth_down_mbps),
        );
        line("packet_loss", self.packet_loss.to_string());
        line("cpu_server", self.cpu_server.to_string());
        line("cpu_client", self.cpu_client.to_string());
        line("repeat", self.repeat.to_string());
        line("set_size", self.set_size.to_string());
        line("diff_count", self.diff_count.to_string());
        line("overlap_split", self.overlap_split.to_string());
        line("seed", self.rng_seed.to_string());
        line("mbar", p.cpi_mbar.to_string());
        line("verification_points", p.cpi_verification_points.to_string());
        line("retries", p.cpi_retries.to_string());
        line("expected_diffs", p.iblt_expected_diffs.to_string());
        line("hedge", p.iblt_hedge.to_string());
        line("num_hashes", p.iblt_num_hashes.to_string());
        line("fingerprint_bits", p.cuckoo_fingerprint_bits.to_string());
        line("bucket_size", p.cuckoo_bucket_size.to_string());
        line("max_kicks", p.cuckoo_max_kicks.to_string());
        s
    }
}
