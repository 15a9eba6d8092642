//! Analytic network and compute cost model.

use thiserror::Error;

use super::{Burst, Direction};
use crate::protocol::SyncRole;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid channel parameter {name}: {reason}")]
pub struct ChannelParamError {
    pub name: &'static str,
    pub reason: String,
}

/// Emulated link between a client and a server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// One-way latency in milliseconds.
    pub latency_ms: f64,
    /// Client to server, Mbps.
    pub bandwidth_up_mbps: f64,
    /// Server to client, Mbps.
    pub bandwidth_down_mbps: f64,
    /// Probability in `[0, 1)`.
    pub packet_loss: f64,
    /// Percent of a CPU available to each side, in `(0, 100]`.
    pub cpu_server: f64,
    pub cpu_client: f64,
    pub mtu: u32,
}

impl Default for ChannelParams {
    /// 100 Mbps symmetric, no latency or loss, full CPU.
    fn default() -> Self {
        ChannelParams {
            latency_ms: 0.0,
            bandwidth_up_mbps: 100.0,
            bandwidth_down_mbps: 100.0,
            packet_loss: 0.0,
            cpu_server: 100.0,
            cpu_client: 100.0,
            mtu: 1500,
        }
    }
}

impl ChannelParams {
    pub fn symmetric(bandwidth_mbps: f64, latency_ms: f64) -> Self {
        ChannelParams {
            latency_ms,
            bandwidth_up_mbps: bandwidth_mbps,
            bandwidth_down_mbps: bandwidth_mbps,
            ..Default::default()
        }
    }

    /// Edge cellular link at its best: 7 Mbps, 30 ms.
    pub fn good_edge() -> Self {
        Self::symmetric(7.0, 30.0)
    }

    /// Edge cellular link at its worst: 1 Mbps, 50 ms.
    pub fn bad_edge() -> Self {
        Self::symmetric(1.0, 50.0)
    }

    pub fn validate(&self) -> Result<(), ChannelParamError> {
        let bad = |name, reason: &str| {
            Err(ChannelParamError {
                name,
                reason: reason.to_string(),
            })
        };
        if !(self.latency_ms.is_finite() && self.latency_ms >= 0.0) {
            return bad("latency", "must be a non-negative number of milliseconds");
        }
        for (name, bw) in [
            ("bandwidth_up", self.bandwidth_up_mbps),
            ("bandwidth_down", self.bandwidth_down_mbps),
        ] {
            if !(bw.is_finite() && bw > 0.0) {
                return bad(name, "must be positive");
            }
        }
        if !(0.0..1.0).contains(&self.packet_loss) {
            return bad("packet_loss", "must be in [0, 1)");
        }
        for (name, cpu) in [("cpu_server", self.cpu_server), ("cpu_client", self.cpu_client)] {
            if !(cpu > 0.0 && cpu <= 100.0) {
                return bad(name, "must be in (0, 100]");
            }
        }
        if self.mtu == 0 {
            return bad("mtu", "must be positive");
        }
        Ok(())
    }

    pub fn bandwidth_mbps(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Up => self.bandwidth_up_mbps,
            Direction::Down => self.bandwidth_down_mbps,
        }
    }

    /// Packets needed to carry `bytes`.
    pub fn packets(&self, bytes: u64) -> u64 {
        bytes.div_ceil(self.mtu as u64)
    }

    /// Seconds to deliver one burst of `bytes` in `direction`: one latency
    /// plus serialization time inflated by expected retransmissions.
    pub fn simulate_cost(&self, direction: Direction, bytes: u64) -> f64 {
        let goodput = self.bandwidth_mbps(direction) * 1e6 * (1.0 - self.packet_loss);
        self.latency_ms / 1000.0 + (bytes as f64 * 8.0) / goodput
    }

    /// Wall-clock compute time as it would be on a host throttled to the
    /// role's CPU share.
    pub fn scale_compute(&self, role: SyncRole, measured_seconds: f64) -> f64 {
        let cpu = match role {
            SyncRole::Server => self.cpu_server,
            SyncRole::Client => self.cpu_client,
        };
        measured_seconds * 100.0 / cpu
    }

    /// Sum of burst costs, in burst order.
    pub fn communication_time(&self, bursts: &[Burst]) -> f64 {
        bursts
            .iter()
            .map(|b| self.simulate_cost(b.direction, b.bytes))
            .sum()
    }
}
