//! Benchmark harness: scripted configs, seeded workloads, repeated syncs over
//! the emulated in-memory link, and aggregated statistics.
//!
//! Repeat `r` of a config with seed `s` uses seed `s + r` for both the
//! workload and the protocol hashes, so a config fully determines every
//! run's bytes and simulated communication time.

mod config;
mod report;
mod stats;
mod workload;

pub use config::{parse_config, server_only, BenchConfig, ConfigParseError};
pub use report::{emit_csv, CSV_COLUMNS};
pub use stats::{MetricStats, RunStats};
pub use workload::{generate_workload, Workload, WorkloadError};

use crate::par::{self, Execution};
use crate::protocol::SyncRole;
use crate::sync::{sync_pair, Builder, GenSync, Observation};
use crate::transport::memory_pair;

/// One repeat of a benchmark, combining both parties' observations.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run_index: u32,
    pub seed: u64,
    pub success: bool,
    /// Both parties ended the run holding the same set.
    pub converged: bool,
    pub bytes_transmitted: u64,
    pub communication_time: f64,
    /// Scaled computation of both roles.
    pub computation_time: f64,
    pub total_time: f64,
    pub server: Observation,
    pub client: Observation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub runs: Vec<RunResult>,
    pub stats: RunStats,
}

fn endpoints(cfg: &BenchConfig, seed: u64, exec: Execution) -> (GenSync, GenSync) {
    let (s_ep, c_ep) = memory_pair(cfg.channel());
    let params = crate::ProtocolParams {
        rng_seed: seed,
        ..cfg.protocol_params
    };
    let make = |role, ep| {
        Builder::new()
            .protocol(cfg.protocol)
            .params(params)
            .role(role)
            .memory(ep)
            .execution(exec)
            .build()
            .expect("benchmark configs are validated when parsed")
    };
    (make(SyncRole::Server, s_ep), make(SyncRole::Client, c_ep))
}

/// Runs repeat `run_index` of `cfg`.
pub fn run_once(cfg: &BenchConfig, run_index: u32, exec: Execution) -> Result<RunResult, WorkloadError> {
    let seed = cfg.rng_seed.wrapping_add(run_index as u64);
    let w = generate_workload(cfg.set_size, cfg.diff_count, cfg.overlap_split, seed)?;
    let (mut server, mut client) = endpoints(cfg, seed, exec);
    for &e in &w.server {
        server.add_element(e);
    }
    for &e in &w.client {
        client.add_element(e);
    }
    let (s_ok, c_ok) = sync_pair(&mut server, &mut client);
    let s = server.observation().expect("sync ran").clone();
    let c = client.observation().expect("sync ran").clone();
    let computation_time = s.computation_time + c.computation_time;
    Ok(RunResult {
        run_index,
        seed,
        success: s_ok && c_ok,
        converged: server.elements() == client.elements(),
        bytes_transmitted: c.bytes_transmitted,
        communication_time: c.communication_time,
        computation_time,
        total_time: c.communication_time + computation_time,
        server: s,
        client: c,
    })
}

/// Executes every repeat of `cfg` in order. Failed syncs are recorded, not
/// raised.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport, WorkloadError> {
    run_benchmark_with(cfg, Execution::default())
}

/// [`run_benchmark`] with an explicit execution mode for the protocol
/// internals. Repeats always run one at a time so timings do not interfere.
pub fn run_benchmark_with(cfg: &BenchConfig, exec: Execution) -> Result<BenchReport, WorkloadError> {
    let runs = (0..cfg.repeat)
        .map(|r| run_once(cfg, r, exec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BenchReport {
        config: cfg.clone(),
        stats: RunStats::from_runs(&runs),
        runs,
    })
}

/// Bytes transmitted by every repeat of `cfg`, repeats running concurrently
/// under [`Execution::Parallel`]. Timings are not collected.
pub fn sweep_bytes(cfg: &BenchConfig, exec: Execution) -> Result<Vec<u64>, WorkloadError> {
    let results = par::map_indexed(exec, cfg.repeat as usize, |r| {
        run_once(cfg, r as u32, Execution::Sequential).map(|run| run.bytes_transmitted)
    });
    results.into_iter().collect()
}
