use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::config::server_only;
use crate::field::MODULUS;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("infeasible workload: {0}")]
pub struct WorkloadError(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub server: Vec<u64>,
    pub client: Vec<u64>,
}

impl Workload {
    pub fn server_only(&self) -> usize {
        let c: HashSet<_> = self.client.iter().collect();
        self.server.iter().filter(|e| !c.contains(e)).count()
    }
}

/// Draws a seeded pair of sets with exactly `diff_count` differences,
/// `round(split * diff_count)` of them on the server.
///
/// The server holds `set_size` elements; the client holds the common part
/// plus its own differences, so both sizes equal `set_size` whenever the
/// differences are evenly split. Identifiers are drawn below the CPI field
/// modulus so that every protocol sees the same sets.
pub fn generate_workload(
    set_size: usize,
    diff_count: usize,
    split: f64,
    seed: u64,
) -> Result<Workload, WorkloadError> {
    if !(0.0..=1.0).contains(&split) {
        return Err(WorkloadError(format!("split {split} outside [0, 1]")));
    }
    if diff_count > 2 * set_size {
        return Err(WorkloadError(format!(
            "{diff_count} differences exceed twice the set size {set_size}"
        )));
    }
    let s_only = server_only(diff_count, split);
    if s_only > set_size {
        return Err(WorkloadError(format!(
            "{s_only} server-only elements exceed the set size {set_size}"
        )));
    }
    let c_only = diff_count - s_only;
    let total = set_size + c_only;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(total);
    let mut drawn = Vec::with_capacity(total);
    while drawn.len() < total {
        let x = rng.random_range(0..MODULUS);
        if seen.insert(x) {
            drawn.push(x);
        }
    }
    let server = drawn[..set_size].to_vec();
    let client = drawn[s_only..].to_vec();
    Ok(Workload { server, client })
}
