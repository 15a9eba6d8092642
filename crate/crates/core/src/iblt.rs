//! Invertible Bloom lookup table with partitioned hashing.
//!
//! The table has `m` cells split into `k` partitions of `m / k` cells; hash
//! `j` places a key in partition `j`, so every key touches `k` distinct cells.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::hash::{hash64, tag};
use crate::wire::{DecodeError, Reader, Writer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IbltError {
    #[error("tables differ in geometry or seed")]
    Incompatible,
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("peeling stalled with {remaining} nonempty cells ({recovered} keys recovered)")]
    PeelFailed { remaining: usize, recovered: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IbltCell {
    pub count: i32,
    pub key_sum: u64,
    pub hash_sum: u64,
}

impl IbltCell {
    pub fn is_empty(&self) -> bool {
        self.count == 0 && self.key_sum == 0 && self.hash_sum == 0
    }

    fn is_pure(&self, seed: u64) -> bool {
        (self.count == 1 || self.count == -1) && self.hash_sum == check_hash(self.key_sum, seed)
    }
}

fn check_hash(key: u64, seed: u64) -> u64 {
    hash64(key, seed ^ tag::IBLT_CHECK)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Iblt {
    cells: Vec<IbltCell>,
    num_hashes: u8,
    seed: u64,
}

/// Keys recovered by peeling a subtracted table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PeelResult {
    /// Keys present only in the minuend's set.
    pub positive: BTreeSet<u64>,
    /// Keys present only in the subtrahend's set.
    pub negative: BTreeSet<u64>,
}

impl Iblt {
    pub fn new(cells: usize, num_hashes: u8, seed: u64) -> Result<Self, IbltError> {
        if num_hashes < 2 {
            return Err(IbltError::Geometry("need at least two hashes".into()));
        }
        if cells == 0 || !cells.is_multiple_of(num_hashes as usize) {
            return Err(IbltError::Geometry(format!(
                "cell count {cells} is not a positive multiple of {num_hashes}"
            )));
        }
        if cells > u32::MAX as usize {
            return Err(IbltError::Geometry("too many cells".into()));
        }
        Ok(Iblt {
            cells: vec![IbltCell::default(); cells],
            num_hashes,
            seed,
        })
    }

    pub fn from_keys(
        cells: usize,
        num_hashes: u8,
        seed: u64,
        keys: impl IntoIterator<Item = u64>,
    ) -> Result<Self, IbltError> {
        let mut t = Self::new(cells, num_hashes, seed)?;
        for k in keys {
            t.insert(k);
        }
        Ok(t)
    }

    pub fn cells(&self) -> &[IbltCell] {
        &self.cells
    }

    pub fn num_hashes(&self) -> u8 {
        self.num_hashes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_empty(&self) -> bool {
        self.cells.iter().all(IbltCell::is_empty)
    }

    fn cell_indices(&self, key: u64) -> impl Iterator<Item = usize> + '_ {
        let width = (self.cells.len() / self.num_hashes as usize) as u64;
        (0..self.num_hashes as u64).map(move |j| {
            let h = hash64(key, self.seed ^ tag::IBLT_CELL ^ j.wrapping_mul(0x1000_0000_01b3));
            (j * width + h % width) as usize
        })
    }

    fn apply(&mut self, key: u64, delta: i32) {
        let check = check_hash(key, self.seed);
        let idx: Vec<usize> = self.cell_indices(key).collect();
        for i in idx {
            let c = &mut self.cells[i];
            c.count = c.count.wrapping_add(delta);
            c.key_sum ^= key;
            c.hash_sum ^= check;
        }
    }

    pub fn insert(&mut self, key: u64) {
        self.apply(key, 1);
    }

    pub fn erase(&mut self, key: u64) {
        self.apply(key, -1);
    }

    /// Cell-wise `self - other`; keys present in both cancel.
    pub fn subtract(&self, other: &Iblt) -> Result<Iblt, IbltError> {
        if self.cells.len() != other.cells.len()
            || self.num_hashes != other.num_hashes
            || self.seed != other.seed
        {
            return Err(IbltError::Incompatible);
        }
        let cells = self
            .cells
            .iter()
            .zip(&other.cells)
            .map(|(a, b)| IbltCell {
                count: a.count.wrapping_sub(b.count),
                key_sum: a.key_sum ^ b.key_sum,
                hash_sum: a.hash_sum ^ b.hash_sum,
            })
            .collect();
        Ok(Iblt { cells, ..*self })
    }

    /// Peels pure cells until the table is empty.
    ///
    /// On failure the error reports how many keys were recovered first.
    pub fn peel(&self) -> Result<PeelResult, IbltError> {
        let mut t = self.clone();
        let mut out = PeelResult::default();
        let mut queue: Vec<usize> = (0..t.cells.len())
            .filter(|&i| t.cells[i].is_pure(t.seed))
            .collect();
        while let Some(i) = queue.pop() {
            let cell = t.cells[i];
            if !cell.is_pure(t.seed) {
                continue;
            }
            let key = cell.key_sum;
            let fresh = if cell.count == 1 {
                out.positive.insert(key)
            } else {
                out.negative.insert(key)
            };
            if !fresh {
                // a phantom key produced twice means the table is inconsistent
                break;
            }
            let idx: Vec<usize> = t.cell_indices(key).collect();
            t.apply(key, -cell.count);
            queue.extend(idx.into_iter().filter(|&j| t.cells[j].is_pure(t.seed)));
        }
        let remaining = t.cells.iter().filter(|c| !c.is_empty()).count();
        if remaining > 0 {
            return Err(IbltError::PeelFailed {
                remaining,
                recovered: out.positive.len() + out.negative.len(),
            });
        }
        Ok(out)
    }

    /// Bytes produced by [`Iblt::encode`] for a table of `cells` cells.
    pub fn encoded_len(cells: usize) -> usize {
        4 + 1 + 8 + 20 * cells
    }

    /// `m: u32, k: u8, seed: u64`, then `(count: i32, key_sum: u64,
    /// hash_sum: u64)` per cell, big-endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(Self::encoded_len(self.cells.len()));
        w.u32(self.cells.len() as u32).u8(self.num_hashes).u64(self.seed);
        for c in &self.cells {
            w.i32(c.count).u64(c.key_sum).u64(c.hash_sum);
        }
        w.finish()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(buf);
        let m = r.u32()? as usize;
        let k = r.u8()?;
        let seed = r.u64()?;
        if r.remaining() != 20 * m {
            return Err(DecodeError::invalid(
                "iblt",
                format!("expected {} cell bytes, found {}", 20 * m, r.remaining()),
            ));
        }
        let mut t = Iblt::new(m, k, seed).map_err(|e| DecodeError::invalid("iblt", e.to_string()))?;
        for c in t.cells.iter_mut() {
            *c = IbltCell {
                count: r.i32()?,
                key_sum: r.u64()?,
                hash_sum: r.u64()?,
            };
        }
        r.finish()?;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(cells: usize) -> Iblt {
        Iblt::new(cells, 4, 99).unwrap()
    }

    #[test]
    fn insert_then_erase_is_empty() {
        let mut t = table(16);
        t.insert(123);
        t.erase(123);
        assert_eq!(t, table(16));
        assert!(t.is_empty());
    }

    #[test]
    fn single_insert_touches_k_cells_one_per_partition() {
        let mut t = table(16);
        t.insert(77);
        let touched: Vec<usize> = (0..16).filter(|&i| !t.cells[i].is_empty()).collect();
        assert_eq!(touched.len(), 4);
        for (j, &i) in touched.iter().enumerate() {
            assert_eq!(i / 4, j);
            assert_eq!(t.cells[i].count, 1);
            assert_eq!(t.cells[i].key_sum, 77);
        }
    }

    #[test]
    fn peel_recovers_small_set() {
        let t = Iblt::from_keys(12, 4, 5, [5, 9, 13]).unwrap();
        let diff = t.subtract(&table_with_seed(12, 5)).unwrap();
        let res = diff.peel().unwrap();
        assert_eq!(res.positive, BTreeSet::from([5, 9, 13]));
        assert!(res.negative.is_empty());
    }

    fn table_with_seed(cells: usize, seed: u64) -> Iblt {
        Iblt::new(cells, 4, seed).unwrap()
    }

    #[test]
    fn peel_edge_cases() {
        assert_eq!(table(8).peel().unwrap(), PeelResult::default());
        let mut t = table(8);
        t.insert(42);
        assert_eq!(t.peel().unwrap().positive, BTreeSet::from([42]));
    }

    #[test]
    fn subtraction_cancels_common_keys() {
        let base = Iblt::from_keys(40, 4, 1, 0..100).unwrap();
        assert!(base.subtract(&base).unwrap().is_empty());
        let mut plus = base.clone();
        plus.insert(1_000_000);
        let d = plus.subtract(&base).unwrap();
        assert_eq!(d.peel().unwrap().positive, BTreeSet::from([1_000_000]));
        let other = Iblt::new(40, 4, 2).unwrap();
        assert_eq!(base.subtract(&other), Err(IbltError::Incompatible));
    }

    #[test]
    fn forty_differences_with_hedge_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let common: Vec<u64> = (0..500).map(|_| rng.random()).collect();
        let a_only: BTreeSet<u64> = (0..20).map(|_| rng.random()).collect();
        let b_only: BTreeSet<u64> = (0..20).map(|_| rng.random()).collect();
        let m = 80; // ceil(2.0 * 40) rounded to a multiple of 4
        let ta = Iblt::from_keys(m, 4, 3, common.iter().chain(&a_only).copied()).unwrap();
        let tb = Iblt::from_keys(m, 4, 3, common.iter().chain(&b_only).copied()).unwrap();
        let res = ta.subtract(&tb).unwrap().peel().unwrap();
        assert_eq!(res.positive, a_only);
        assert_eq!(res.negative, b_only);
    }

    #[test]
    fn undersized_table_fails_to_peel() {
        let t = Iblt::from_keys(8, 4, 0, 0..50).unwrap();
        assert!(matches!(t.peel(), Err(IbltError::PeelFailed { .. })));
    }

    #[test]
    fn encoding_layout_and_size() {
        let t = Iblt::from_keys(8, 4, 0xabcd, [1, 2, 3]).unwrap();
        let bytes = t.encode();
        assert_eq!(bytes.len(), Iblt::encoded_len(8));
        assert_eq!(&bytes[..4], &[0, 0, 0, 8]);
        assert_eq!(bytes[4], 4);
        assert_eq!(Iblt::decode(&bytes).unwrap(), t);
        assert!(Iblt::decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn geometry_validation() {
        assert!(Iblt::new(10, 4, 0).is_err());
        assert!(Iblt::new(0, 4, 0).is_err());
        assert!(Iblt::new(8, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn matched_insert_erase_interleavings_cancel(keys in proptest::collection::vec(any::<u64>(), 0..40), order in any::<u64>()) {
            let mut t = table(32);
            let mut ops: Vec<(u64, bool)> = keys.iter().flat_map(|&k| [(k, true), (k, false)]).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(order);
            for i in (1..ops.len()).rev() {
                ops.swap(i, rng.random_range(0..=i));
            }
            for (k, ins) in ops {
                if ins { t.insert(k) } else { t.erase(k) }
            }
            prop_assert!(t.is_empty());
        }

        #[test]
        fn successful_peel_matches_oracle(
            common in proptest::collection::btree_set(any::<u64>(), 0..200),
            a_only in proptest::collection::btree_set(any::<u64>(), 0..15),
            b_only in proptest::collection::btree_set(any::<u64>(), 0..15),
        ) {
            let a: BTreeSet<u64> = common.union(&a_only).copied().collect();
            let b: BTreeSet<u64> = common.union(&b_only).copied().collect();
            let ta = Iblt::from_keys(64, 4, 11, a.iter().copied()).unwrap();
            let tb = Iblt::from_keys(64, 4, 11, b.iter().copied()).unwrap();
            let count_sum: i32 = ta.cells().iter().map(|c| c.count).sum();
            prop_assert_eq!(count_sum as usize, a.len() * 4);
            if let Ok(res) = ta.subtract(&tb).unwrap().peel() {
                let oracle_a: BTreeSet<u64> = a.difference(&b).copied().collect();
                let oracle_b: BTreeSet<u64> = b.difference(&a).copied().collect();
                prop_assert_eq!(res.positive, oracle_a);
                prop_assert_eq!(res.negative, oracle_b);
            }
        }
    }
}
