//! Cuckoo filter with partial-key cuckoo hashing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::hash::{hash64, tag};
use crate::par::{self, Execution};
use crate::wire::{DecodeError, Reader, Writer};

/// Largest accepted `log_buckets`, bounding allocation on decode.
const MAX_LOG_BUCKETS: u8 = 40;

/// Target load factor used when sizing a filter for `n` keys.
pub const TARGET_LOAD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CuckooError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("filter full after {inserted} insertions")]
    Full { inserted: usize },
}

#[derive(Debug, Clone)]
pub struct CuckooFilter {
    log_buckets: u8,
    bucket_size: u8,
    fingerprint_bits: u8,
    seed: u64,
    max_kicks: u32,
    slots: Vec<u32>,
    occupancy: usize,
    // fingerprint displaced by a failed insertion; still answers lookups
    victim: Option<(usize, u32)>,
    rng: ChaCha8Rng,
}

impl PartialEq for CuckooFilter {
    fn eq(&self, other: &Self) -> bool {
        self.log_buckets == other.log_buckets
            && self.bucket_size == other.bucket_size
            && self.fingerprint_bits == other.fingerprint_bits
            && self.seed == other.seed
            && self.slots == other.slots
            && self.victim == other.victim
    }
}

/// `ceil(log2(n / (bucket_size * 0.8)))`, clamped at zero.
pub fn log_buckets_for(n: usize, bucket_size: u8) -> u8 {
    // 2^L * b * 0.8 >= n  <=>  2^L * 4b >= 5n
    let need = 5 * n as u128;
    let per = 4 * bucket_size.max(1) as u128;
    let mut log = 0u8;
    while (per << log) < need {
        log += 1;
    }
    log
}

impl CuckooFilter {
    pub fn new(
        log_buckets: u8,
        bucket_size: u8,
        fingerprint_bits: u8,
        seed: u64,
        max_kicks: u32,
    ) -> Result<Self, CuckooError> {
        if !(4..=32).contains(&fingerprint_bits) {
            return Err(CuckooError::Geometry(format!(
                "fingerprint bits {fingerprint_bits} outside [4, 32]"
            )));
        }
        if bucket_size == 0 {
            return Err(CuckooError::Geometry("bucket size must be positive".into()));
        }
        if log_buckets > MAX_LOG_BUCKETS {
            return Err(CuckooError::Geometry(format!(
                "log_buckets {log_buckets} exceeds {MAX_LOG_BUCKETS}"
            )));
        }
        let slots = (1usize << log_buckets) * bucket_size as usize;
        Ok(CuckooFilter {
            log_buckets,
            bucket_size,
            fingerprint_bits,
            seed,
            max_kicks,
            slots: vec![0; slots],
            occupancy: 0,
            victim: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// A filter sized for `n` keys at no more than 80% load.
    pub fn with_capacity_for(
        n: usize,
        bucket_size: u8,
        fingerprint_bits: u8,
        seed: u64,
        max_kicks: u32,
    ) -> Result<Self, CuckooError> {
        Self::new(
            log_buckets_for(n, bucket_size),
            bucket_size,
            fingerprint_bits,
            seed,
            max_kicks,
        )
    }

    /// Builds a filter for `keys`, failing if any insertion fails.
    pub fn build(
        keys: &[u64],
        bucket_size: u8,
        fingerprint_bits: u8,
        seed: u64,
        max_kicks: u32,
    ) -> Result<Self, CuckooError> {
        let mut f = Self::with_capacity_for(keys.len(), bucket_size, fingerprint_bits, seed, max_kicks)?;
        for (i, &k) in keys.iter().enumerate() {
            if !f.insert(k) {
                return Err(CuckooError::Full { inserted: i });
            }
        }
        Ok(f)
    }

    pub fn log_buckets(&self) -> u8 {
        self.log_buckets
    }

    pub fn bucket_size(&self) -> u8 {
        self.bucket_size
    }

    pub fn fingerprint_bits(&self) -> u8 {
        self.fingerprint_bits
    }

    pub fn num_buckets(&self) -> usize {
        1 << self.log_buckets
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn occupancy(&self) -> usize {
        self.occupancy
    }

    pub fn load_factor(&self) -> f64 {
        self.occupancy as f64 / self.capacity() as f64
    }

    fn mask(&self) -> u64 {
        (1u64 << self.log_buckets) - 1
    }

    /// Nonzero fingerprint of `key`.
    pub fn fingerprint(&self, key: u64) -> u32 {
        let fp_mask = (1u64 << self.fingerprint_bits) - 1;
        match hash64(key, self.seed ^ tag::CUCKOO_FP) & fp_mask {
            0 => 1,
            fp => fp as u32,
        }
    }

    pub fn primary_index(&self, key: u64) -> usize {
        (hash64(key, self.seed ^ tag::CUCKOO_INDEX) & self.mask()) as usize
    }

    /// The partner bucket; an involution for fixed `fp`.
    pub fn alt_index(&self, index: usize, fp: u32) -> usize {
        index ^ (hash64(fp as u64, self.seed ^ tag::CUCKOO_ALT) & self.mask()) as usize
    }

    fn bucket(&self, i: usize) -> &[u32] {
        let b = self.bucket_size as usize;
        &self.slots[i * b..(i + 1) * b]
    }

    fn try_place(&mut self, i: usize, fp: u32) -> bool {
        let b = self.bucket_size as usize;
        match self.slots[i * b..(i + 1) * b].iter_mut().find(|s| **s == 0) {
            Some(slot) => {
                *slot = fp;
                self.occupancy += 1;
                true
            }
            None => false,
        }
    }

    /// Returns false once the filter is effectively full.
    pub fn insert(&mut self, key: u64) -> bool {
        if self.victim.is_some() {
            return false;
        }
        let fp = self.fingerprint(key);
        let i1 = self.primary_index(key);
        let i2 = self.alt_index(i1, fp);
        if self.try_place(i1, fp) || self.try_place(i2, fp) {
            return true;
        }
        let b = self.bucket_size as usize;
        let mut i = if self.rng.random::<bool>() { i1 } else { i2 };
        let mut carried = fp;
        for _ in 0..self.max_kicks {
            let slot = i * b + self.rng.random_range(0..b);
            std::mem::swap(&mut self.slots[slot], &mut carried);
            i = self.alt_index(i, carried);
            if self.try_place(i, carried) {
                return true;
            }
        }
        self.victim = Some((i, carried));
        false
    }

    pub fn contains(&self, key: u64) -> bool {
        let fp = self.fingerprint(key);
        let i1 = self.primary_index(key);
        let i2 = self.alt_index(i1, fp);
        self.bucket(i1).contains(&fp)
            || self.bucket(i2).contains(&fp)
            || self
                .victim
                .is_some_and(|(vi, vfp)| vfp == fp && (vi == i1 || vi == i2))
    }

    /// Bytes produced by [`CuckooFilter::encode`] for the given geometry.
    pub fn encoded_len(log_buckets: u8, bucket_size: u8, fingerprint_bits: u8) -> usize {
        let bits = (1usize << log_buckets) * bucket_size as usize * fingerprint_bits as usize;
        11 + bits.div_ceil(8)
    }

    /// Header `log_buckets: u8, bucket_size: u8, fingerprint_bits: u8,
    /// seed: u64 (big-endian)`, then every slot in bucket order packed
    /// least-significant bit first and zero-padded to a byte boundary.
    pub fn encode(&self) -> Vec<u8> {
        let f = self.fingerprint_bits as usize;
        let len = Self::encoded_len(self.log_buckets, self.bucket_size, self.fingerprint_bits);
        let mut w = Writer::with_capacity(len);
        w.u8(self.log_buckets)
            .u8(self.bucket_size)
            .u8(self.fingerprint_bits)
            .u64(self.seed);
        let mut packed = vec![0u8; len - 11];
        for (s, &fp) in self.slots.iter().enumerate() {
            for j in 0..f {
                if (fp >> j) & 1 == 1 {
                    let bit = s * f + j;
                    packed[bit / 8] |= 1 << (bit % 8);
                }
            }
        }
        w.bytes(&packed);
        w.finish()
    }

    pub fn decode(buf: &[u8], max_kicks: u32) -> Result<Self, DecodeError> {
        let mut r = Reader::new(buf);
        let log_buckets = r.u8()?;
        let bucket_size = r.u8()?;
        let fingerprint_bits = r.u8()?;
        let seed = r.u64()?;
        let mut filter = Self::new(log_buckets, bucket_size, fingerprint_bits, seed, max_kicks)
            .map_err(|e| DecodeError::invalid("cuckoo", e.to_string()))?;
        let expected = Self::encoded_len(log_buckets, bucket_size, fingerprint_bits) - 11;
        if r.remaining() != expected {
            return Err(DecodeError::invalid(
                "cuckoo",
                format!("expected {expected} bucket bytes, found {}", r.remaining()),
            ));
        }
        let packed = r.bytes(expected)?;
        let f = fingerprint_bits as usize;
        for (s, slot) in filter.slots.iter_mut().enumerate() {
            let mut fp = 0u32;
            for j in 0..f {
                let bit = s * f + j;
                fp |= (((packed[bit / 8] >> (bit % 8)) & 1) as u32) << j;
            }
            *slot = fp;
        }
        r.finish()?;
        filter.occupancy = filter.slots.iter().filter(|&&s| s != 0).count();
        Ok(filter)
    }
}

/// Elements of `mine` the peer's filter says it lacks.
///
/// With no false negatives in the filter, this never reports an element the
/// peer holds; false positives can hide some true differences.
pub fn local_only(mine: &[u64], theirs: &CuckooFilter, exec: Execution) -> Vec<u64> {
    par::filter_copied(exec, mine, |&e| !theirs.contains(e))
}
