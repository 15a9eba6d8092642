//! Characteristic polynomial interpolation.
//!
//! A set `S` is represented by evaluations of `chi_S(z) = prod (z - x)` at
//! shared sample points. Dividing two parties' evaluations cancels the common
//! elements; interpolating the ratio and extracting roots of its numerator
//! and denominator yields the two one-sided differences.

use std::collections::BTreeSet;
use std::ops::Range;

use thiserror::Error;

use crate::field::{Fe, MODULUS};
use crate::par::{self, Execution};
use crate::poly::{find_roots, interpolate_monic};
use crate::wire::{DecodeError, Reader, Writer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CpiError {
    #[error("sketches disagree on dimensions: {0}")]
    Mismatch(String),
    #[error("difference bound exceeded: {0}")]
    BoundExceeded(&'static str),
}

/// The `i`-th shared sample point, `p - 1 - i`.
pub fn sample_point(i: usize) -> Fe {
    Fe::new(MODULUS - 1 - i as u64)
}

/// `chi_set` at sample points `range`.
pub fn evaluate_range(set: &[Fe], range: Range<usize>, exec: Execution) -> Vec<Fe> {
    let start = range.start;
    par::map_indexed(exec, range.len(), |i| {
        let z = sample_point(start + i);
        set.iter().map(|&x| z - x).product()
    })
}

/// Evaluations of a set's characteristic polynomial plus its size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpiSketch {
    pub mbar: u32,
    pub verification_points: u32,
    pub set_size: u64,
    /// `evaluations[i] = chi(sample_point(i))`, at least `mbar + verification_points` long.
    pub evaluations: Vec<Fe>,
}

impl CpiSketch {
    pub fn build(set: &[u64], mbar: u32, verification_points: u32, exec: Execution) -> Self {
        let reduced: Vec<Fe> = set.iter().map(|&x| Fe::new(x)).collect();
        let len = (mbar + verification_points) as usize;
        CpiSketch {
            mbar,
            verification_points,
            set_size: set.len() as u64,
            evaluations: evaluate_range(&reduced, 0..len, exec),
        }
    }

    pub fn len(&self) -> usize {
        (self.mbar + self.verification_points) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A run of evaluations starting at `first_index`, as carried in SKETCH
/// frames. The initial sketch starts at zero; retries append.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluationBlock {
    pub set_size: u64,
    pub mbar: u32,
    pub verification_points: u32,
    pub first_index: u32,
    pub values: Vec<Fe>,
}

impl EvaluationBlock {
    pub const HEADER_LEN: usize = 8 + 4 + 4 + 4 + 4;

    pub fn encoded_len(values: usize) -> usize {
        Self::HEADER_LEN + 8 * values
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(Self::encoded_len(self.values.len()));
        w.u64(self.set_size)
            .u32(self.mbar)
            .u32(self.verification_points)
            .u32(self.first_index)
            .u32(self.values.len() as u32);
        for v in &self.values {
            w.u64(v.value());
        }
        w.finish()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(buf);
        let set_size = r.u64()?;
        let mbar = r.u32()?;
        let verification_points = r.u32()?;
        let first_index = r.u32()?;
        let n = r.u32()? as usize;
        if r.remaining() != 8 * n {
            return Err(DecodeError::invalid(
                "cpi",
                format!("expected {} evaluation bytes, found {}", 8 * n, r.remaining()),
            ));
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let v = r.u64()?;
            if v >= MODULUS {
                return Err(DecodeError::invalid("cpi", "evaluation is not a field residue"));
            }
            values.push(Fe::new(v));
        }
        r.finish()?;
        Ok(EvaluationBlock {
            set_size,
            mbar,
            verification_points,
            first_index,
            values,
        })
    }
}

/// Differences recovered by [`reconcile`], as field residues.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CpiDiff {
    pub only_mine: Vec<Fe>,
    pub only_theirs: Vec<Fe>,
}

/// Recovers `(mine \ theirs, theirs \ mine)` when the symmetric difference
/// has at most `mbar` elements.
///
/// Interpolation uses the first `mbar` points; the following
/// `verification_points` must agree with the interpolant or the bound is
/// reported exceeded.
pub fn reconcile(mine: &CpiSketch, theirs: &CpiSketch) -> Result<CpiDiff, CpiError> {
    if mine.mbar != theirs.mbar || mine.verification_points != theirs.verification_points {
        return Err(CpiError::Mismatch(format!(
            "mbar {}/{} verification points {}/{}",
            mine.mbar, theirs.mbar, mine.verification_points, theirs.verification_points
        )));
    }
    let total = mine.len();
    if mine.evaluations.len() < total || theirs.evaluations.len() < total {
        return Err(CpiError::Mismatch("too few evaluations".into()));
    }
    let mbar = mine.mbar as i64;
    let delta = mine.set_size as i64 - theirs.set_size as i64;
    if delta.abs() > mbar {
        return Err(CpiError::BoundExceeded("set sizes differ by more than the bound"));
    }

    let mut samples = Vec::with_capacity(total);
    for i in 0..total {
        let inv = theirs.evaluations[i]
            .inv()
            .map_err(|_| CpiError::BoundExceeded("sample point collides with a set element"))?;
        samples.push((sample_point(i), mine.evaluations[i] * inv));
    }
    if delta == 0 && samples.iter().all(|&(_, r)| r == Fe::ONE) {
        return Ok(CpiDiff::default());
    }

    let degree_sum = if (mbar - delta).rem_euclid(2) == 0 { mbar } else { mbar - 1 };
    let deg_num = ((degree_sum + delta) / 2) as usize;
    let deg_den = ((degree_sum - delta) / 2) as usize;
    let (fit, check) = samples.split_at(mine.mbar as usize);
    let rf = interpolate_monic(fit, deg_num, deg_den)
        .map_err(|_| CpiError::BoundExceeded("interpolation failed"))?;
    for &(z, r) in check {
        if rf.eval(z) != Some(r) {
            return Err(CpiError::BoundExceeded("verification point mismatch"));
        }
    }
    let only_mine = find_roots(&rf.numerator)
        .map_err(|_| CpiError::BoundExceeded("numerator does not split"))?;
    let only_theirs = find_roots(&rf.denominator)
        .map_err(|_| CpiError::BoundExceeded("denominator does not split"))?;
    Ok(CpiDiff {
        only_mine,
        only_theirs,
    })
}

/// Incrementally maintained evaluations of a local set.
///
/// Added and removed elements are staged and folded into the cached values
/// the next time evaluations are requested.
#[derive(Debug, Clone, Default)]
pub struct EvalCache {
    values: Vec<Fe>,
    added: Vec<Fe>,
    removed: Vec<Fe>,
}

impl EvalCache {
    pub fn stage_add(&mut self, x: Fe) {
        if !self.values.is_empty() {
            self.added.push(x);
        }
    }

    pub fn stage_remove(&mut self, x: Fe) {
        if !self.values.is_empty() {
            self.removed.push(x);
        }
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }

    /// The first `count` evaluations of `set`, which must be the current
    /// local set (already including staged changes).
    pub fn evaluations(&mut self, set: &BTreeSet<u64>, count: usize, exec: Execution) -> &[Fe] {
        let added = std::mem::take(&mut self.added);
        let removed = std::mem::take(&mut self.removed);
        if !added.is_empty() || !removed.is_empty() {
            let singular = self.values.iter().enumerate().any(|(i, _)| {
                let z = sample_point(i);
                removed.contains(&z)
            });
            if singular {
                self.values.clear();
            } else {
                par::for_each_mut(exec, &mut self.values, |i, v| {
                    let z = sample_point(i);
                    let up: Fe = added.iter().map(|&x| z - x).product();
                    let down: Fe = removed.iter().map(|&x| z - x).product();
                    *v = *v * up * down.inv().expect("checked nonsingular");
                });
            }
        }
        if self.values.len() < count {
            let reduced: Vec<Fe> = set.iter().map(|&x| Fe::new(x)).collect();
            let fresh = evaluate_range(&reduced, self.values.len()..count, exec);
            self.values.extend(fresh);
        }
        &self.values[..count]
    }
}
