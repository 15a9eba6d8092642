//! Prime-field arithmetic.
//!
//! The library-wide field is `GF(2^61 - 1)`. Elements are generic over a
//! [`Modulus`] so the polynomial machinery can be exercised over small
//! primes where exhaustive checks are possible.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::marker::PhantomData;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use thiserror::Error;

/// An odd prime modulus below `2^63`.
pub trait Modulus: Copy + Eq + fmt::Debug + Send + Sync + 'static {
    const P: u64;

    /// Reduces a product of two canonical residues.
    #[inline]
    fn reduce_wide(x: u128) -> u64 {
        (x % Self::P as u128) as u64
    }
}

/// The Mersenne prime `2^61 - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mersenne61;

impl Modulus for Mersenne61 {
    const P: u64 = (1 << 61) - 1;

    #[inline]
    fn reduce_wide(x: u128) -> u64 {
        // x < 2^122, so two folds bring it below 2p.
        let p = Self::P as u128;
        let folded = (x & p) + (x >> 61);
        let folded = ((folded & p) + (folded >> 61)) as u64;
        if folded >= Self::P {
            folded - Self::P
        } else {
            folded
        }
    }
}

/// The modulus used by CPI sync.
pub const MODULUS: u64 = Mersenne61::P;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
}

/// A residue modulo `M::P`, always kept canonical (`< P`).
pub struct Fp<M: Modulus = Mersenne61>(u64, PhantomData<M>);

/// Element of `GF(2^61 - 1)`.
pub type Fe = Fp<Mersenne61>;

impl<M: Modulus> Fp<M> {
    pub const ZERO: Self = Fp(0, PhantomData);
    pub const ONE: Self = Fp(1, PhantomData);

    /// Reduces an arbitrary 64-bit value into the field.
    #[inline]
    pub fn new(value: u64) -> Self {
        Fp(value % M::P, PhantomData)
    }

    /// The canonical residue in `[0, P)`.
    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let mut base = self;
        let mut acc = Self::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc *= base;
            }
            base *= base;
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(self) -> Result<Self, FieldError> {
        if self.is_zero() {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.pow(M::P - 2))
    }
}

impl<M: Modulus> Clone for Fp<M> {
    #[inline]
    fn clone(&self) -> Self {
        *self
    }
}

impl<M: Modulus> Copy for Fp<M> {}

impl<M: Modulus> PartialEq for Fp<M> {
    #[inline]
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

impl<M: Modulus> Eq for Fp<M> {}

impl<M: Modulus> PartialOrd for Fp<M> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<M: Modulus> Ord for Fp<M> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.cmp(&other.0)
    }
}

impl<M: Modulus> Hash for Fp<M> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash(state)
    }
}

impl<M: Modulus> Default for Fp<M> {
    fn default() -> Self {
        Self::ZERO
    }
}

impl<M: Modulus> fmt::Debug for Fp<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fp({})", self.0)
    }
}

impl<M: Modulus> fmt::Display for Fp<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl<M: Modulus> From<u64> for Fp<M> {
    fn from(value: u64) -> Self {
        Self::new(value)
    }
}

impl<M: Modulus> Add for Fp<M> {
    type Output = Self;

    #[inline]
    fn add(self, rhs: Self) -> Self {
        // Both operands are below 2^63, so the sum cannot overflow.
        let s = self.0 + rhs.0;
        Fp(if s >= M::P { s - M::P } else { s }, PhantomData)
    }
}

impl<M: Modulus> Sub for Fp<M> {
    type Output = Self;

    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let d = if self.0 >= rhs.0 {
            self.0 - rhs.0
        } else {
            self.0 + M::P - rhs.0
        };
        Fp(d, PhantomData)
    }
}

impl<M: Modulus> Neg for Fp<M> {
    type Output = Self;

    #[inline]
    fn neg(self) -> Self {
        Self::ZERO - self
    }
}

impl<M: Modulus> Mul for Fp<M> {
    type Output = Self;

    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Fp(M::reduce_wide(self.0 as u128 * rhs.0 as u128), PhantomData)
    }
}

impl<M: Modulus> AddAssign for Fp<M> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<M: Modulus> SubAssign for Fp<M> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<M: Modulus> MulAssign for Fp<M> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<M: Modulus> std::iter::Product for Fp<M> {
    fn product<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ONE, |acc, x| acc * x)
    }
}

impl<M: Modulus> std::iter::Sum for Fp<M> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |acc, x| acc + x)
    }
}

/// Evaluates the characteristic polynomial `prod (z - x)` of a set at `z`.
///
/// Elements are reduced into the field first. The empty product is one.
pub fn char_poly_eval<M: Modulus>(set: impl IntoIterator<Item = u64>, z: Fp<M>) -> Fp<M> {
    set.into_iter().map(|x| z - Fp::new(x)).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    struct P97;
    impl Modulus for P97 {
        const P: u64 = 97;
    }

    fn fe(x: u64) -> Fe {
        Fe::new(x)
    }

    #[test]
    fn add_wraps_at_modulus() {
        assert_eq!(fe(MODULUS - 1) + fe(1), Fe::ZERO);
        assert_eq!(fe(0) - fe(1), fe(MODULUS - 1));
    }

    #[test]
    fn mul_of_two_pow_60_by_four() {
        // 2^62 = 2 * 2^61 = 2 * (p + 1) == 2 (mod p)
        let expected = ((1u128 << 62) % MODULUS as u128) as u64;
        assert_eq!(expected, 2);
        assert_eq!(fe(1 << 60) * fe(4), fe(2));
    }

    #[test]
    fn mersenne_reduction_matches_generic_remainder() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let a = rng.random_range(0..MODULUS);
            let b = rng.random_range(0..MODULUS);
            let wide = a as u128 * b as u128;
            assert_eq!(
                Mersenne61::reduce_wide(wide),
                (wide % MODULUS as u128) as u64
            );
        }
        let top = (MODULUS - 1) as u128;
        assert_eq!(
            Mersenne61::reduce_wide(top * top),
            ((top * top) % MODULUS as u128) as u64
        );
    }

    #[test]
    fn inverse_of_zero_is_an_error() {
        assert_eq!(Fe::ZERO.inv(), Err(FieldError::ZeroInverse));
        assert_eq!(fe(12345).inv().unwrap() * fe(12345), Fe::ONE);
    }

    #[test]
    fn field_axioms_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xF1E1D);
        for _ in 0..10_000 {
            let a = fe(rng.random());
            let b = fe(rng.random());
            let c = fe(rng.random());
            assert_eq!((a + b) + c, a + (b + c));
            assert_eq!((a * b) * c, a * (b * c));
            assert_eq!(a + b, b + a);
            assert_eq!(a * b, b * a);
            assert_eq!(a * (b + c), a * b + a * c);
            assert_eq!(a - a, Fe::ZERO);
            assert_eq!(a * Fe::ONE, a);
            if !a.is_zero() {
                assert_eq!(a * a.inv().unwrap(), Fe::ONE);
            }
        }
    }

    #[test]
    fn char_poly_eval_cases() {
        assert_eq!(char_poly_eval(std::iter::empty(), fe(99)), Fe::ONE);
        assert_eq!(char_poly_eval([42], fe(42)), Fe::ZERO);
        assert_eq!(
            char_poly_eval::<P97>([3, 5], Fp::new(7)),
            Fp::<P97>::new(8)
        );
        // 3 - 5 over 97 wraps: (3-3)(3-5) = 0, (4-3)(4-5) = -1 = 96
        assert_eq!(char_poly_eval::<P97>([3, 5], Fp::new(4)).value(), 96);
    }
}
