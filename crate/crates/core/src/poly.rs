//! Dense univariate polynomials over a prime field, rational-function
//! interpolation and root extraction.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::field::{Fp, Mersenne61, Modulus};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("operation is undefined for the zero polynomial")]
    ZeroPolynomial,
    #[error("polynomial does not split into distinct linear factors")]
    NotSplittable,
    #[error("interpolation system has no usable solution")]
    InterpolationFailed,
    #[error("need at least {needed} sample points, got {got}")]
    NotEnoughPoints { needed: usize, got: usize },
    #[error("sample points must be distinct")]
    DuplicateSamplePoint,
}

/// Coefficients lowest degree first, with no trailing zeros.
#[derive(Clone, PartialEq, Eq)]
pub struct Polynomial<M: Modulus = Mersenne61> {
    coeffs: Vec<Fp<M>>,
}

impl<M: Modulus> fmt::Debug for Polynomial<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.coeffs.iter().map(|c| c.value()))
            .finish()
    }
}

impl<M: Modulus> Polynomial<M> {
    pub fn new(mut coeffs: Vec<Fp<M>>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(Fp::ONE)
    }

    pub fn constant(c: Fp<M>) -> Self {
        Self::new(vec![c])
    }

    /// The monomial `z`.
    pub fn x() -> Self {
        Self::new(vec![Fp::ZERO, Fp::ONE])
    }

    /// `prod (z - r)` over the given roots.
    pub fn from_roots(roots: &[Fp<M>]) -> Self {
        let mut coeffs = Vec::with_capacity(roots.len() + 1);
        coeffs.push(Fp::ONE);
        for &r in roots {
            coeffs.push(Fp::ZERO);
            for i in (1..coeffs.len()).rev() {
                coeffs[i] = coeffs[i - 1] - r * coeffs[i];
            }
            coeffs[0] = -(r * coeffs[0]);
        }
        Self::new(coeffs)
    }

    pub fn coeffs(&self) -> &[Fp<M>] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> Option<Fp<M>> {
        self.coeffs.last().copied()
    }

    pub fn eval(&self, z: Fp<M>) -> Fp<M> {
        self.coeffs
            .iter()
            .rev()
            .fold(Fp::ZERO, |acc, &c| acc * z + c)
    }

    pub fn scale(&self, k: Fp<M>) -> Self {
        Self::new(self.coeffs.iter().map(|&c| c * k).collect())
    }

    /// Scales so the leading coefficient is one. The zero polynomial is
    /// returned unchanged.
    pub fn monic(&self) -> Self {
        match self.leading() {
            Some(lc) if lc != Fp::ONE => self.scale(lc.inv().expect("leading coefficient is nonzero")),
            _ => self.clone(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![Fp::ZERO; n];
        for (i, &c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, &c) in other.coeffs.iter().enumerate() {
            out[i] += c;
        }
        Self::new(out)
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![Fp::ZERO; n];
        for (i, &c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, &c) in other.coeffs.iter().enumerate() {
            out[i] -= c;
        }
        Self::new(out)
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![Fp::ZERO; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    /// Quotient and remainder of long division.
    pub fn div_rem(&self, divisor: &Self) -> Result<(Self, Self), PolyError> {
        let dlen = divisor.coeffs.len();
        let lead_inv = divisor
            .leading()
            .ok_or(PolyError::ZeroPolynomial)?
            .inv()
            .expect("leading coefficient is nonzero");
        if self.coeffs.len() < dlen {
            return Ok((Self::zero(), self.clone()));
        }
        let mut rem = self.coeffs.clone();
        let mut quot = vec![Fp::ZERO; rem.len() - dlen + 1];
        for shift in (0..quot.len()).rev() {
            let top = rem[shift + dlen - 1];
            if top.is_zero() {
                continue;
            }
            let q = top * lead_inv;
            quot[shift] = q;
            for (k, &d) in divisor.coeffs.iter().enumerate() {
                rem[shift + k] -= q * d;
            }
        }
        rem.truncate(dlen - 1);
        Ok((Self::new(quot), Self::new(rem)))
    }

    pub fn rem(&self, divisor: &Self) -> Result<Self, PolyError> {
        self.div_rem(divisor).map(|(_, r)| r)
    }

    /// Monic greatest common divisor; `gcd(0, 0) = 0`.
    pub fn gcd(&self, other: &Self) -> Self {
        let mut a = self.clone();
        let mut b = other.clone();
        while !b.is_zero() {
            let r = a.rem(&b).expect("divisor is nonzero");
            a = b;
            b = r;
        }
        a.monic()
    }

    /// `self^exp mod modulus`.
    pub fn pow_mod(&self, mut exp: u64, modulus: &Self) -> Result<Self, PolyError> {
        let mut base = self.rem(modulus)?;
        let mut acc = Self::one().rem(modulus)?;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc.mul(&base).rem(modulus)?;
            }
            exp >>= 1;
            if exp > 0 {
                base = base.mul(&base).rem(modulus)?;
            }
        }
        Ok(acc)
    }
}

/// A reduced ratio `numerator / denominator` with monic denominator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalFn<M: Modulus = Mersenne61> {
    pub numerator: Polynomial<M>,
    pub denominator: Polynomial<M>,
}

impl<M: Modulus> RationalFn<M> {
    /// Cancels common factors and normalises the denominator to be monic.
    pub fn reduced(numerator: Polynomial<M>, denominator: Polynomial<M>) -> Result<Self, PolyError> {
        if denominator.is_zero() {
            return Err(PolyError::ZeroPolynomial);
        }
        let g = numerator.gcd(&denominator);
        let (num, _) = numerator.div_rem(&g)?;
        let (den, _) = denominator.div_rem(&g)?;
        let lc_inv = den.leading().expect("nonzero").inv().expect("nonzero");
        Ok(RationalFn {
            numerator: num.scale(lc_inv),
            denominator: den.scale(lc_inv),
        })
    }

    /// `None` where the denominator vanishes.
    pub fn eval(&self, z: Fp<M>) -> Option<Fp<M>> {
        let d = self.denominator.eval(z);
        d.inv().ok().map(|inv| self.numerator.eval(z) * inv)
    }
}

fn check_distinct<M: Modulus>(points: &[(Fp<M>, Fp<M>)]) -> Result<(), PolyError> {
    let mut zs: Vec<u64> = points.iter().map(|(z, _)| z.value()).collect();
    zs.sort_unstable();
    if zs.windows(2).any(|w| w[0] == w[1]) {
        return Err(PolyError::DuplicateSamplePoint);
    }
    Ok(())
}

/// Reduces `rows` (each `cols` wide, optionally followed by extra
/// right-hand-side columns) to reduced row echelon form in place and
/// returns the pivot column of each nonzero row.
///
/// Pivoting takes the first nonzero entry in the column.
fn row_reduce<M: Modulus>(rows: &mut [Vec<Fp<M>>], cols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows.len() {
            break;
        }
        let Some(found) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, found);
        let inv = rows[r][c].inv().expect("pivot is nonzero");
        for v in rows[r].iter_mut() {
            *v *= inv;
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[c];
            if factor.is_zero() {
                continue;
            }
            for (v, &p) in row.iter_mut().zip(&pivot_row).skip(c) {
                *v -= factor * p;
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

fn powers<M: Modulus>(z: Fp<M>, count: usize) -> Vec<Fp<M>> {
    let mut out = Vec::with_capacity(count);
    let mut acc = Fp::ONE;
    for _ in 0..count {
        out.push(acc);
        acc *= z;
    }
    out
}

/// Finds `P/Q` with `deg P <= deg_num`, `deg Q <= deg_den` agreeing with every
/// sample `(z, value)`, i.e. `P(z) = value * Q(z)`.
///
/// The samples define a homogeneous system in the `deg_num + deg_den + 2`
/// coefficients; any nonzero nullspace vector is taken and the result is
/// reduced to lowest terms with a monic denominator.
pub fn rational_interpolate<M: Modulus>(
    points: &[(Fp<M>, Fp<M>)],
    deg_num: usize,
    deg_den: usize,
) -> Result<RationalFn<M>, PolyError> {
    let needed = deg_num + deg_den + 1;
    if points.len() < needed {
        return Err(PolyError::NotEnoughPoints {
            needed,
            got: points.len(),
        });
    }
    check_distinct(points)?;
    let cols = deg_num + deg_den + 2;
    let mut rows: Vec<Vec<Fp<M>>> = points
        .iter()
        .map(|&(z, v)| {
            let zp = powers(z, deg_num.max(deg_den) + 1);
            let mut row = Vec::with_capacity(cols);
            row.extend_from_slice(&zp[..=deg_num]);
            row.extend(zp[..=deg_den].iter().map(|&p| -(v * p)));
            row
        })
        .collect();
    let pivots = row_reduce(&mut rows, cols);
    let free = (0..cols)
        .rev()
        .find(|c| !pivots.contains(c))
        .ok_or(PolyError::InterpolationFailed)?;
    let mut solution = vec![Fp::ZERO; cols];
    solution[free] = Fp::ONE;
    for (row, &p) in rows.iter().zip(&pivots) {
        solution[p] = -row[free];
    }
    let numerator = Polynomial::new(solution[..=deg_num].to_vec());
    let denominator = Polynomial::new(solution[deg_num + 1..].to_vec());
    if denominator.is_zero() {
        return Err(PolyError::InterpolationFailed);
    }
    RationalFn::reduced(numerator, denominator)
}

/// Like [`rational_interpolate`] but with both `P` and `Q` constrained monic
/// of exact degrees `deg_num` and `deg_den`, which needs one sample fewer.
///
/// This is the form CPI decoding uses: characteristic polynomials of the
/// difference sets are monic, so `m` samples determine up to `m` differences.
pub fn interpolate_monic<M: Modulus>(
    points: &[(Fp<M>, Fp<M>)],
    deg_num: usize,
    deg_den: usize,
) -> Result<RationalFn<M>, PolyError> {
    let unknowns = deg_num + deg_den;
    if points.len() < unknowns {
        return Err(PolyError::NotEnoughPoints {
            needed: unknowns,
            got: points.len(),
        });
    }
    check_distinct(points)?;
    let mut rows: Vec<Vec<Fp<M>>> = points
        .iter()
        .map(|&(z, v)| {
            let zp = powers(z, deg_num.max(deg_den) + 1);
            let mut row = Vec::with_capacity(unknowns + 1);
            row.extend_from_slice(&zp[..deg_num]);
            row.extend(zp[..deg_den].iter().map(|&p| -(v * p)));
            row.push(v * zp[deg_den] - zp[deg_num]);
            row
        })
        .collect();
    let pivots = row_reduce(&mut rows, unknowns);
    // a leftover nonzero right-hand side means the samples are inconsistent
    if rows[pivots.len()..].iter().any(|row| !row[unknowns].is_zero()) {
        return Err(PolyError::InterpolationFailed);
    }
    let mut solution = vec![Fp::ZERO; unknowns];
    for (row, &p) in rows.iter().zip(&pivots) {
        solution[p] = row[unknowns];
    }
    let mut num = solution[..deg_num].to_vec();
    num.push(Fp::ONE);
    let mut den = solution[deg_num..].to_vec();
    den.push(Fp::ONE);
    RationalFn::reduced(Polynomial::new(num), Polynomial::new(den))
}

/// Returns every root of `poly`, sorted by residue, provided it splits into
/// distinct linear factors over the field.
///
/// Uses a `gcd(f, z^p - z)` test followed by equal-degree splitting with
/// `(z + delta)^((p-1)/2) - 1` for pseudo-random `delta`.
pub fn find_roots<M: Modulus>(poly: &Polynomial<M>) -> Result<Vec<Fp<M>>, PolyError> {
    if poly.is_zero() {
        return Err(PolyError::ZeroPolynomial);
    }
    let f = poly.monic();
    let degree = f.degree().unwrap_or(0);
    if degree == 0 {
        return Ok(Vec::new());
    }
    let xp = Polynomial::x().pow_mod(M::P, &f)?;
    let split_part = f.gcd(&xp.sub(&Polynomial::x()));
    if split_part.degree() != Some(degree) {
        return Err(PolyError::NotSplittable);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed0f_2007);
    let mut roots = Vec::with_capacity(degree);
    split_distinct_linear(f.clone(), &mut rng, &mut roots)?;
    roots.sort_unstable();
    if roots.windows(2).any(|w| w[0] == w[1]) || Polynomial::from_roots(&roots) != f {
        return Err(PolyError::NotSplittable);
    }
    Ok(roots)
}

fn split_distinct_linear<M: Modulus>(
    f: Polynomial<M>,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Fp<M>>,
) -> Result<(), PolyError> {
    match f.degree() {
        None => return Err(PolyError::ZeroPolynomial),
        Some(0) => return Ok(()),
        Some(1) => {
            // monic: z + c0
            out.push(-f.coeffs()[0]);
            return Ok(());
        }
        Some(_) => {}
    }
    let half = (M::P - 1) / 2;
    // Each attempt separates a given pair of roots with probability about 1/2.
    for _ in 0..256 {
        let delta = Fp::new(rng.random_range(0..M::P));
        let shifted = Polynomial::new(vec![delta, Fp::ONE]);
        let h = shifted.pow_mod(half, &f)?.sub(&Polynomial::one());
        let g = f.gcd(&h);
        let gd = g.degree().unwrap_or(0);
        if gd > 0 && Some(gd) < f.degree() {
            let (cofactor, _) = f.div_rem(&g)?;
            split_distinct_linear(g, rng, out)?;
            return split_distinct_linear(cofactor.monic(), rng, out);
        }
    }
    Err(PolyError::NotSplittable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Fe;
    use proptest::prelude::*;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    struct P97;
    impl Modulus for P97 {
        const P: u64 = 97;
    }

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    struct P103;
    impl Modulus for P103 {
        const P: u64 = 103;
    }

    fn p<M: Modulus>(cs: &[u64]) -> Polynomial<M> {
        Polynomial::new(cs.iter().map(|&c| Fp::new(c)).collect())
    }

    #[test]
    fn canonical_form_trims_trailing_zeros() {
        let q: Polynomial = p(&[1, 2, 0, 0]);
        assert_eq!(q.degree(), Some(1));
        assert!(p::<Mersenne61>(&[0, 0]).is_zero());
        assert_eq!(Polynomial::<Mersenne61>::zero().degree(), None);
    }

    #[test]
    fn from_roots_expands_correctly() {
        // (z-2)(z-3) = z^2 - 5z + 6
        let q = Polynomial::<P97>::from_roots(&[Fp::new(2), Fp::new(3)]);
        assert_eq!(q, p(&[6, 97 - 5, 1]));
        assert_eq!(Polynomial::<P97>::from_roots(&[]), Polynomial::one());
    }

    #[test]
    fn div_rem_reconstructs_dividend() {
        let a: Polynomial<P97> = p(&[5, 0, 3, 7, 1]);
        let b: Polynomial<P97> = p(&[2, 9, 4]);
        let (q, r) = a.div_rem(&b).unwrap();
        assert!(r.degree() < b.degree());
        assert_eq!(q.mul(&b).add(&r), a);
    }

    #[test]
    fn linear_root() {
        let q: Polynomial = Polynomial::from_roots(&[Fe::new(4)]);
        assert_eq!(find_roots(&q).unwrap(), vec![Fe::new(4)]);
    }

    #[test]
    fn cubic_over_97_matches_exhaustive_search() {
        let q = Polynomial::<P97>::from_roots(&[Fp::new(2), Fp::new(9), Fp::new(30)]);
        let brute: Vec<Fp<P97>> = (0..97)
            .map(Fp::new)
            .filter(|&z| q.eval(z).is_zero())
            .collect();
        assert_eq!(brute, vec![Fp::new(2), Fp::new(9), Fp::new(30)]);
        assert_eq!(find_roots(&q).unwrap(), brute);
        // a non-monic scalar multiple has the same roots
        assert_eq!(find_roots(&q.scale(Fp::new(5))).unwrap(), brute);
    }

    #[test]
    fn sum_of_squares_does_not_split_when_minus_one_is_a_nonresidue() {
        // 103 = 3 (mod 4), so -1 is a quadratic non-residue
        let q: Polynomial<P103> = p(&[1, 0, 1]);
        assert!((0..103).all(|z| !q.eval(Fp::new(z)).is_zero()));
        assert_eq!(find_roots(&q), Err(PolyError::NotSplittable));
        // 2^61 - 1 is also 3 (mod 4)
        let big: Polynomial = p(&[1, 0, 1]);
        assert_eq!(find_roots(&big), Err(PolyError::NotSplittable));
    }

    #[test]
    fn repeated_root_is_rejected() {
        let q = Polynomial::<P97>::from_roots(&[Fp::new(5), Fp::new(5), Fp::new(8)]);
        assert_eq!(find_roots(&q), Err(PolyError::NotSplittable));
    }

    #[test]
    fn zero_polynomial_has_no_root_set() {
        assert_eq!(
            find_roots(&Polynomial::<P97>::zero()),
            Err(PolyError::ZeroPolynomial)
        );
        assert_eq!(find_roots(&p::<P97>(&[7])).unwrap(), vec![]);
    }

    #[test]
    fn interpolate_constant_one() {
        let pts: Vec<(Fe, Fe)> = (1..=3).map(|z| (Fe::new(z), Fe::ONE)).collect();
        let rf = rational_interpolate(&pts[..1], 0, 0).unwrap();
        assert_eq!(rf.numerator, Polynomial::one());
        assert_eq!(rf.denominator, Polynomial::one());
        let rf = rational_interpolate(&pts, 1, 1).unwrap();
        assert_eq!(rf.numerator, Polynomial::one());
        assert_eq!(rf.denominator, Polynomial::one());
    }

    #[test]
    fn interpolate_linear_ratio_recovers_both_roots() {
        let (a, b) = (Fe::new(1234), Fe::new(987_654_321));
        let pts: Vec<(Fe, Fe)> = (0..3)
            .map(|i| {
                let z = Fe::new(10_000 + i);
                (z, (z - a) * (z - b).inv().unwrap())
            })
            .collect();
        let rf = rational_interpolate(&pts, 1, 1).unwrap();
        assert_eq!(find_roots(&rf.numerator).unwrap(), vec![a]);
        assert_eq!(find_roots(&rf.denominator).unwrap(), vec![b]);
    }

    #[test]
    fn interpolate_rejects_too_few_points() {
        let pts: Vec<(Fe, Fe)> = (0..3).map(|i| (Fe::new(i), Fe::new(2 * i))).collect();
        assert_eq!(
            rational_interpolate(&pts, 2, 1),
            Err(PolyError::NotEnoughPoints { needed: 4, got: 3 })
        );
        let dup = [(Fe::new(1), Fe::ONE), (Fe::new(1), Fe::ONE)];
        assert_eq!(
            rational_interpolate(&dup, 0, 1),
            Err(PolyError::DuplicateSamplePoint)
        );
    }

    #[test]
    fn monic_interpolation_needs_one_point_per_unknown() {
        let num_roots = [Fe::new(3), Fe::new(77)];
        let den_roots = [Fe::new(5)];
        let pn = Polynomial::from_roots(&num_roots);
        let pd = Polynomial::from_roots(&den_roots);
        let pts: Vec<(Fe, Fe)> = (0..3)
            .map(|i| {
                let z = Fe::new(1_000 + i);
                (z, pn.eval(z) * pd.eval(z).inv().unwrap())
            })
            .collect();
        let rf = interpolate_monic(&pts, 2, 1).unwrap();
        assert_eq!(rf.numerator, pn);
        assert_eq!(rf.denominator, pd);
        // over-provisioned degrees still reduce to the same function
        let more: Vec<(Fe, Fe)> = (0..7)
            .map(|i| {
                let z = Fe::new(2_000 + i);
                (z, pn.eval(z) * pd.eval(z).inv().unwrap())
            })
            .collect();
        let rf = interpolate_monic(&more, 4, 3).unwrap();
        assert_eq!(rf.numerator, pn);
        assert_eq!(rf.denominator, pd);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn find_roots_inverts_expansion(mut roots in proptest::collection::btree_set(0u64..crate::field::MODULUS, 0..64)) {
            let roots: Vec<Fe> = std::mem::take(&mut roots).into_iter().map(Fe::new).collect();
            let q = Polynomial::from_roots(&roots);
            prop_assert_eq!(find_roots(&q).unwrap(), roots);
        }

        #[test]
        fn interpolation_reproduces_source_at_fresh_points(
            num in proptest::collection::btree_set(0u64..1_000_000, 0..6),
            den in proptest::collection::btree_set(1_000_000u64..2_000_000, 0..6),
        ) {
            let pn = Polynomial::from_roots(&num.iter().map(|&x| Fe::new(x)).collect::<Vec<_>>());
            let pd = Polynomial::from_roots(&den.iter().map(|&x| Fe::new(x)).collect::<Vec<_>>());
            let (dn, dd) = (num.len(), den.len());
            let pts: Vec<(Fe, Fe)> = (0..(dn + dd + 1) as u64)
                .map(|i| {
                    let z = Fe::new(5_000_000 + i);
                    (z, pn.eval(z) * pd.eval(z).inv().unwrap())
                })
                .collect();
            let rf = rational_interpolate(&pts, dn, dd).unwrap();
            for i in 0..16u64 {
                let z = Fe::new(9_000_000 + 17 * i);
                prop_assert_eq!(rf.eval(z).unwrap(), pn.eval(z) * pd.eval(z).inv().unwrap());
            }
        }
    }
}
