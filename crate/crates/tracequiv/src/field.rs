//! Prime field arithmetic.
//!
//! Hot loops work on raw `u64` residues through the methods of
//! [`PrimeModulus`]; [`Scalar`] pairs a residue with its modulus for code
//! that wants checked, self-describing values.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// 2^61 - 1. Reduction modulo this prime has a shift-and-add fast path.
pub const DEFAULT_PRIME: u64 = (1 << 61) - 1;

/// The generator threaded through every randomized routine.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("operands belong to different moduli ({0} and {1})")]
    ModulusMismatch(u64, u64),
    #[error("{0} is not a quadratic residue")]
    NoRoot(u64),
    #[error("{0} is not an odd prime below 2^63")]
    NotPrime(String),
    #[error("modulus {p} is too small for width {w} and length {d}: need p > (w^2 d)^5")]
    ModulusTooSmall { p: u64, w: usize, d: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PrimeModulus {
    p: u64,
}

impl Default for PrimeModulus {
    fn default() -> Self {
        PrimeModulus { p: DEFAULT_PRIME }
    }
}

impl fmt::Display for PrimeModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.p)
    }
}

impl PrimeModulus {
    pub fn new(p: u64) -> Result<Self, FieldError> {
        if p < 3 || p >= 1 << 63 || !is_prime_u64(p) {
            return Err(FieldError::NotPrime(p.to_string()));
        }
        Ok(PrimeModulus { p })
    }

    /// Parses a decimal string, as stored in instance files.
    pub fn parse(s: &str) -> Result<Self, FieldError> {
        let p: u64 = s
            .trim()
            .parse()
            .map_err(|_| FieldError::NotPrime(s.to_string()))?;
        Self::new(p)
    }

    #[inline]
    pub fn p(self) -> u64 {
        self.p
    }

    /// Whether p exceeds (w^2 d)^5, the characteristic bound the randomized
    /// subroutines are analysed under.
    pub fn supports(self, w: usize, d: usize) -> bool {
        let base = (w as u128) * (w as u128) * (d as u128);
        let mut bound: u128 = 1;
        for _ in 0..5 {
            bound = bound.saturating_mul(base);
        }
        (self.p as u128) > bound
    }

    pub fn check_shape(self, w: usize, d: usize) -> Result<(), FieldError> {
        if self.supports(w, d) {
            Ok(())
        } else {
            Err(FieldError::ModulusTooSmall { p: self.p, w, d })
        }
    }

    #[inline]
    pub fn reduce(self, x: u64) -> u64 {
        if x >= self.p {
            x % self.p
        } else {
            x
        }
    }

    #[inline]
    fn reduce_wide(self, x: u128) -> u64 {
        if self.p == DEFAULT_PRIME {
            let lo = (x as u64) & DEFAULT_PRIME;
            let hi = (x >> 61) as u64;
            let s = lo + hi;
            let s = (s & DEFAULT_PRIME) + (s >> 61);
            if s >= DEFAULT_PRIME {
                s - DEFAULT_PRIME
            } else {
                s
            }
        } else {
            (x % self.p as u128) as u64
        }
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    #[inline]
    pub fn neg(self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.p - a
        }
    }

    #[inline]
    pub fn mul(self, a: u64, b: u64) -> u64 {
        self.reduce_wide(a as u128 * b as u128)
    }

    /// a + b*c
    #[inline]
    pub fn mul_add(self, a: u64, b: u64, c: u64) -> u64 {
        self.add(a, self.mul(b, c))
    }

    pub fn pow(self, mut a: u64, mut e: u64) -> u64 {
        let mut acc = 1 % self.p;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, a);
            }
            a = self.mul(a, a);
            e >>= 1;
        }
        acc
    }

    /// Inverse via the extended Euclidean algorithm.
    pub fn inv(self, a: u64) -> Option<u64> {
        let a = self.reduce(a);
        if a == 0 {
            return None;
        }
        let (mut r0, mut r1) = (self.p as i128, a as i128);
        let (mut t0, mut t1) = (0i128, 1i128);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (t0, t1) = (t1, t0 - q * t1);
        }
        debug_assert_eq!(r0, 1);
        Some(t0.rem_euclid(self.p as i128) as u64)
    }

    pub fn div(self, a: u64, b: u64) -> Option<u64> {
        self.inv(b).map(|bi| self.mul(a, bi))
    }

    pub fn from_i64(self, v: i64) -> u64 {
        v.rem_euclid(self.p as i64) as u64
    }

    /// Embeds a small natural number.
    pub fn from_usize(self, v: usize) -> u64 {
        self.reduce(v as u64)
    }

    pub fn is_square(self, a: u64) -> bool {
        let a = self.reduce(a);
        a == 0 || self.pow(a, (self.p - 1) / 2) == 1
    }

    /// Tonelli-Shanks. Returns `None` exactly when `a` is a non-residue.
    pub fn sqrt(self, a: u64) -> Option<u64> {
        let a = self.reduce(a);
        if a == 0 {
            return Some(0);
        }
        if !self.is_square(a) {
            return None;
        }
        let p = self.p;
        if p % 4 == 3 {
            return Some(self.pow(a, (p + 1) / 4));
        }
        let mut q = p - 1;
        let mut s = 0u32;
        while q % 2 == 0 {
            q /= 2;
            s += 1;
        }
        let mut z = 2u64;
        while self.is_square(z) {
            z += 1;
        }
        let mut m = s;
        let mut c = self.pow(z, q);
        let mut t = self.pow(a, q);
        let mut r = self.pow(a, (q + 1) / 2);
        while t != 1 {
            let mut i = 0u32;
            let mut t2 = t;
            while t2 != 1 {
                t2 = self.mul(t2, t2);
                i += 1;
            }
            let mut b = c;
            for _ in 0..(m - i - 1) {
                b = self.mul(b, b);
            }
            m = i;
            c = self.mul(b, b);
            t = self.mul(t, c);
            r = self.mul(r, b);
        }
        Some(r)
    }

    #[inline]
    pub fn random<R: Rng + ?Sized>(self, rng: &mut R) -> u64 {
        rng.gen_range(0..self.p)
    }

    pub fn random_nonzero<R: Rng + ?Sized>(self, rng: &mut R) -> u64 {
        rng.gen_range(1..self.p)
    }

    pub fn random_vec<R: Rng + ?Sized>(self, rng: &mut R, len: usize) -> Vec<u64> {
        (0..len).map(|_| self.random(rng)).collect()
    }

    pub fn elem(self, v: u64) -> Scalar {
        Scalar {
            value: self.reduce(v),
            modulus: self,
        }
    }

    pub fn zero(self) -> Scalar {
        self.elem(0)
    }

    pub fn one(self) -> Scalar {
        self.elem(1)
    }

    /// `count` independent uniform residues.
    pub fn sample_uniform<R: Rng + ?Sized>(self, rng: &mut R, count: usize) -> Vec<Scalar> {
        (0..count).map(|_| self.elem(self.random(rng))).collect()
    }
}

fn mulmod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn powmod_u64(mut a: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    a %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mulmod_u64(acc, a, m);
        }
        a = mulmod_u64(a, a, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &q in &WITNESSES {
        if n % q == 0 {
            return n == q;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'outer: for &a in &WITNESSES {
        let mut x = powmod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod_u64(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// A residue together with its modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Scalar {
    value: u64,
    modulus: PrimeModulus,
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Scalar {
    pub fn new(value: u64, modulus: PrimeModulus) -> Self {
        modulus.elem(value)
    }

    #[inline]
    pub fn value(self) -> u64 {
        self.value
    }

    #[inline]
    pub fn modulus(self) -> PrimeModulus {
        self.modulus
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    fn same_modulus(self, other: Scalar) -> Result<PrimeModulus, FieldError> {
        if self.modulus != other.modulus {
            Err(FieldError::ModulusMismatch(self.modulus.p, other.modulus.p))
        } else {
            Ok(self.modulus)
        }
    }

    pub fn checked_add(self, other: Scalar) -> Result<Scalar, FieldError> {
        let m = self.same_modulus(other)?;
        Ok(m.elem(m.add(self.value, other.value)))
    }

    pub fn checked_sub(self, other: Scalar) -> Result<Scalar, FieldError> {
        let m = self.same_modulus(other)?;
        Ok(m.elem(m.sub(self.value, other.value)))
    }

    pub fn checked_mul(self, other: Scalar) -> Result<Scalar, FieldError> {
        let m = self.same_modulus(other)?;
        Ok(m.elem(m.mul(self.value, other.value)))
    }

    pub fn checked_div(self, other: Scalar) -> Result<Scalar, FieldError> {
        let m = self.same_modulus(other)?;
        m.div(self.value, other.value)
            .map(|v| m.elem(v))
            .ok_or(FieldError::DivisionByZero)
    }

    pub fn inv(self) -> Result<Scalar, FieldError> {
        self.modulus
            .inv(self.value)
            .map(|v| self.modulus.elem(v))
            .ok_or(FieldError::DivisionByZero)
    }

    pub fn pow(self, e: u64) -> Scalar {
        self.modulus.elem(self.modulus.pow(self.value, e))
    }

    pub fn sqrt(self) -> Result<Scalar, FieldError> {
        self.modulus
            .sqrt(self.value)
            .map(|v| self.modulus.elem(v))
            .ok_or(FieldError::NoRoot(self.value))
    }
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        debug_assert_eq!(self.modulus, rhs.modulus);
        self.modulus.elem(self.modulus.add(self.value, rhs.value))
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        debug_assert_eq!(self.modulus, rhs.modulus);
        self.modulus.elem(self.modulus.sub(self.value, rhs.value))
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        debug_assert_eq!(self.modulus, rhs.modulus);
        self.modulus.elem(self.modulus.mul(self.value, rhs.value))
    }
}

impl Div for Scalar {
    type Output = Scalar;
    /// Panics on a zero divisor; use [`Scalar::checked_div`] otherwise.
    fn div(self, rhs: Scalar) -> Scalar {
        self.checked_div(rhs).expect("division by zero")
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        self.modulus.elem(self.modulus.neg(self.value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(p: u64) -> PrimeModulus {
        PrimeModulus::new(p).unwrap()
    }

    fn egcd_inverse(a: i128, m: i128) -> i128 {
        // brute-force reference: extended gcd written out independently
        let (mut old_r, mut r) = (a, m);
        let (mut old_s, mut s) = (1i128, 0i128);
        while r != 0 {
            let q = old_r / r;
            let tmp = old_r - q * r;
            old_r = r;
            r = tmp;
            let tmp = old_s - q * s;
            old_s = s;
            s = tmp;
        }
        old_s.rem_euclid(m)
    }

    #[test]
    fn add_wraps_to_zero() {
        let f = small(7);
        assert_eq!((f.elem(3) + f.elem(4)).value(), 0);
    }

    #[test]
    fn one_over_one() {
        let f = PrimeModulus::default();
        assert_eq!((f.one() / f.one()).value(), 1);
    }

    #[test]
    fn inverse_matches_extended_gcd() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(11);
        for _ in 0..100 {
            let a = f.random_nonzero(&mut rng);
            let reference = egcd_inverse(a as i128, f.p() as i128) as u64;
            let inv = f.elem(a).inv().unwrap();
            assert_eq!(inv.value(), reference);
            assert_eq!((f.elem(a) * inv).value(), 1);
        }
    }

    #[test]
    fn checked_ops_report_errors() {
        let f = small(7);
        let g = small(11);
        assert_eq!(
            f.elem(1).checked_div(f.zero()),
            Err(FieldError::DivisionByZero)
        );
        assert_eq!(
            f.elem(1).checked_add(g.elem(1)),
            Err(FieldError::ModulusMismatch(7, 11))
        );
    }

    #[test]
    fn sqrt_small_cases() {
        let f = small(7);
        let r = f.elem(2).sqrt().unwrap().value();
        assert!(r == 3 || r == 4);
        assert_eq!(f.zero().sqrt().unwrap().value(), 0);
        assert_eq!(f.elem(6).sqrt(), Err(FieldError::NoRoot(6)));
    }

    #[test]
    fn sqrt_with_large_two_adicity() {
        // 2^16 * 3 * 5 + 1 has a deep 2-Sylow subgroup, exercising the loop.
        let f = small(65537);
        let mut rng = seeded_rng(3);
        for _ in 0..200 {
            let a = f.random(&mut rng);
            let sq = f.mul(a, a);
            let r = f.sqrt(sq).unwrap();
            assert_eq!(f.mul(r, r), sq);
        }
        let g = PrimeModulus::default();
        for _ in 0..200 {
            let a = g.random(&mut rng);
            let sq = g.mul(a, a);
            let r = g.sqrt(sq).unwrap();
            assert_eq!(g.mul(r, r), sq);
        }
    }

    #[test]
    fn mersenne_reduction_matches_generic() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(5);
        for _ in 0..10_000 {
            let a = f.random(&mut rng);
            let b = f.random(&mut rng);
            let expect = ((a as u128 * b as u128) % f.p() as u128) as u64;
            assert_eq!(f.mul(a, b), expect);
        }
        assert_eq!(f.mul(f.p() - 1, f.p() - 1), 1);
    }

    #[test]
    fn sampling_is_deterministic() {
        let f = PrimeModulus::default();
        let a = f.sample_uniform(&mut seeded_rng(9), 20);
        let b = f.sample_uniform(&mut seeded_rng(9), 20);
        assert_eq!(a, b);
        assert!(f.sample_uniform(&mut seeded_rng(9), 0).is_empty());
    }

    #[test]
    fn sampling_is_uniform_chi_square() {
        // 16 buckets over the top bits; the statistic has 15 degrees of freedom,
        // mean 15 and standard deviation sqrt(30).
        let f = PrimeModulus::default();
        let draws = f.sample_uniform(&mut seeded_rng(21), 10_000);
        let mut buckets = [0usize; 16];
        for s in &draws {
            let b = ((s.value() as u128 * 16) / f.p() as u128) as usize;
            buckets[b] += 1;
        }
        let expected = 10_000.0 / 16.0;
        let chi: f64 = buckets
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi < 15.0 + 3.0 * 30f64.sqrt(), "chi-square {chi}");
    }

    #[test]
    fn primality() {
        assert!(PrimeModulus::new(DEFAULT_PRIME).is_ok());
        assert!(PrimeModulus::new(2305843009213693953).is_err());
        assert!(PrimeModulus::new(9).is_err());
        assert!(PrimeModulus::new(2).is_err());
        assert!(PrimeModulus::parse("1000000007").is_ok());
        assert!(PrimeModulus::parse("12x").is_err());
    }

    #[test]
    fn shape_bound() {
        let f = PrimeModulus::default();
        assert!(f.supports(3, 6));
        assert!(!small(7).supports(2, 3));
        assert!(small(7).check_shape(2, 3).is_err());
    }
}
