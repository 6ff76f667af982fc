use rand::Rng;

use super::PolyError;
use crate::field::PrimeModulus;

/// Dense univariate polynomial, coefficients from low to high degree.
/// The zero polynomial has no coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UniPoly {
    modulus: PrimeModulus,
    coeffs: Vec<u64>,
}

impl UniPoly {
    pub fn new(modulus: PrimeModulus, coeffs: Vec<u64>) -> Self {
        let mut p = UniPoly {
            modulus,
            coeffs: coeffs.into_iter().map(|c| modulus.reduce(c)).collect(),
        };
        p.trim();
        p
    }

    pub fn zero(modulus: PrimeModulus) -> Self {
        UniPoly {
            modulus,
            coeffs: Vec::new(),
        }
    }

    pub fn constant(modulus: PrimeModulus, c: u64) -> Self {
        Self::new(modulus, vec![c])
    }

    /// t^k
    pub fn monomial(modulus: PrimeModulus, k: usize) -> Self {
        let mut c = vec![0; k + 1];
        c[k] = 1;
        UniPoly { modulus, coeffs: c }
    }

    /// t - r
    pub fn linear_root(modulus: PrimeModulus, r: u64) -> Self {
        Self::new(modulus, vec![modulus.neg(modulus.reduce(r)), 1])
    }

    fn trim(&mut self) {
        while self.coeffs.last() == Some(&0) {
            self.coeffs.pop();
        }
    }

    pub fn modulus(&self) -> PrimeModulus {
        self.modulus
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn lead(&self) -> u64 {
        self.coeffs.last().copied().unwrap_or(0)
    }

    pub fn is_one(&self) -> bool {
        self.coeffs == [1]
    }

    pub fn eval(&self, t: u64) -> u64 {
        let f = self.modulus;
        self.coeffs
            .iter()
            .rev()
            .fold(0, |acc, &c| f.mul_add(c, acc, t))
    }

    pub fn add(&self, other: &UniPoly) -> UniPoly {
        let f = self.modulus;
        let n = self.coeffs.len().max(other.coeffs.len());
        let c = (0..n)
            .map(|i| {
                f.add(
                    self.coeffs.get(i).copied().unwrap_or(0),
                    other.coeffs.get(i).copied().unwrap_or(0),
                )
            })
            .collect();
        Self::new(f, c)
    }

    pub fn sub(&self, other: &UniPoly) -> UniPoly {
        self.add(&other.scale(self.modulus.neg(1)))
    }

    pub fn scale(&self, c: u64) -> UniPoly {
        let f = self.modulus;
        Self::new(f, self.coeffs.iter().map(|&a| f.mul(a, c)).collect())
    }

    pub fn mul(&self, other: &UniPoly) -> UniPoly {
        if self.is_zero() || other.is_zero() {
            return Self::zero(self.modulus);
        }
        let f = self.modulus;
        let mut c = vec![0u64; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in other.coeffs.iter().enumerate() {
                c[i + j] = f.mul_add(c[i + j], a, b);
            }
        }
        Self::new(f, c)
    }

    /// Quotient and remainder; panics on a zero divisor.
    pub fn divrem(&self, d: &UniPoly) -> (UniPoly, UniPoly) {
        let f = self.modulus;
        let dd = d.degree().expect("division by the zero polynomial");
        let inv = f.inv(d.lead()).expect("nonzero leading coefficient");
        let mut r = self.coeffs.clone();
        if r.len() <= dd {
            return (Self::zero(f), self.clone());
        }
        let mut q = vec![0u64; r.len() - dd];
        for i in (0..q.len()).rev() {
            let c = f.mul(r[i + dd], inv);
            q[i] = c;
            if c == 0 {
                continue;
            }
            let neg = f.neg(c);
            for (j, &dc) in d.coeffs.iter().enumerate() {
                r[i + j] = f.mul_add(r[i + j], neg, dc);
            }
        }
        r.truncate(dd);
        (Self::new(f, q), Self::new(f, r))
    }

    pub fn rem(&self, d: &UniPoly) -> UniPoly {
        self.divrem(d).1
    }

    pub fn monic(&self) -> UniPoly {
        if self.is_zero() {
            return self.clone();
        }
        let inv = self.modulus.inv(self.lead()).expect("nonzero");
        self.scale(inv)
    }

    /// Monic greatest common divisor.
    pub fn gcd(&self, other: &UniPoly) -> UniPoly {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let r = a.rem(&b);
            a = b;
            b = r;
        }
        a.monic()
    }

    pub fn derivative(&self) -> UniPoly {
        let f = self.modulus;
        let c = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &a)| f.mul(a, f.from_usize(i)))
            .collect();
        Self::new(f, c)
    }

    pub fn mul_mod(&self, other: &UniPoly, m: &UniPoly) -> UniPoly {
        self.mul(other).rem(m)
    }

    /// self^e mod m
    pub fn pow_mod(&self, mut e: u64, m: &UniPoly) -> UniPoly {
        let mut base = self.rem(m);
        let mut acc = Self::constant(self.modulus, 1).rem(m);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul_mod(&base, m);
            }
            base = base.mul_mod(&base, m);
            e >>= 1;
        }
        acc
    }

    /// True iff gcd(q, q') is constant.
    pub fn is_squarefree(&self) -> bool {
        assert!(!self.is_zero(), "square-freeness of the zero polynomial");
        self.gcd(&self.derivative()).degree() == Some(0)
    }

    /// The unique polynomial of degree below `points.len()` through the samples.
    pub fn interpolate(modulus: PrimeModulus, points: &[(u64, u64)]) -> Result<UniPoly, PolyError> {
        let f = modulus;
        let ts: Vec<u64> = points.iter().map(|&(t, _)| f.reduce(t)).collect();
        for i in 0..ts.len() {
            if ts[..i].contains(&ts[i]) {
                return Err(PolyError::DuplicateNode(ts[i]));
            }
        }
        let mut master = UniPoly::constant(f, 1);
        for &t in &ts {
            master = master.mul(&UniPoly::linear_root(f, t));
        }
        let mut acc = vec![0u64; ts.len()];
        for (i, &(_, v)) in points.iter().enumerate() {
            let (basis, _) = master.divrem(&UniPoly::linear_root(f, ts[i]));
            let denom = basis.eval(ts[i]);
            let c = f.mul(f.reduce(v), f.inv(denom).expect("distinct nodes"));
            for (a, &b) in acc.iter_mut().zip(basis.coeffs()) {
                *a = f.mul_add(*a, c, b);
            }
        }
        Ok(UniPoly::new(f, acc))
    }

    /// Irreducible factors with multiplicities; the product of the output
    /// equals the monic normalization of `self`.
    pub fn factor<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<(UniPoly, usize)> {
        assert!(!self.is_zero(), "factoring the zero polynomial");
        let f = self.modulus;
        let deg = self.degree().unwrap();
        assert!((deg as u64) < f.p(), "degree must stay below the characteristic");
        let mut out = Vec::new();
        for (part, mult) in self.monic().squarefree_decomposition() {
            for (g, d) in part.distinct_degree() {
                for h in g.equal_degree(d, rng) {
                    out.push((h, mult));
                }
            }
        }
        out.sort_by(|a, b| (a.0.degree(), &a.0.coeffs).cmp(&(b.0.degree(), &b.0.coeffs)));
        out
    }

    /// Yun's algorithm; valid because degrees stay below p.
    fn squarefree_decomposition(&self) -> Vec<(UniPoly, usize)> {
        let mut out = Vec::new();
        if self.degree() == Some(0) {
            return out;
        }
        let d = self.derivative();
        let a0 = self.gcd(&d);
        let mut b = self.divrem(&a0).0;
        let c = d.divrem(&a0).0;
        let mut dd = c.sub(&b.derivative());
        let mut i = 1;
        while b.degree() != Some(0) {
            let a = b.gcd(&dd);
            let nb = b.divrem(&a).0;
            let nc = dd.divrem(&a).0;
            if a.degree() != Some(0) {
                out.push((a, i));
            }
            dd = nc.sub(&nb.derivative());
            b = nb;
            i += 1;
        }
        out
    }

    /// Splits a monic square-free polynomial into products of irreducibles of
    /// equal degree.
    fn distinct_degree(&self) -> Vec<(UniPoly, usize)> {
        let f = self.modulus;
        let mut out = Vec::new();
        let mut g = self.clone();
        let x = UniPoly::monomial(f, 1);
        let mut h = x.rem(&g);
        let mut i = 1;
        while g.degree().unwrap_or(0) >= 2 * i {
            h = h.pow_mod(f.p(), &g);
            let common = g.gcd(&h.sub(&x));
            if common.degree() != Some(0) {
                g = g.divrem(&common).0;
                h = h.rem(&g);
                out.push((common, i));
            }
            i += 1;
        }
        if g.degree().unwrap_or(0) > 0 {
            let d = g.degree().unwrap();
            out.push((g, d));
        }
        out
    }

    /// Cantor-Zassenhaus splitting of a product of degree-`d` irreducibles.
    fn equal_degree<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Vec<UniPoly> {
        let f = self.modulus;
        let n = self.degree().unwrap();
        if n == d {
            return vec![self.clone()];
        }
        loop {
            let a = UniPoly::new(f, f.random_vec(rng, n));
            if a.degree().unwrap_or(0) == 0 {
                continue;
            }
            // a^((p^d - 1)/2) = (a * a^p * ... * a^(p^(d-1)))^((p-1)/2)
            let mut t = a.rem(self);
            let mut norm = t.clone();
            for _ in 1..d {
                t = t.pow_mod(f.p(), self);
                norm = norm.mul_mod(&t, self);
            }
            let b = norm.pow_mod((f.p() - 1) / 2, self);
            let split = self.gcd(&b.sub(&UniPoly::constant(f, 1)));
            let sd = split.degree().unwrap_or(0);
            if sd > 0 && sd < n {
                let rest = self.divrem(&split).0;
                let mut out = split.equal_degree(d, rng);
                out.extend(rest.equal_degree(d, rng));
                return out;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::seeded_rng;

    fn p7() -> PrimeModulus {
        PrimeModulus::new(7).unwrap()
    }

    fn product(f: PrimeModulus, factors: &[(UniPoly, usize)]) -> UniPoly {
        let mut acc = UniPoly::constant(f, 1);
        for (g, m) in factors {
            for _ in 0..*m {
                acc = acc.mul(g);
            }
        }
        acc
    }

    /// Irreducibility by brute force: no monic factor of degree <= n/2 divides.
    fn brute_irreducible(g: &UniPoly) -> bool {
        let f = g.modulus();
        let n = g.degree().unwrap();
        let p = f.p();
        for d in 1..=n / 2 {
            let total = p.pow(d as u32);
            for code in 0..total {
                let mut c = Vec::with_capacity(d + 1);
                let mut x = code;
                for _ in 0..d {
                    c.push(x % p);
                    x /= p;
                }
                c.push(1);
                if g.rem(&UniPoly::new(f, c)).is_zero() {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn interpolation_small_cases() {
        let f = PrimeModulus::default();
        let p = UniPoly::interpolate(f, &[(0, 1), (1, 1)]).unwrap();
        assert_eq!(p.coeffs(), &[1]);
        let p = UniPoly::interpolate(f, &[(0, 0), (1, 1), (2, 4)]).unwrap();
        assert_eq!(p.coeffs(), &[0, 0, 1]);
        assert_eq!(
            UniPoly::interpolate(f, &[(3, 1), (3, 2)]),
            Err(PolyError::DuplicateNode(3))
        );
    }

    #[test]
    fn interpolation_round_trip() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(7);
        let p = UniPoly::new(f, f.random_vec(&mut rng, 7));
        let pts: Vec<(u64, u64)> = (0..7)
            .map(|_| {
                let t = f.random(&mut rng);
                (t, p.eval(t))
            })
            .collect();
        assert_eq!(UniPoly::interpolate(f, &pts).unwrap(), p);
    }

    #[test]
    fn squarefree_small_cases() {
        let f = p7();
        let one = UniPoly::linear_root(f, 1);
        assert!(!one.mul(&one).is_squarefree());
        assert!(UniPoly::linear_root(f, 0).mul(&one).is_squarefree());
    }

    #[test]
    fn factor_small_cases() {
        let f = p7();
        let mut rng = seeded_rng(1);
        let q = UniPoly::new(f, vec![6, 0, 1]);
        let fac = q.factor(&mut rng);
        assert_eq!(
            fac,
            vec![
                (UniPoly::linear_root(f, 6), 1),
                (UniPoly::linear_root(f, 1), 1)
            ]
        );
        let q = UniPoly::new(f, vec![1, 0, 1]);
        assert_eq!(q.factor(&mut rng), vec![(q.clone(), 1)]);
    }

    #[test]
    fn factor_planted_irreducibles_small_field() {
        let f = PrimeModulus::new(31).unwrap();
        let mut rng = seeded_rng(3);
        for _ in 0..5 {
            let mut planted = Vec::new();
            while planted.len() < 5 {
                let d = rng.gen_range(1..=4);
                let mut c = f.random_vec(&mut rng, d);
                c.push(1);
                let g = UniPoly::new(f, c);
                if brute_irreducible(&g) {
                    planted.push(g);
                }
            }
            let q = planted.iter().fold(UniPoly::constant(f, 1), |a, g| a.mul(g));
            let got = q.factor(&mut rng);
            let mut got_flat: Vec<UniPoly> = Vec::new();
            for (g, m) in &got {
                assert!(brute_irreducible(g));
                for _ in 0..*m {
                    got_flat.push(g.clone());
                }
            }
            let key = |g: &UniPoly| (g.degree(), g.coeffs().to_vec());
            let mut a: Vec<_> = planted.iter().map(key).collect();
            let mut b: Vec<_> = got_flat.iter().map(key).collect();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn factor_large_field_reassembles() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(4);
        for _ in 0..5 {
            let a = UniPoly::new(f, {
                let mut c = f.random_vec(&mut rng, 6);
                c.push(1);
                c
            });
            let b = UniPoly::linear_root(f, 42);
            let q = a.mul(&b).mul(&b).scale(3);
            let fac = q.factor(&mut rng);
            assert_eq!(product(f, &fac), q.monic());
            assert!(fac.contains(&(b.clone(), 2)));
        }
    }

    #[test]
    fn divrem_reconstructs() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(5);
        let a = UniPoly::new(f, f.random_vec(&mut rng, 9));
        let b = UniPoly::new(f, f.random_vec(&mut rng, 4));
        let (q, r) = a.divrem(&b);
        assert!(r.degree().unwrap_or(0) < b.degree().unwrap());
        assert_eq!(q.mul(&b).add(&r), a);
    }
}
