use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use crate::field::PrimeModulus;
use crate::linalg::MatrixFp;

pub type Exponent = Vec<u32>;

/// Sparse multivariate polynomial keyed by exponent vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiPoly {
    modulus: PrimeModulus,
    nvars: usize,
    terms: BTreeMap<Exponent, u64>,
}

impl MultiPoly {
    pub fn zero(modulus: PrimeModulus, nvars: usize) -> Self {
        MultiPoly {
            modulus,
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(modulus: PrimeModulus, nvars: usize, c: u64) -> Self {
        let mut p = Self::zero(modulus, nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn var(modulus: PrimeModulus, nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(modulus, nvars);
        p.add_term(e, 1);
        p
    }

    /// sum_i coeffs[i] x_i + constant
    pub fn linear(modulus: PrimeModulus, coeffs: &[u64], constant: u64) -> Self {
        let n = coeffs.len();
        let mut p = Self::constant(modulus, n, constant);
        for (i, &c) in coeffs.iter().enumerate() {
            let mut e = vec![0; n];
            e[i] = 1;
            p.add_term(e, c);
        }
        p
    }

    pub fn from_terms(
        modulus: PrimeModulus,
        nvars: usize,
        terms: impl IntoIterator<Item = (Exponent, u64)>,
    ) -> Self {
        let mut p = Self::zero(modulus, nvars);
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent length");
            p.add_term(e, c);
        }
        p
    }

    pub fn modulus(&self) -> PrimeModulus {
        self.modulus
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, u64)> {
        self.terms.iter().map(|(e, &c)| (e, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, e: &[u32]) -> u64 {
        self.terms.get(e).copied().unwrap_or(0)
    }

    pub fn add_term(&mut self, e: Exponent, c: u64) {
        let f = self.modulus;
        let c = f.reduce(c);
        if c == 0 {
            return;
        }
        match self.terms.entry(e) {
            Entry::Occupied(mut o) => {
                let v = f.add(*o.get(), c);
                if v == 0 {
                    o.remove();
                } else {
                    *o.get_mut() = v;
                }
            }
            Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    pub fn total_degree(&self) -> Option<usize> {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&x| x as usize).sum())
            .max()
    }

    pub fn is_homogeneous(&self) -> bool {
        let mut degs = self.terms.keys().map(|e| e.iter().sum::<u32>());
        match degs.next() {
            None => true,
            Some(d) => degs.all(|x| x == d),
        }
    }

    pub fn homogeneous_component(&self, k: usize) -> MultiPoly {
        let terms = self
            .terms
            .iter()
            .filter(|(e, _)| e.iter().sum::<u32>() as usize == k)
            .map(|(e, &c)| (e.clone(), c));
        Self::from_terms(self.modulus, self.nvars, terms)
    }

    pub fn add(&self, other: &MultiPoly) -> MultiPoly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (e, &c) in &other.terms {
            out.add_term(e.clone(), c);
        }
        out
    }

    pub fn scale(&self, c: u64) -> MultiPoly {
        let f = self.modulus;
        let terms = self.terms.iter().map(|(e, &v)| (e.clone(), f.mul(v, c)));
        Self::from_terms(f, self.nvars, terms)
    }

    pub fn neg(&self) -> MultiPoly {
        self.scale(self.modulus.neg(1))
    }

    pub fn sub(&self, other: &MultiPoly) -> MultiPoly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &MultiPoly) -> MultiPoly {
        assert_eq!(self.nvars, other.nvars);
        let f = self.modulus;
        let mut out = Self::zero(f, self.nvars);
        for (ea, &a) in &self.terms {
            for (eb, &b) in &other.terms {
                let e = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                out.add_term(e, f.mul(a, b));
            }
        }
        out
    }

    pub fn pow(&self, k: usize) -> MultiPoly {
        let mut acc = Self::constant(self.modulus, self.nvars, 1);
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn eval(&self, x: &[u64]) -> u64 {
        assert_eq!(x.len(), self.nvars, "arity");
        let f = self.modulus;
        let mut acc = 0;
        for (e, &c) in &self.terms {
            let mut t = c;
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    t = f.mul(t, f.pow(x[i], k as u64));
                }
            }
            acc = f.add(acc, t);
        }
        acc
    }

    pub fn partial_derivative(&self, i: usize) -> MultiPoly {
        let f = self.modulus;
        let mut out = Self::zero(f, self.nvars);
        for (e, &c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut ne = e.clone();
            ne[i] -= 1;
            out.add_term(ne, f.mul(c, f.from_usize(e[i] as usize)));
        }
        out
    }

    /// g(y) = f(A y + shift); A has one row per variable of `self`.
    pub fn substitute_affine(&self, a: &MatrixFp, shift: Option<&[u64]>) -> MultiPoly {
        assert_eq!(a.rows(), self.nvars, "substitution rows");
        let f = self.modulus;
        let m = a.cols();
        let forms: Vec<MultiPoly> = (0..self.nvars)
            .map(|i| MultiPoly::linear(f, a.row(i), shift.map_or(0, |s| s[i])))
            .collect();
        let mut powers: Vec<Vec<MultiPoly>> = forms
            .iter()
            .map(|l| vec![MultiPoly::constant(f, m, 1), l.clone()])
            .collect();
        let mut out = Self::zero(f, m);
        for (e, &c) in &self.terms {
            let mut t = MultiPoly::constant(f, m, c);
            for (i, &k) in e.iter().enumerate() {
                while powers[i].len() <= k as usize {
                    let next = powers[i].last().unwrap().mul(&forms[i]);
                    powers[i].push(next);
                }
                if k > 0 {
                    t = t.mul(&powers[i][k as usize]);
                }
            }
            for (e, c) in t.terms {
                out.add_term(e, c);
            }
        }
        out
    }

    /// f(x + shift)
    pub fn shift(&self, shift: &[u64]) -> MultiPoly {
        let id = MatrixFp::identity(self.modulus, self.nvars);
        self.substitute_affine(&id, Some(shift))
    }

    /// Leading term in graded-lex order: highest total degree, then the
    /// lexicographically greatest exponent vector.
    pub fn leading_term(&self) -> Option<(&Exponent, u64)> {
        self.terms
            .iter()
            .max_by(|a, b| {
                let da: u32 = a.0.iter().sum();
                let db: u32 = b.0.iter().sum();
                da.cmp(&db).then_with(|| a.0.cmp(b.0))
            })
            .map(|(e, &c)| (e, c))
    }

    /// Scales so the graded-lex leading coefficient is 1.
    pub fn normalized(&self) -> MultiPoly {
        match self.leading_term() {
            None => self.clone(),
            Some((_, c)) => self.scale(self.modulus.inv(c).expect("nonzero")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::seeded_rng;

    #[test]
    fn arithmetic_and_eval_agree() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(2);
        let x = MultiPoly::var(f, 3, 0);
        let y = MultiPoly::var(f, 3, 1);
        let z = MultiPoly::var(f, 3, 2);
        let p = x.mul(&y).add(&z.pow(2)).sub(&MultiPoly::constant(f, 3, 5));
        for _ in 0..10 {
            let pt = f.random_vec(&mut rng, 3);
            let expect = f.sub(
                f.add(f.mul(pt[0], pt[1]), f.mul(pt[2], pt[2])),
                5,
            );
            assert_eq!(p.eval(&pt), expect);
        }
        assert!(p.sub(&p).is_zero());
        assert_eq!(p.total_degree(), Some(2));
        assert!(!p.is_homogeneous());
        assert_eq!(p.homogeneous_component(0), MultiPoly::constant(f, 3, f.neg(5)));
    }

    #[test]
    fn substitution_matches_pointwise() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(3);
        let x = MultiPoly::var(f, 2, 0);
        let y = MultiPoly::var(f, 2, 1);
        let p = x.pow(3).add(&x.mul(&y).scale(7));
        let a = MatrixFp::random(f, 2, 3, &mut rng);
        let s = f.random_vec(&mut rng, 2);
        let q = p.substitute_affine(&a, Some(&s));
        for _ in 0..10 {
            let pt = f.random_vec(&mut rng, 3);
            let mut inner = a.mul_vec(&pt);
            for (v, &c) in inner.iter_mut().zip(&s) {
                *v = f.add(*v, c);
            }
            assert_eq!(q.eval(&pt), p.eval(&inner));
        }
    }

    #[test]
    fn derivative_and_leading_term() {
        let f = PrimeModulus::default();
        let x = MultiPoly::var(f, 2, 0);
        let y = MultiPoly::var(f, 2, 1);
        let p = x.pow(2).mul(&y).scale(3).add(&y.pow(3).scale(2)).add(&x);
        assert_eq!(p.partial_derivative(0), x.mul(&y).scale(6).add(&MultiPoly::constant(f, 2, 1)));
        assert_eq!(p.leading_term(), Some((&vec![2, 1], 3)));
        assert_eq!(p.normalized().leading_term().unwrap().1, 1);
    }
}
