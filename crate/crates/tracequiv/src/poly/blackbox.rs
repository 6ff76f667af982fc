use std::fmt;
use std::sync::Arc;

use rand::Rng;

use super::{MultiPoly, PolyError};
use crate::field::{PrimeModulus, Scalar};
use crate::linalg::{MatrixFp, VectorFp};
use crate::trimm::TrimmShape;

type EvalFn = dyn Fn(&[u64]) -> u64 + Send + Sync;

/// How a blackbox produces its values.
#[derive(Clone)]
pub enum Rule {
    Explicit(Arc<MultiPoly>),
    /// inner(A x)
    Compose {
        inner: Arc<Blackbox>,
        matrix: Arc<MatrixFp>,
    },
    Trimm(TrimmShape),
    /// inner evaluated at `base` with the coordinates listed in `free`
    /// replaced by the query point.
    Restrict {
        inner: Arc<Blackbox>,
        free: Arc<Vec<usize>>,
        base: Arc<Vec<u64>>,
    },
    Custom(Arc<EvalFn>),
}

impl fmt::Debug for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Explicit(p) => write!(f, "Explicit({} terms)", p.num_terms()),
            Rule::Compose { inner, matrix } => {
                write!(f, "Compose({:?}, {}x{})", inner.rule, matrix.rows(), matrix.cols())
            }
            Rule::Trimm(s) => write!(f, "Trimm(w={}, d={})", s.w(), s.d()),
            Rule::Restrict { inner, free, .. } => {
                write!(f, "Restrict({:?}, {} free)", inner.rule, free.len())
            }
            Rule::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// A polynomial known only through evaluations, with a trusted degree bound.
#[derive(Clone, Debug)]
pub struct Blackbox {
    modulus: PrimeModulus,
    nvars: usize,
    degree: usize,
    rule: Rule,
}

impl Blackbox {
    pub fn explicit(p: MultiPoly) -> Self {
        Blackbox {
            modulus: p.modulus(),
            nvars: p.nvars(),
            degree: p.total_degree().unwrap_or(0),
            rule: Rule::Explicit(Arc::new(p)),
        }
    }

    pub fn trimm(modulus: PrimeModulus, shape: TrimmShape) -> Self {
        Blackbox {
            modulus,
            nvars: shape.n(),
            degree: shape.d(),
            rule: Rule::Trimm(shape),
        }
    }

    pub fn custom(
        modulus: PrimeModulus,
        nvars: usize,
        degree: usize,
        f: impl Fn(&[u64]) -> u64 + Send + Sync + 'static,
    ) -> Self {
        Blackbox {
            modulus,
            nvars,
            degree,
            rule: Rule::Custom(Arc::new(f)),
        }
    }

    /// y -> self(A y). Nested compositions collapse into one matrix.
    pub fn compose(&self, a: &MatrixFp) -> Blackbox {
        assert_eq!(a.rows(), self.nvars, "composition matrix rows");
        let (inner, matrix) = match &self.rule {
            Rule::Compose { inner, matrix } => (inner.clone(), matrix.mul(a)),
            _ => (Arc::new(self.clone()), a.clone()),
        };
        Blackbox {
            modulus: self.modulus,
            nvars: a.cols(),
            degree: self.degree,
            rule: Rule::Compose {
                inner,
                matrix: Arc::new(matrix),
            },
        }
    }

    /// Fixes every coordinate outside `free` to the value in `base`.
    pub fn restrict(&self, free: Vec<usize>, base: Vec<u64>) -> Blackbox {
        assert_eq!(base.len(), self.nvars, "restriction base length");
        assert!(free.iter().all(|&i| i < self.nvars));
        Blackbox {
            modulus: self.modulus,
            nvars: free.len(),
            degree: self.degree,
            rule: Rule::Restrict {
                inner: Arc::new(self.clone()),
                free: Arc::new(free),
                base: Arc::new(base),
            },
        }
    }

    pub fn modulus(&self) -> PrimeModulus {
        self.modulus
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn rule(&self) -> &Rule {
        &self.rule
    }

    pub fn eval(&self, x: &[u64]) -> u64 {
        assert_eq!(x.len(), self.nvars, "blackbox arity");
        match &self.rule {
            Rule::Explicit(p) => p.eval(x),
            Rule::Compose { inner, matrix } => inner.eval(&matrix.mul_vec(x)),
            Rule::Trimm(shape) => shape.eval(self.modulus, x),
            Rule::Restrict { inner, free, base } => inner.eval(&fill(base, free, x)),
            Rule::Custom(f) => self.modulus.reduce(f(x)),
        }
    }

    pub fn try_eval(&self, x: &VectorFp) -> Result<Scalar, PolyError> {
        if x.len() != self.nvars {
            return Err(PolyError::ArityMismatch {
                expected: self.nvars,
                got: x.len(),
            });
        }
        Ok(self.modulus.elem(self.eval(x)))
    }

    /// df/dx_i at `a`, from the univariate restriction along the i-th axis.
    pub fn partial_derivative_at(&self, i: usize, a: &[u64]) -> u64 {
        let weights = derivative_weights(self.modulus, self.degree);
        self.axis_derivative(i, a, self.eval(a), &weights)
    }

    fn axis_derivative(&self, i: usize, a: &[u64], fa: u64, weights: &[u64]) -> u64 {
        let f = self.modulus;
        let mut acc = f.mul(weights[0], fa);
        let mut pt = a.to_vec();
        for (s, &ws) in weights.iter().enumerate().skip(1) {
            pt[i] = f.add(a[i], s as u64);
            acc = f.mul_add(acc, ws, self.eval(&pt));
        }
        acc
    }

    /// Full gradient at `a`. Structured rules use the chain rule or a direct
    /// formula; everything else falls back to axis interpolation.
    pub fn gradient(&self, a: &[u64]) -> Vec<u64> {
        assert_eq!(a.len(), self.nvars, "blackbox arity");
        match &self.rule {
            Rule::Trimm(shape) => shape.gradient(self.modulus, a),
            Rule::Compose { inner, matrix } => matrix.vec_mul(&inner.gradient(&matrix.mul_vec(a))),
            Rule::Restrict { inner, free, base } => {
                let g = inner.gradient(&fill(base, free, a));
                free.iter().map(|&i| g[i]).collect()
            }
            _ => {
                let weights = derivative_weights(self.modulus, self.degree);
                let fa = self.eval(a);
                (0..self.nvars)
                    .map(|i| self.axis_derivative(i, a, fa, &weights))
                    .collect()
            }
        }
    }

    /// An explicit form when one is cheaply available.
    pub fn as_explicit(&self) -> Option<MultiPoly> {
        match &self.rule {
            Rule::Explicit(p) => Some((**p).clone()),
            Rule::Trimm(shape) => Some(shape.expand(self.modulus)),
            Rule::Compose { inner, matrix } => {
                Some(inner.as_explicit()?.substitute_affine(matrix, None))
            }
            Rule::Restrict { inner, free, base } => {
                let p = inner.as_explicit()?;
                let mut sel = MatrixFp::zeros(self.modulus, inner.nvars, free.len());
                let mut shift = (**base).clone();
                for (c, &i) in free.iter().enumerate() {
                    sel.set(i, c, 1);
                    shift[i] = 0;
                }
                Some(p.substitute_affine(&sel, Some(&shift)))
            }
            Rule::Custom(_) => None,
        }
    }
}

fn fill(base: &[u64], free: &[usize], x: &[u64]) -> Vec<u64> {
    let mut full = base.to_vec();
    for (&i, &v) in free.iter().zip(x) {
        full[i] = v;
    }
    full
}

/// Weights w_s with q'(0) = sum_s w_s q(s) for every polynomial q of degree
/// at most `degree`.
fn derivative_weights(f: PrimeModulus, degree: usize) -> Vec<u64> {
    assert!((degree as u64) < f.p(), "degree bound must stay below p");
    let mut w = vec![0u64; degree + 1];
    for m in 1..=degree {
        w[0] = f.sub(w[0], f.inv(m as u64).unwrap());
    }
    for (s, ws) in w.iter_mut().enumerate().skip(1) {
        let mut num = 1u64;
        let mut den = 1u64;
        for m in 0..=degree {
            if m == s {
                continue;
            }
            if m != 0 {
                num = f.mul(num, f.neg(m as u64));
            }
            den = f.mul(den, f.sub(s as u64, m as u64));
        }
        *ws = f.mul(num, f.inv(den).unwrap());
    }
    w
}

/// Schwartz-Zippel identity test: `false` is definite, `true` errs with
/// probability at most trials * deg / p.
pub fn pit_equal<R: Rng + ?Sized>(f: &Blackbox, g: &Blackbox, trials: usize, rng: &mut R) -> bool {
    assert_eq!(f.nvars(), g.nvars(), "pit arity");
    let m = f.modulus();
    (0..trials).all(|_| {
        let x = m.random_vec(rng, f.nvars());
        f.eval(&x) == g.eval(&x)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::seeded_rng;

    #[test]
    fn derivative_small_cases() {
        let f = PrimeModulus::default();
        let p = MultiPoly::var(f, 2, 0).mul(&MultiPoly::var(f, 2, 1));
        let bb = Blackbox::explicit(p);
        assert_eq!(bb.partial_derivative_at(0, &[5, 3]), 3);
        let c = Blackbox::explicit(MultiPoly::constant(f, 2, 9));
        assert_eq!(c.gradient(&[4, 4]), vec![0, 0]);
    }

    #[test]
    fn derivative_weights_exact_on_monomials() {
        let f = PrimeModulus::default();
        for deg in 1..7 {
            let w = derivative_weights(f, deg);
            for k in 0..=deg {
                let got = (0..=deg).fold(0, |acc, s| f.mul_add(acc, w[s], f.pow(s as u64, k as u64)));
                assert_eq!(got, (k == 1) as u64, "deg {deg} monomial t^{k}");
            }
        }
    }

    #[test]
    fn compose_restrict_match_explicit() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(11);
        let x = MultiPoly::var(f, 3, 0);
        let y = MultiPoly::var(f, 3, 1);
        let z = MultiPoly::var(f, 3, 2);
        let p = x.mul(&y).mul(&z).add(&x.pow(2).scale(4));
        let bb = Blackbox::explicit(p);
        let a = MatrixFp::random(f, 3, 3, &mut rng);
        let c = bb.compose(&a).compose(&MatrixFp::random_invertible(f, 3, &mut rng));
        let ce = Blackbox::explicit(c.as_explicit().unwrap());
        assert!(pit_equal(&c, &ce, 20, &mut rng));
        let r = c.restrict(vec![2, 0], f.random_vec(&mut rng, 3));
        let re = Blackbox::explicit(r.as_explicit().unwrap());
        assert!(pit_equal(&r, &re, 20, &mut rng));
        let pt = f.random_vec(&mut rng, 2);
        let g = r.gradient(&pt);
        for i in 0..2 {
            assert_eq!(g[i], r.partial_derivative_at(i, &pt));
        }
    }

    #[test]
    fn pit_distinguishes_shift() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(1);
        let x = Blackbox::explicit(MultiPoly::var(f, 1, 0));
        let x1 = Blackbox::explicit(MultiPoly::linear(f, &[1], 1));
        assert!(pit_equal(&x, &x, 5, &mut rng));
        assert!(!pit_equal(&x, &x1, 1, &mut rng));
    }

    #[test]
    fn arity_mismatch_reported() {
        let f = PrimeModulus::default();
        let bb = Blackbox::explicit(MultiPoly::var(f, 2, 0));
        let err = bb.try_eval(&VectorFp::zeros(f, 3)).unwrap_err();
        assert_eq!(err, PolyError::ArityMismatch { expected: 2, got: 3 });
    }
}
