//! The Lie algebra of a polynomial, invariant subspaces, and the
//! decomposition of the variable space into irreducible invariant pieces.
//!
//! A matrix E is in the Lie algebra of f when grad f(x)^T E x vanishes
//! identically.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::field::PrimeModulus;
use crate::linalg::{MatrixFp, SpanBasis, VectorFp};
use crate::poly::Blackbox;

/// Extra sample rows on top of n^2 in sampled mode.
const SAMPLE_SLACK: usize = 32;
/// Fresh points used to certify every basis element.
const CERTIFY_POINTS: usize = 20;
/// Attempts made by the subspace driver.
const SUBSPACE_ATTEMPTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LieMode {
    /// Linear constraints from gradients at random points.
    Sampled,
    /// Coefficient matching on an explicit form.
    Exact,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LieError {
    #[error("a Lie algebra candidate failed certification")]
    CertificationFailed,
    #[error("exact mode needs an explicit polynomial")]
    NoExplicitForm,
}

#[derive(Clone, Debug)]
pub struct LieBasis {
    n: usize,
    basis: Vec<MatrixFp>,
}

impl LieBasis {
    pub fn new(n: usize, basis: Vec<MatrixFp>) -> Self {
        assert!(basis.iter().all(|m| m.rows() == n && m.cols() == n));
        LieBasis { n, basis }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn elements(&self) -> &[MatrixFp] {
        &self.basis
    }

    /// The elements flattened row-major into vectors of length n^2.
    pub fn span(&self, modulus: PrimeModulus) -> SpanBasis {
        SpanBasis::from_vectors(
            modulus,
            self.n * self.n,
            self.basis.iter().map(|m| m.data()),
        )
    }

    pub fn contains(&self, m: &MatrixFp) -> bool {
        self.span(m.modulus()).contains(m.data())
    }
}

fn vector_to_matrix(f: PrimeModulus, n: usize, v: &[u64]) -> MatrixFp {
    MatrixFp::from_data(f, n, n, v.to_vec()).expect("n^2 entries")
}

/// grad f(a)^T E a
fn lie_residual(grad: &[u64], e: &MatrixFp, a: &[u64]) -> u64 {
    let f = e.modulus();
    let ea = e.mul_vec(a);
    grad.iter().zip(&ea).fold(0, |acc, (&g, &v)| f.mul_add(acc, g, v))
}

pub fn lie_algebra_basis<R: Rng + ?Sized>(
    f: &Blackbox,
    rng: &mut R,
    mode: LieMode,
) -> Result<LieBasis, LieError> {
    match mode {
        LieMode::Exact => exact_basis(f),
        LieMode::Sampled => {
            let n = f.nvars();
            let rows = n * n + SAMPLE_SLACK;
            match sampled_basis(f, rows, rng) {
                Err(LieError::CertificationFailed) => sampled_basis(f, 2 * rows, rng),
                other => other,
            }
        }
    }
}

fn sampled_basis<R: Rng + ?Sized>(f: &Blackbox, rows: usize, rng: &mut R) -> Result<LieBasis, LieError> {
    let m = f.modulus();
    let n = f.nvars();
    let mut sys = MatrixFp::zeros(m, rows, n * n);
    for t in 0..rows {
        let a = m.random_vec(rng, n);
        let g = f.gradient(&a);
        let row = sys.row_mut(t);
        for i in 0..n {
            if g[i] == 0 {
                continue;
            }
            for j in 0..n {
                row[i * n + j] = m.mul(g[i], a[j]);
            }
        }
    }
    let basis: Vec<MatrixFp> = sys
        .nullspace()
        .iter()
        .map(|v| vector_to_matrix(m, n, v))
        .collect();
    for _ in 0..CERTIFY_POINTS {
        let a = m.random_vec(rng, n);
        let g = f.gradient(&a);
        if basis.iter().any(|e| lie_residual(&g, e, &a) != 0) {
            return Err(LieError::CertificationFailed);
        }
    }
    Ok(LieBasis::new(n, basis))
}

fn exact_basis(f: &Blackbox) -> Result<LieBasis, LieError> {
    let p = f.as_explicit().ok_or(LieError::NoExplicitForm)?;
    let m = f.modulus();
    let n = f.nvars();
    // one equation per monomial of sum_ij e_ij x_j d_i p
    let mut rows: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut entries: Vec<(usize, usize, u64)> = Vec::new();
    for i in 0..n {
        let di = p.partial_derivative(i);
        for (e, c) in di.terms() {
            for j in 0..n {
                let mut mono = e.clone();
                mono[j] += 1;
                let next = rows.len();
                let r = *rows.entry(mono).or_insert(next);
                entries.push((r, i * n + j, c));
            }
        }
    }
    let mut sys = MatrixFp::zeros(m, rows.len(), n * n);
    for (r, col, c) in entries {
        sys.set(r, col, m.add(sys.get(r, col), c));
    }
    let basis = sys
        .nullspace()
        .iter()
        .map(|v| vector_to_matrix(m, n, v))
        .collect();
    Ok(LieBasis::new(n, basis))
}

/// sum_i r_i F_i with uniform coefficients.
pub fn random_element<R: Rng + ?Sized>(lie: &LieBasis, modulus: PrimeModulus, rng: &mut R) -> MatrixFp {
    let mut acc = MatrixFp::zeros(modulus, lie.n, lie.n);
    for e in &lie.basis {
        acc = acc.add(&e.scale(modulus.random(rng)));
    }
    acc
}

/// A subspace closed under a set of matrices.
#[derive(Clone, Debug)]
pub struct InvariantSubspace {
    span: SpanBasis,
}

impl InvariantSubspace {
    pub fn dim(&self) -> usize {
        self.span.len()
    }

    pub fn basis(&self) -> &[Vec<u64>] {
        self.span.vectors()
    }

    pub fn span(&self) -> &SpanBasis {
        &self.span
    }

    pub fn contains(&self, v: &[u64]) -> bool {
        self.span.contains(v)
    }

    pub fn same_span(&self, other: &InvariantSubspace) -> bool {
        self.span.same_span(&other.span)
    }

    /// Basis vectors as the columns of an n x dim matrix.
    pub fn as_columns(&self, modulus: PrimeModulus) -> MatrixFp {
        let cols: Vec<&[u64]> = self.basis().iter().map(|v| v.as_slice()).collect();
        MatrixFp::from_columns(modulus, self.span.ambient_dim(), &cols)
    }

    /// Every matrix maps every basis vector back into the span.
    pub fn is_invariant(&self, mats: &[MatrixFp]) -> bool {
        mats.iter()
            .all(|m| self.basis().iter().all(|v| self.span.contains(&m.mul_vec(v))))
    }
}

/// Smallest subspace containing `v` and closed under the given matrices.
pub fn closure(v: &VectorFp, mats: &[MatrixFp]) -> InvariantSubspace {
    let f = v.modulus();
    let mut span = SpanBasis::new(f, v.len());
    let mut frontier = Vec::new();
    if span.insert(v) {
        frontier.push(v.to_vec());
    }
    while let Some(u) = frontier.pop() {
        for m in mats {
            let img = m.mul_vec(&u);
            if span.insert(&img) {
                frontier.push(img);
            }
        }
    }
    InvariantSubspace { span }
}

/// Which check rejected the input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Gate {
    LieCertification,
    NotSquarefree,
    SubspaceCount { found: usize, expected: usize },
    UnequalDimensions(Vec<usize>),
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gate::LieCertification => write!(f, "lie-certification"),
            Gate::NotSquarefree => write!(f, "square-free"),
            Gate::SubspaceCount { found, expected } => {
                write!(f, "subspace-count ({found} found, {expected} expected)")
            }
            Gate::UnequalDimensions(d) => write!(f, "subspace-dimensions {d:?}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("rejected at gate {0}")]
pub struct Reject(pub Gate);

/// One pass over a fixed Lie basis: random element, characteristic
/// polynomial, factors, kernels, closures, deduplication.
pub fn invariant_subspaces_once<R: Rng + ?Sized>(
    lie: &LieBasis,
    modulus: PrimeModulus,
    expected: usize,
    rng: &mut R,
) -> Result<Vec<InvariantSubspace>, Reject> {
    let r = random_element(lie, modulus, rng);
    let q = r.char_poly();
    if !q.is_squarefree() {
        return Err(Reject(Gate::NotSquarefree));
    }
    let mut spaces: Vec<InvariantSubspace> = Vec::new();
    for (p, _) in q.factor(rng) {
        let kernel = r.apply_poly(&p).nullspace();
        let Some(v) = kernel.first() else {
            continue;
        };
        let space = closure(v, lie.elements());
        if !spaces.iter().any(|s| s.same_span(&space)) {
            spaces.push(space);
        }
    }
    if spaces.len() != expected {
        return Err(Reject(Gate::SubspaceCount {
            found: spaces.len(),
            expected,
        }));
    }
    let dims: Vec<usize> = spaces.iter().map(|s| s.dim()).collect();
    if dims.iter().any(|&d| d != dims[0]) {
        return Err(Reject(Gate::UnequalDimensions(dims)));
    }
    Ok(spaces)
}

/// The irreducible invariant subspaces of the Lie algebra of `f`, expecting
/// one per unit of the degree bound. Certification failures and square-free
/// failures are retried with fresh randomness.
pub fn irreducible_invariant_subspaces<R: Rng + ?Sized>(
    f: &Blackbox,
    rng: &mut R,
) -> Result<Vec<InvariantSubspace>, Reject> {
    let mut lie = None;
    let mut last = Gate::LieCertification;
    for _ in 0..SUBSPACE_ATTEMPTS {
        if lie.is_none() {
            match lie_algebra_basis(f, rng, LieMode::Sampled) {
                Ok(l) => lie = Some(l),
                Err(_) => {
                    last = Gate::LieCertification;
                    continue;
                }
            }
        }
        match invariant_subspaces_once(lie.as_ref().unwrap(), f.modulus(), f.degree(), rng) {
            Err(Reject(Gate::NotSquarefree)) => last = Gate::NotSquarefree,
            other => return other,
        }
    }
    Err(Reject(last))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::seeded_rng;
    use crate::poly::MultiPoly;
    use crate::trimm::TrimmShape;

    #[test]
    fn closure_small_cases() {
        let f = PrimeModulus::default();
        let v = VectorFp::new(f, vec![0, 1]);
        let z = MatrixFp::zeros(f, 2, 2);
        assert_eq!(closure(&v, &[z]).dim(), 1);
        let nil = MatrixFp::from_rows(f, &[vec![0, 1], vec![0, 0]]).unwrap();
        assert_eq!(closure(&v, &[nil]).dim(), 2);
    }

    #[test]
    fn single_variable_exact_matches_sampled() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(1);
        let bb = Blackbox::explicit(MultiPoly::var(f, 2, 0));
        let a = lie_algebra_basis(&bb, &mut rng, LieMode::Sampled).unwrap();
        let b = lie_algebra_basis(&bb, &mut rng, LieMode::Exact).unwrap();
        // E with first row zero: x_0 does not move
        assert_eq!(a.dim(), 2);
        assert!(a.span(f).same_span(&b.span(f)));
    }

    #[test]
    fn trimm_lie_algebra() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(2);
        let s = TrimmShape::new(2, 3).unwrap();
        let bb = Blackbox::trimm(f, s);
        let l = lie_algebra_basis(&bb, &mut rng, LieMode::Sampled).unwrap();
        assert_eq!(l.dim(), 11);
        for e in l.elements() {
            assert!(e.is_block_diagonal(4));
        }
    }

    #[test]
    fn element_of_single_basis_is_scalar_multiple() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(3);
        let l = LieBasis::new(3, vec![MatrixFp::identity(f, 3)]);
        let r = random_element(&l, f, &mut rng);
        assert_eq!(r, MatrixFp::identity(f, 3).scale(r.get(0, 0)));
        let mut a = seeded_rng(9);
        let mut b = seeded_rng(9);
        assert_eq!(random_element(&l, f, &mut a), random_element(&l, f, &mut b));
    }
}
