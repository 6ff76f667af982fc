//! The trace of iterated matrix multiplication, tr(Q_0 Q_1 ... Q_{d-1}),
//! with its variable layout, symmetry generators and planted instances.
//!
//! Variables come in d blocks of w^2. Inside an even block the entries of
//! Q_k are listed row by row, inside an odd block column by column.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::PrimeModulus;
use crate::linalg::MatrixFp;
use crate::poly::{pit_equal, Blackbox, LinearMatrix, MultiPoly};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShapeError {
    #[error("width must be at least 2, got {0}")]
    Width(usize),
    #[error("length must be at least 3, got {0}")]
    Length(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrimmShape {
    w: usize,
    d: usize,
}

impl TrimmShape {
    pub fn new(w: usize, d: usize) -> Result<Self, ShapeError> {
        if w < 2 {
            return Err(ShapeError::Width(w));
        }
        if d < 3 {
            return Err(ShapeError::Length(d));
        }
        Ok(TrimmShape { w, d })
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn block_size(&self) -> usize {
        self.w * self.w
    }

    pub fn n(&self) -> usize {
        self.w * self.w * self.d
    }

    pub fn block_range(&self, k: usize) -> std::ops::Range<usize> {
        let b = self.block_size();
        k * b..(k + 1) * b
    }

    /// Position of entry (i, j) of Q_k inside block k.
    pub fn offset(&self, k: usize, i: usize, j: usize) -> usize {
        assert!(k < self.d && i < self.w && j < self.w, "index out of range");
        if k % 2 == 0 {
            i * self.w + j
        } else {
            j * self.w + i
        }
    }

    pub fn var_index(&self, k: usize, i: usize, j: usize) -> usize {
        k * self.block_size() + self.offset(k, i, j)
    }

    /// Inverse of [`TrimmShape::var_index`].
    pub fn position(&self, flat: usize) -> (usize, usize, usize) {
        assert!(flat < self.n(), "variable out of range");
        let b = self.block_size();
        let (k, off) = (flat / b, flat % b);
        let (a, c) = (off / self.w, off % self.w);
        if k % 2 == 0 {
            (k, a, c)
        } else {
            (k, c, a)
        }
    }

    /// The matrix Q_k read off a point.
    pub fn block_matrix(&self, modulus: PrimeModulus, x: &[u64], k: usize) -> MatrixFp {
        MatrixFp::from_fn(modulus, self.w, self.w, |i, j| x[self.var_index(k, i, j)])
    }

    pub fn eval(&self, modulus: PrimeModulus, x: &[u64]) -> u64 {
        assert_eq!(x.len(), self.n(), "point length");
        let mut acc = self.block_matrix(modulus, x, 0);
        for k in 1..self.d {
            acc = acc.mul(&self.block_matrix(modulus, x, k));
        }
        (0..self.w).fold(0, |s, i| modulus.add(s, acc.get(i, i)))
    }

    /// d tr / d Q_k(i, j) = (Q_{k+1} ... Q_{d-1} Q_0 ... Q_{k-1})(j, i).
    pub fn gradient(&self, modulus: PrimeModulus, x: &[u64]) -> Vec<u64> {
        let qs: Vec<MatrixFp> = (0..self.d).map(|k| self.block_matrix(modulus, x, k)).collect();
        let id = MatrixFp::identity(modulus, self.w);
        let mut prefix = vec![id.clone()];
        for q in &qs {
            let next = prefix.last().unwrap().mul(q);
            prefix.push(next);
        }
        let mut suffix = vec![id; self.d + 1];
        for k in (0..self.d).rev() {
            suffix[k] = qs[k].mul(&suffix[k + 1]);
        }
        let mut g = vec![0u64; self.n()];
        for k in 0..self.d {
            let cyc = suffix[k + 1].mul(&prefix[k]);
            for i in 0..self.w {
                for j in 0..self.w {
                    g[self.var_index(k, i, j)] = cyc.get(j, i);
                }
            }
        }
        g
    }

    /// Q_k as a matrix of linear forms over all n variables.
    pub fn symbolic_block(&self, modulus: PrimeModulus, k: usize) -> LinearMatrix {
        let n = self.n();
        LinearMatrix::from_fn(modulus, self.w, self.w, n, |i, j| {
            let mut v = vec![0; n];
            v[self.var_index(k, i, j)] = 1;
            v
        })
    }

    /// Explicit expansion: one monomial per closed index path.
    pub fn expand(&self, modulus: PrimeModulus) -> MultiPoly {
        let n = self.n();
        let mut out = MultiPoly::zero(modulus, n);
        let total = self.w.pow(self.d as u32);
        let mut path = vec![0usize; self.d];
        for code in 0..total {
            let mut c = code;
            for p in path.iter_mut() {
                *p = c % self.w;
                c /= self.w;
            }
            let mut e = vec![0u32; n];
            for k in 0..self.d {
                e[self.var_index(k, path[k], path[(k + 1) % self.d])] += 1;
            }
            out.add_term(e, 1);
        }
        out
    }

    /// Symmetry generator: Q_k -> Q_k M and Q_{k+1} -> -M Q_{k+1} (indices
    /// mod d), written as an n x n matrix acting on the variable vector.
    pub fn lie_generator(&self, modulus: PrimeModulus, k: usize, m: &MatrixFp) -> MatrixFp {
        assert!(k < self.d, "generator index");
        assert_eq!((m.rows(), m.cols()), (self.w, self.w), "generator shape");
        let id = MatrixFp::identity(modulus, self.w);
        let right = |blk: usize| {
            if blk % 2 == 0 {
                id.kron(&m.transpose())
            } else {
                m.transpose().kron(&id)
            }
        };
        let left = |blk: usize| {
            if blk % 2 == 0 {
                m.kron(&id)
            } else {
                id.kron(m)
            }
        };
        let next = (k + 1) % self.d;
        let b = self.block_size();
        let mut out = MatrixFp::zeros(modulus, self.n(), self.n());
        let mut put = |blk: usize, mat: &MatrixFp, sign: u64| {
            for r in 0..b {
                for c in 0..b {
                    let (rr, cc) = (blk * b + r, blk * b + c);
                    let v = modulus.mul_add(out.get(rr, cc), sign, mat.get(r, c));
                    out.set(rr, cc, v);
                }
            }
        };
        put(k, &right(k), 1);
        put(next, &left(next), modulus.neg(1));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantMode {
    Full,
    Block,
}

/// A hidden equivalence: f(x) = Tr-IMM(A x).
#[derive(Clone, Debug)]
pub struct PlantedInstance {
    pub shape: TrimmShape,
    pub mode: PlantMode,
    pub a: MatrixFp,
    pub f: Blackbox,
}

impl PlantedInstance {
    pub fn from_matrix(shape: TrimmShape, mode: PlantMode, a: MatrixFp) -> Self {
        let f = Blackbox::trimm(a.modulus(), shape).compose(&a);
        PlantedInstance { shape, mode, a, f }
    }

    /// X_k = Q_k(A x), one linear matrix per block over the n input variables.
    pub fn secret_matrices(&self) -> Vec<LinearMatrix> {
        (0..self.shape.d())
            .map(|k| secret_block(&self.shape, &self.a, k))
            .collect()
    }

    /// The diagonal blocks of A in block mode.
    pub fn blocks(&self) -> Option<Vec<MatrixFp>> {
        match self.mode {
            PlantMode::Full => None,
            PlantMode::Block => {
                let b = self.shape.block_size();
                Some(
                    (0..self.shape.d())
                        .map(|k| self.a.extract_block(k, k, b).expect("square blocks"))
                        .collect(),
                )
            }
        }
    }
}

/// Q_k(A x) as a linear matrix over the columns of `a`.
pub fn secret_block(shape: &TrimmShape, a: &MatrixFp, k: usize) -> LinearMatrix {
    LinearMatrix::from_coefficient_rows(a, shape.w(), shape.w(), |i, j| shape.var_index(k, i, j))
}

pub fn plant_instance<R: Rng + ?Sized>(
    modulus: PrimeModulus,
    shape: TrimmShape,
    mode: PlantMode,
    rng: &mut R,
) -> PlantedInstance {
    let a = match mode {
        PlantMode::Full => MatrixFp::random_invertible(modulus, shape.n(), rng),
        PlantMode::Block => {
            let blocks: Vec<MatrixFp> = (0..shape.d())
                .map(|_| MatrixFp::random_invertible(modulus, shape.block_size(), rng))
                .collect();
            MatrixFp::assemble_block_diagonal(&blocks).expect("square blocks")
        }
    };
    PlantedInstance::from_matrix(shape, mode, a)
}

/// A claimed equivalence f(x) = Tr-IMM(A x).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Witness {
    Full(MatrixFp),
    Blocks(Vec<MatrixFp>),
}

impl Witness {
    pub fn matrix(&self) -> MatrixFp {
        match self {
            Witness::Full(a) => a.clone(),
            Witness::Blocks(b) => MatrixFp::assemble_block_diagonal(b).expect("square blocks"),
        }
    }
}

/// Checks f = Tr-IMM o A at `trials` random points after checking that A is
/// invertible and correctly shaped.
pub fn verify_witness<R: Rng + ?Sized>(
    f: &Blackbox,
    shape: &TrimmShape,
    witness: &Witness,
    trials: usize,
    rng: &mut R,
) -> bool {
    if let Witness::Blocks(b) = witness {
        let s = shape.block_size();
        if b.len() != shape.d() || b.iter().any(|m| m.rows() != s || m.cols() != s) {
            return false;
        }
    }
    let a = witness.matrix();
    if a.rows() != shape.n() || a.cols() != f.nvars() || !a.is_square() || a.det() == 0 {
        return false;
    }
    let g = Blackbox::trimm(f.modulus(), *shape).compose(&a);
    pit_equal(f, &g, trials, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::seeded_rng;

    fn shape(w: usize, d: usize) -> TrimmShape {
        TrimmShape::new(w, d).unwrap()
    }

    #[test]
    fn index_examples() {
        let s = shape(2, 3);
        assert_eq!(s.var_index(0, 0, 1), 1);
        assert_eq!(s.var_index(1, 1, 0), 5);
        for flat in 0..s.n() {
            let (k, i, j) = s.position(flat);
            assert_eq!(s.var_index(k, i, j), flat);
        }
    }

    #[test]
    fn shape_gates() {
        assert_eq!(TrimmShape::new(1, 3), Err(ShapeError::Width(1)));
        assert_eq!(TrimmShape::new(2, 2), Err(ShapeError::Length(2)));
    }

    #[test]
    fn eval_small_cases() {
        let f = PrimeModulus::default();
        let s = shape(2, 3);
        assert_eq!(s.eval(f, &[1; 12]), 8);
        let mut x = vec![0; 12];
        for k in 0..3 {
            for i in 0..2 {
                x[s.var_index(k, i, i)] = 1;
            }
        }
        assert_eq!(s.eval(f, &x), 2);
    }

    #[test]
    fn expansion_agrees() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(3);
        for (w, d) in [(2, 3), (2, 4), (3, 3)] {
            let s = shape(w, d);
            let e = s.expand(f);
            assert_eq!(e.num_terms(), w.pow(d as u32));
            for _ in 0..100 {
                let x = f.random_vec(&mut rng, s.n());
                assert_eq!(e.eval(&x), s.eval(f, &x));
            }
        }
    }

    #[test]
    fn gradient_matches_symbolic() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(4);
        let s = shape(2, 3);
        let e = s.expand(f);
        let partials: Vec<MultiPoly> = (0..s.n()).map(|i| e.partial_derivative(i)).collect();
        let generic = Blackbox::explicit(e.clone());
        for _ in 0..20 {
            let x = f.random_vec(&mut rng, s.n());
            let g = s.gradient(f, &x);
            let h = generic.gradient(&x);
            for i in 0..s.n() {
                assert_eq!(g[i], partials[i].eval(&x));
                assert_eq!(h[i], g[i]);
            }
        }
    }

    #[test]
    fn generator_small_cases() {
        let f = PrimeModulus::default();
        let s = shape(2, 4);
        let z = MatrixFp::zeros(f, 2, 2);
        assert!(s.lie_generator(f, 1, &z).is_zero());
        let g = s.lie_generator(f, 0, &MatrixFp::identity(f, 2));
        assert_eq!(g.extract_block(0, 0, 4).unwrap(), MatrixFp::identity(f, 4));
        assert_eq!(g.extract_block(1, 1, 4).unwrap(), MatrixFp::identity(f, 4).scale(f.neg(1)));
        assert!(g.extract_block(2, 2, 4).unwrap().is_zero());
    }

    /// grad f(x)^T E x vanishes for every generator, every parity of k and d.
    #[test]
    fn generators_annihilate() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(5);
        for (w, d) in [(2, 3), (2, 4), (3, 3), (2, 5)] {
            let s = shape(w, d);
            for k in 0..d {
                for _ in 0..3 {
                    let m = MatrixFp::random(f, w, w, &mut rng);
                    let e = s.lie_generator(f, k, &m);
                    assert!(e.is_block_diagonal(s.block_size()));
                    for _ in 0..3 {
                        let x = f.random_vec(&mut rng, s.n());
                        let g = s.gradient(f, &x);
                        let ex = e.mul_vec(&x);
                        let v = g.iter().zip(&ex).fold(0, |a, (&p, &q)| f.mul_add(a, p, q));
                        assert_eq!(v, 0, "w={w} d={d} k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn generator_span_contains_distinct_diagonal() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(6);
        let s = shape(2, 3);
        let mut sum = MatrixFp::zeros(f, s.n(), s.n());
        for k in 0..3 {
            let diag = MatrixFp::diagonal(f, &f.random_vec(&mut rng, 2));
            sum = sum.add(&s.lie_generator(f, k, &diag));
        }
        let mut entries: Vec<u64> = (0..s.n()).map(|i| sum.get(i, i)).collect();
        assert!((0..s.n()).all(|i| (0..s.n()).all(|j| i == j || sum.get(i, j) == 0)));
        entries.sort();
        entries.dedup();
        assert_eq!(entries.len(), s.n());
    }

    #[test]
    fn planted_instances_verify() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(7);
        let s = shape(2, 3);
        let id = PlantedInstance::from_matrix(s, PlantMode::Full, MatrixFp::identity(f, 12));
        assert!(pit_equal(&id.f, &Blackbox::trimm(f, s), 10, &mut rng));
        for _ in 0..10 {
            let inst = plant_instance(f, s, PlantMode::Full, &mut rng);
            assert_ne!(inst.a.det(), 0);
            assert!(verify_witness(&inst.f, &s, &Witness::Full(inst.a.clone()), 20, &mut rng));
            let mut bad = inst.a.clone();
            bad.set(3, 5, f.add(bad.get(3, 5), 1));
            assert!(!verify_witness(&inst.f, &s, &Witness::Full(bad), 20, &mut rng));
        }
        let inst = plant_instance(f, s, PlantMode::Block, &mut rng);
        let blocks = inst.blocks().unwrap();
        assert!(verify_witness(&inst.f, &s, &Witness::Blocks(blocks), 20, &mut rng));
    }

    /// Rotating the blocks by two positions keeps parities and the trace.
    #[test]
    fn rotated_witness_verifies() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(8);
        let s = shape(2, 4);
        let inst = plant_instance(f, s, PlantMode::Full, &mut rng);
        let rot = MatrixFp::from_fn(f, s.n(), s.n(), |r, c| {
            let (k, i, j) = s.position(r);
            (s.var_index((k + 2) % 4, i, j) == c) as u64
        });
        let w = Witness::Full(rot.mul(&inst.a));
        assert!(verify_witness(&inst.f, &s, &w, 50, &mut rng));
    }

    #[test]
    fn secret_blocks_reproduce_instance() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(9);
        let s = shape(2, 3);
        let inst = plant_instance(f, s, PlantMode::Full, &mut rng);
        let xs = inst.secret_matrices();
        let x = f.random_vec(&mut rng, s.n());
        let mut prod = xs[0].eval(&x);
        for m in &xs[1..] {
            prod = prod.mul(&m.eval(&x));
        }
        assert_eq!(f.add(prod.get(0, 0), prod.get(1, 1)), inst.f.eval(&x));
    }
}
