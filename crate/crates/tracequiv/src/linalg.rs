//! Dense exact linear algebra over F_p.

use std::ops::Deref;

use rand::Rng;
use thiserror::Error;

use crate::field::{PrimeModulus, Scalar};
use crate::poly::UniPoly;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinalgError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix is singular")]
    Singular,
    #[error("right-hand side is outside the column span")]
    NoSolution,
}

/// A vector of residues tagged with its modulus.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VectorFp {
    modulus: PrimeModulus,
    entries: Vec<u64>,
}

impl Deref for VectorFp {
    type Target = [u64];
    fn deref(&self) -> &[u64] {
        &self.entries
    }
}

impl VectorFp {
    pub fn new(modulus: PrimeModulus, entries: Vec<u64>) -> Self {
        let entries = entries.into_iter().map(|v| modulus.reduce(v)).collect();
        VectorFp { modulus, entries }
    }

    pub fn zeros(modulus: PrimeModulus, len: usize) -> Self {
        VectorFp {
            modulus,
            entries: vec![0; len],
        }
    }

    pub fn unit(modulus: PrimeModulus, len: usize, i: usize) -> Self {
        let mut v = Self::zeros(modulus, len);
        v.entries[i] = 1;
        v
    }

    pub fn modulus(&self) -> PrimeModulus {
        self.modulus
    }

    pub fn entry(&self, i: usize) -> Scalar {
        self.modulus.elem(self.entries[i])
    }

    pub fn into_inner(self) -> Vec<u64> {
        self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&v| v == 0)
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MatrixFp {
    rows: usize,
    cols: usize,
    modulus: PrimeModulus,
    data: Vec<u64>,
}

/// Reduced row echelon form together with its pivot columns.
#[derive(Clone, Debug)]
pub struct Echelon {
    pub reduced: MatrixFp,
    pub pivots: Vec<usize>,
}

impl Echelon {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn nullspace(&self) -> Vec<VectorFp> {
        let f = self.reduced.modulus;
        let cols = self.reduced.cols;
        let mut is_pivot = vec![false; cols];
        for &c in &self.pivots {
            is_pivot[c] = true;
        }
        let mut basis = Vec::new();
        for free in (0..cols).filter(|&c| !is_pivot[c]) {
            let mut v = vec![0u64; cols];
            v[free] = 1;
            for (r, &pc) in self.pivots.iter().enumerate() {
                v[pc] = f.neg(self.reduced.get(r, free));
            }
            basis.push(VectorFp { modulus: f, entries: v });
        }
        basis
    }
}

impl MatrixFp {
    pub fn zeros(modulus: PrimeModulus, rows: usize, cols: usize) -> Self {
        MatrixFp {
            rows,
            cols,
            modulus,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(modulus: PrimeModulus, n: usize) -> Self {
        let mut m = Self::zeros(modulus, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn from_fn(
        modulus: PrimeModulus,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> u64,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(modulus.reduce(f(i, j)));
            }
        }
        MatrixFp {
            rows,
            cols,
            modulus,
            data,
        }
    }

    /// Builds from row-major data; residues are reduced.
    pub fn from_data(
        modulus: PrimeModulus,
        rows: usize,
        cols: usize,
        data: Vec<u64>,
    ) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let data = data.into_iter().map(|v| modulus.reduce(v)).collect();
        Ok(MatrixFp {
            rows,
            cols,
            modulus,
            data,
        })
    }

    pub fn from_rows(modulus: PrimeModulus, rows: &[Vec<u64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::ShapeMismatch("ragged rows".into()));
        }
        Self::from_data(modulus, rows.len(), cols, rows.concat())
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(modulus: PrimeModulus, rows: usize, columns: &[&[u64]]) -> Self {
        Self::from_fn(modulus, rows, columns.len(), |i, j| columns[j][i])
    }

    pub fn diagonal(modulus: PrimeModulus, entries: &[u64]) -> Self {
        let n = entries.len();
        Self::from_fn(modulus, n, n, |i, j| if i == j { entries[i] } else { 0 })
    }

    pub fn random<R: Rng + ?Sized>(
        modulus: PrimeModulus,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Self {
        MatrixFp {
            rows,
            cols,
            modulus,
            data: modulus.random_vec(rng, rows * cols),
        }
    }

    /// Uniform element of GL(n); redraws until nonsingular.
    pub fn random_invertible<R: Rng + ?Sized>(modulus: PrimeModulus, n: usize, rng: &mut R) -> Self {
        loop {
            let m = Self::random(modulus, n, n, rng);
            if m.det() != 0 {
                return m;
            }
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn modulus(&self) -> PrimeModulus {
        self.modulus
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: u64) {
        self.data[i * self.cols + j] = self.modulus.reduce(v);
    }

    pub fn entry(&self, i: usize, j: usize) -> Scalar {
        self.modulus.elem(self.get(i, j))
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<u64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn transpose(&self) -> MatrixFp {
        Self::from_fn(self.modulus, self.cols, self.rows, |i, j| self.get(j, i))
    }

    fn assert_same_shape(&self, other: &MatrixFp) {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "matrix shapes differ"
        );
        debug_assert_eq!(self.modulus, other.modulus);
    }

    pub fn add(&self, other: &MatrixFp) -> MatrixFp {
        self.assert_same_shape(other);
        let f = self.modulus;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f.add(a, b))
            .collect();
        MatrixFp { data, ..*self }
    }

    pub fn sub(&self, other: &MatrixFp) -> MatrixFp {
        self.assert_same_shape(other);
        let f = self.modulus;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f.sub(a, b))
            .collect();
        MatrixFp { data, ..*self }
    }

    pub fn scale(&self, c: u64) -> MatrixFp {
        let f = self.modulus;
        let data = self.data.iter().map(|&a| f.mul(a, c)).collect();
        MatrixFp { data, ..*self }
    }

    /// Matrix product; panics when the inner dimensions differ.
    pub fn mul(&self, other: &MatrixFp) -> MatrixFp {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let f = self.modulus;
        let mut out = MatrixFp::zeros(f, self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o = f.mul_add(*o, a, b);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[u64]) -> Vec<u64> {
        assert_eq!(self.cols, v.len(), "vector length differs from column count");
        let f = self.modulus;
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(0, |acc, (&a, &b)| f.mul_add(acc, a, b))
            })
            .collect()
    }

    /// Row vector times matrix.
    pub fn vec_mul(&self, v: &[u64]) -> Vec<u64> {
        assert_eq!(self.rows, v.len(), "vector length differs from row count");
        let f = self.modulus;
        let mut out = vec![0u64; self.cols];
        for (i, &a) in v.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (o, &b) in out.iter_mut().zip(self.row(i)) {
                *o = f.mul_add(*o, a, b);
            }
        }
        out
    }

    pub fn rref(&self) -> Echelon {
        let f = self.modulus;
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut pivot_row = vec![0u64; self.cols];
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let Some(found) = (r..self.rows).find(|&i| m.get(i, c) != 0) else {
                continue;
            };
            if found != r {
                for j in c..self.cols {
                    m.data.swap(found * self.cols + j, r * self.cols + j);
                }
            }
            let inv = f.inv(m.get(r, c)).expect("pivot is nonzero");
            for v in &mut m.row_mut(r)[c..] {
                *v = f.mul(*v, inv);
            }
            pivot_row[c..].copy_from_slice(&m.row(r)[c..]);
            for i in 0..self.rows {
                if i == r {
                    continue;
                }
                let factor = m.get(i, c);
                if factor == 0 {
                    continue;
                }
                let neg = f.neg(factor);
                let row = &mut m.row_mut(i)[c..];
                for (x, &pv) in row.iter_mut().zip(&pivot_row[c..]) {
                    *x = f.mul_add(*x, neg, pv);
                }
            }
            pivots.push(c);
            r += 1;
        }
        Echelon { reduced: m, pivots }
    }

    pub fn rank(&self) -> usize {
        self.rref().rank()
    }

    pub fn nullspace(&self) -> Vec<VectorFp> {
        self.rref().nullspace()
    }

    pub fn rref_rank_nullspace(&self) -> (usize, Vec<VectorFp>) {
        let e = self.rref();
        (e.rank(), e.nullspace())
    }

    /// Solves `self * x = b`, returning a particular solution and a kernel basis.
    pub fn solve(&self, b: &[u64]) -> Result<(VectorFp, Vec<VectorFp>), LinalgError> {
        if b.len() != self.rows {
            return Err(LinalgError::ShapeMismatch(format!(
                "right-hand side of length {} for {} rows",
                b.len(),
                self.rows
            )));
        }
        let (x, kernel) = self.solve_matrix(&MatrixFp::from_columns(self.modulus, self.rows, &[b]))?;
        Ok((
            VectorFp {
                modulus: self.modulus,
                entries: x.column(0),
            },
            kernel,
        ))
    }

    /// Solves `self * X = B` column by column.
    pub fn solve_matrix(&self, b: &MatrixFp) -> Result<(MatrixFp, Vec<VectorFp>), LinalgError> {
        if b.rows != self.rows {
            return Err(LinalgError::ShapeMismatch(format!(
                "right-hand side with {} rows for {} rows",
                b.rows, self.rows
            )));
        }
        let f = self.modulus;
        let aug = Self::from_fn(f, self.rows, self.cols + b.cols, |i, j| {
            if j < self.cols {
                self.get(i, j)
            } else {
                b.get(i, j - self.cols)
            }
        });
        let e = aug.rref();
        if e.pivots.iter().any(|&c| c >= self.cols) {
            return Err(LinalgError::NoSolution);
        }
        let mut x = MatrixFp::zeros(f, self.cols, b.cols);
        for (r, &pc) in e.pivots.iter().enumerate() {
            for j in 0..b.cols {
                x.set(pc, j, e.reduced.get(r, self.cols + j));
            }
        }
        let kernel = Echelon {
            reduced: e.reduced.submatrix(0..e.reduced.rows, 0..self.cols),
            pivots: e.pivots.clone(),
        }
        .nullspace();
        Ok((x, kernel))
    }

    pub fn inverse(&self) -> Result<MatrixFp, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::ShapeMismatch("inverse of a non-square matrix".into()));
        }
        match self.solve_matrix(&MatrixFp::identity(self.modulus, self.rows)) {
            Ok((x, kernel)) if kernel.is_empty() => Ok(x),
            _ => Err(LinalgError::Singular),
        }
    }

    pub fn det(&self) -> u64 {
        assert!(self.is_square(), "determinant of a non-square matrix");
        let f = self.modulus;
        let n = self.rows;
        let mut m = self.clone();
        let mut det = 1u64;
        for c in 0..n {
            let Some(r) = (c..n).find(|&i| m.get(i, c) != 0) else {
                return 0;
            };
            if r != c {
                for j in 0..n {
                    m.data.swap(r * n + j, c * n + j);
                }
                det = f.neg(det);
            }
            let pivot = m.get(c, c);
            det = f.mul(det, pivot);
            let inv = f.inv(pivot).expect("pivot is nonzero");
            for i in c + 1..n {
                let factor = f.mul(m.get(i, c), inv);
                if factor == 0 {
                    continue;
                }
                let neg = f.neg(factor);
                for j in c..n {
                    let v = f.mul_add(m.get(i, j), neg, m.get(c, j));
                    m.data[i * n + j] = v;
                }
            }
        }
        det
    }

    /// det(tI - M), by evaluating at t = 0..n and interpolating.
    pub fn char_poly(&self) -> UniPoly {
        assert!(self.is_square(), "characteristic polynomial of a non-square matrix");
        let f = self.modulus;
        let n = self.rows;
        assert!((n as u64) < f.p(), "modulus must exceed the matrix size");
        let points: Vec<(u64, u64)> = (0..=n as u64)
            .map(|t| {
                let shifted = MatrixFp::from_fn(f, n, n, |i, j| {
                    let d = if i == j { t } else { 0 };
                    f.sub(d, self.get(i, j))
                });
                (t, shifted.det())
            })
            .collect();
        UniPoly::interpolate(f, &points).expect("nodes are distinct")
    }

    /// q(M) by Horner's rule.
    pub fn apply_poly(&self, q: &UniPoly) -> MatrixFp {
        assert!(self.is_square());
        let f = self.modulus;
        let n = self.rows;
        let mut acc = MatrixFp::zeros(f, n, n);
        for &c in q.coeffs().iter().rev() {
            acc = acc.mul(self);
            for i in 0..n {
                let v = f.add(acc.get(i, i), c);
                acc.data[i * n + i] = v;
            }
        }
        acc
    }

    pub fn kron(&self, other: &MatrixFp) -> MatrixFp {
        let f = self.modulus;
        Self::from_fn(
            f,
            self.rows * other.rows,
            self.cols * other.cols,
            |i, j| {
                f.mul(
                    self.get(i / other.rows, j / other.cols),
                    other.get(i % other.rows, j % other.cols),
                )
            },
        )
    }

    pub fn submatrix(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> MatrixFp {
        let (r0, c0) = (rows.start, cols.start);
        Self::from_fn(self.modulus, rows.len(), cols.len(), |i, j| self.get(r0 + i, c0 + j))
    }

    /// The `size`x`size` block at block coordinates (row_block, col_block).
    pub fn extract_block(
        &self,
        row_block: usize,
        col_block: usize,
        size: usize,
    ) -> Result<MatrixFp, LinalgError> {
        let (r1, c1) = ((row_block + 1) * size, (col_block + 1) * size);
        if r1 > self.rows || c1 > self.cols {
            return Err(LinalgError::ShapeMismatch(format!(
                "block ({row_block},{col_block}) of size {size} outside a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        Ok(self.submatrix(row_block * size..r1, col_block * size..c1))
    }

    pub fn assemble_block_diagonal(blocks: &[MatrixFp]) -> Result<MatrixFp, LinalgError> {
        let first = blocks
            .first()
            .ok_or_else(|| LinalgError::ShapeMismatch("no blocks".into()))?;
        if blocks.iter().any(|b| !b.is_square()) {
            return Err(LinalgError::ShapeMismatch("non-square block".into()));
        }
        let n: usize = blocks.iter().map(|b| b.rows).sum();
        let mut out = MatrixFp::zeros(first.modulus, n, n);
        let mut off = 0;
        for b in blocks {
            for i in 0..b.rows {
                for j in 0..b.cols {
                    out.data[(off + i) * n + off + j] = b.get(i, j);
                }
            }
            off += b.rows;
        }
        Ok(out)
    }

    /// Whether every nonzero entry lies in a diagonal block of the given size.
    pub fn is_block_diagonal(&self, size: usize) -> bool {
        (0..self.rows).all(|i| (0..self.cols).all(|j| i / size == j / size || self.get(i, j) == 0))
    }

    pub fn hstack(parts: &[&MatrixFp]) -> Result<MatrixFp, LinalgError> {
        let first = parts
            .first()
            .ok_or_else(|| LinalgError::ShapeMismatch("nothing to stack".into()))?;
        if parts.iter().any(|p| p.rows != first.rows) {
            return Err(LinalgError::ShapeMismatch("row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = MatrixFp::zeros(first.modulus, first.rows, cols);
        let mut off = 0;
        for p in parts {
            for i in 0..p.rows {
                out.row_mut(i)[off..off + p.cols].copy_from_slice(p.row(i));
            }
            off += p.cols;
        }
        Ok(out)
    }

    pub fn vstack(parts: &[&MatrixFp]) -> Result<MatrixFp, LinalgError> {
        let first = parts
            .first()
            .ok_or_else(|| LinalgError::ShapeMismatch("nothing to stack".into()))?;
        if parts.iter().any(|p| p.cols != first.cols) {
            return Err(LinalgError::ShapeMismatch("column counts differ".into()));
        }
        let rows: usize = parts.iter().map(|p| p.rows).sum();
        let mut data = Vec::with_capacity(rows * first.cols);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(MatrixFp {
            rows,
            cols: first.cols,
            modulus: first.modulus,
            data,
        })
    }

    /// Entries in row-major order, as a vector of length rows*cols.
    pub fn flatten(&self) -> VectorFp {
        VectorFp {
            modulus: self.modulus,
            entries: self.data.clone(),
        }
    }
}

/// A growing subspace kept in semi-reduced echelon form.
///
/// Stored rows have a unit pivot and vanish at the pivots of earlier rows,
/// so reducing a vector against the rows in insertion order is complete.
#[derive(Clone, Debug)]
pub struct SpanBasis {
    modulus: PrimeModulus,
    dim: usize,
    reduced: Vec<Vec<u64>>,
    pivots: Vec<usize>,
    originals: Vec<Vec<u64>>,
}

impl SpanBasis {
    pub fn new(modulus: PrimeModulus, dim: usize) -> Self {
        SpanBasis {
            modulus,
            dim,
            reduced: Vec::new(),
            pivots: Vec::new(),
            originals: Vec::new(),
        }
    }

    pub fn from_vectors<'a>(
        modulus: PrimeModulus,
        dim: usize,
        vectors: impl IntoIterator<Item = &'a [u64]>,
    ) -> Self {
        let mut s = Self::new(modulus, dim);
        for v in vectors {
            s.insert(v);
        }
        s
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.reduced.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reduced.is_empty()
    }

    /// The independent vectors that were inserted, in insertion order.
    pub fn vectors(&self) -> &[Vec<u64>] {
        &self.originals
    }

    pub fn reduce(&self, v: &[u64]) -> Vec<u64> {
        assert_eq!(v.len(), self.dim);
        let f = self.modulus;
        let mut v = v.to_vec();
        for (row, &pc) in self.reduced.iter().zip(&self.pivots) {
            let c = v[pc];
            if c == 0 {
                continue;
            }
            let neg = f.neg(c);
            for (x, &r) in v.iter_mut().zip(row) {
                *x = f.mul_add(*x, neg, r);
            }
        }
        v
    }

    pub fn contains(&self, v: &[u64]) -> bool {
        self.reduce(v).iter().all(|&x| x == 0)
    }

    /// Adds `v` if it is independent of the current span; reports whether it was.
    pub fn insert(&mut self, v: &[u64]) -> bool {
        let r = self.reduce(v);
        let Some(pc) = r.iter().position(|&x| x != 0) else {
            return false;
        };
        let f = self.modulus;
        let inv = f.inv(r[pc]).expect("nonzero");
        let r: Vec<u64> = r.iter().map(|&x| f.mul(x, inv)).collect();
        self.reduced.push(r);
        self.pivots.push(pc);
        self.originals.push(v.to_vec());
        true
    }

    pub fn contains_all(&self, other: &SpanBasis) -> bool {
        other.originals.iter().all(|v| self.contains(v))
    }

    pub fn same_span(&self, other: &SpanBasis) -> bool {
        self.len() == other.len() && self.contains_all(other)
    }
}
