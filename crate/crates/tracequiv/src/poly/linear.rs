use crate::field::PrimeModulus;
use crate::linalg::MatrixFp;

use super::MultiPoly;

/// A matrix whose entries are affine forms in `nvars` variables. Each entry
/// stores `nvars` coefficients followed by the constant term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearMatrix {
    modulus: PrimeModulus,
    rows: usize,
    cols: usize,
    nvars: usize,
    data: Vec<u64>,
}

impl LinearMatrix {
    pub fn zeros(modulus: PrimeModulus, rows: usize, cols: usize, nvars: usize) -> Self {
        LinearMatrix {
            modulus,
            rows,
            cols,
            nvars,
            data: vec![0; rows * cols * (nvars + 1)],
        }
    }

    /// `f(i, j)` returns the linear coefficients of entry (i, j), without
    /// constant term.
    pub fn from_fn(
        modulus: PrimeModulus,
        rows: usize,
        cols: usize,
        nvars: usize,
        mut f: impl FnMut(usize, usize) -> Vec<u64>,
    ) -> Self {
        let mut m = Self::zeros(modulus, rows, cols, nvars);
        for i in 0..rows {
            for j in 0..cols {
                let c = f(i, j);
                assert_eq!(c.len(), nvars, "linear form length");
                m.set_linear(i, j, &c);
            }
        }
        m
    }

    /// Entry (i, j) is the variable numbered i*cols + j.
    pub fn generic(modulus: PrimeModulus, rows: usize, cols: usize) -> Self {
        let n = rows * cols;
        Self::from_fn(modulus, rows, cols, n, |i, j| {
            let mut v = vec![0; n];
            v[i * cols + j] = 1;
            v
        })
    }

    /// Entry (i, j) is the linear form given by row `index(i, j)` of `coeffs`.
    pub fn from_coefficient_rows(
        coeffs: &MatrixFp,
        rows: usize,
        cols: usize,
        index: impl Fn(usize, usize) -> usize,
    ) -> Self {
        Self::from_fn(coeffs.modulus(), rows, cols, coeffs.cols(), |i, j| {
            coeffs.row(index(i, j)).to_vec()
        })
    }

    pub fn modulus(&self) -> PrimeModulus {
        self.modulus
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    fn base(&self, i: usize, j: usize) -> usize {
        assert!(i < self.rows && j < self.cols, "entry out of range");
        (i * self.cols + j) * (self.nvars + 1)
    }

    /// Coefficients followed by the constant term.
    pub fn entry(&self, i: usize, j: usize) -> &[u64] {
        let b = self.base(i, j);
        &self.data[b..b + self.nvars + 1]
    }

    pub fn linear_part(&self, i: usize, j: usize) -> &[u64] {
        let b = self.base(i, j);
        &self.data[b..b + self.nvars]
    }

    pub fn constant(&self, i: usize, j: usize) -> u64 {
        self.data[self.base(i, j) + self.nvars]
    }

    pub fn set_linear(&mut self, i: usize, j: usize, c: &[u64]) {
        let b = self.base(i, j);
        let f = self.modulus;
        for (d, &v) in self.data[b..b + self.nvars].iter_mut().zip(c) {
            *d = f.reduce(v);
        }
    }

    pub fn set_constant(&mut self, i: usize, j: usize, c: u64) {
        let b = self.base(i, j) + self.nvars;
        self.data[b] = self.modulus.reduce(c);
    }

    pub fn has_constants(&self) -> bool {
        (0..self.rows).any(|i| (0..self.cols).any(|j| self.constant(i, j) != 0))
    }

    pub fn eval(&self, x: &[u64]) -> MatrixFp {
        assert_eq!(x.len(), self.nvars, "linear matrix arity");
        let f = self.modulus;
        MatrixFp::from_fn(f, self.rows, self.cols, |i, j| {
            let e = self.entry(i, j);
            e[..self.nvars]
                .iter()
                .zip(x)
                .fold(e[self.nvars], |acc, (&a, &b)| f.mul_add(acc, a, b))
        })
    }

    pub fn transpose(&self) -> LinearMatrix {
        let mut out = Self::zeros(self.modulus, self.cols, self.rows, self.nvars);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let b = out.base(j, i);
                out.data[b..b + self.nvars + 1].copy_from_slice(self.entry(i, j));
            }
        }
        out
    }

    /// Applies `g` to every coefficient slice (linear part plus constant)
    /// viewed as a `rows x cols` matrix.
    fn map_coefficients(&self, rows: usize, cols: usize, g: impl Fn(&MatrixFp) -> MatrixFp) -> LinearMatrix {
        let mut out = Self::zeros(self.modulus, rows, cols, self.nvars);
        for v in 0..=self.nvars {
            let slice = MatrixFp::from_fn(self.modulus, self.rows, self.cols, |i, j| self.entry(i, j)[v]);
            let img = g(&slice);
            assert_eq!((img.rows(), img.cols()), (rows, cols));
            for i in 0..rows {
                for j in 0..cols {
                    let b = out.base(i, j);
                    out.data[b + v] = img.get(i, j);
                }
            }
        }
        out
    }

    /// M * self
    pub fn left_mul(&self, m: &MatrixFp) -> LinearMatrix {
        assert_eq!(m.cols(), self.rows, "left factor shape");
        self.map_coefficients(m.rows(), self.cols, |s| m.mul(s))
    }

    /// self * M
    pub fn right_mul(&self, m: &MatrixFp) -> LinearMatrix {
        assert_eq!(m.rows(), self.cols, "right factor shape");
        self.map_coefficients(self.rows, m.cols(), |s| s.mul(m))
    }

    pub fn add(&self, other: &LinearMatrix) -> LinearMatrix {
        assert_eq!(
            (self.rows, self.cols, self.nvars),
            (other.rows, other.cols, other.nvars)
        );
        let f = self.modulus;
        let mut out = self.clone();
        for (a, &b) in out.data.iter_mut().zip(&other.data) {
            *a = f.add(*a, b);
        }
        out
    }

    pub fn scale(&self, c: u64) -> LinearMatrix {
        let f = self.modulus;
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a = f.mul(*a, c);
        }
        out
    }

    /// The matrix z -> self(A z); A maps the new variables to the old ones.
    pub fn compose(&self, a: &MatrixFp) -> LinearMatrix {
        assert_eq!(a.rows(), self.nvars, "composition matrix rows");
        let mut out = Self::zeros(self.modulus, self.rows, self.cols, a.cols());
        for i in 0..self.rows {
            for j in 0..self.cols {
                let lin = a.vec_mul(self.linear_part(i, j));
                out.set_linear(i, j, &lin);
                out.set_constant(i, j, self.constant(i, j));
            }
        }
        out
    }

    /// I_w (x) self
    pub fn kron_identity_left(&self, w: usize) -> LinearMatrix {
        let mut out = Self::zeros(self.modulus, w * self.rows, w * self.cols, self.nvars);
        for b in 0..w {
            for i in 0..self.rows {
                for j in 0..self.cols {
                    let dst = out.base(b * self.rows + i, b * self.cols + j);
                    out.data[dst..dst + self.nvars + 1].copy_from_slice(self.entry(i, j));
                }
            }
        }
        out
    }

    /// Sub-grid of entries.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> LinearMatrix {
        let mut out = Self::zeros(self.modulus, rows, cols, self.nvars);
        for i in 0..rows {
            for j in 0..cols {
                let dst = out.base(i, j);
                out.data[dst..dst + self.nvars + 1].copy_from_slice(self.entry(r0 + i, c0 + j));
            }
        }
        out
    }

    /// One row per entry (row-major entry order), one column per variable.
    pub fn coefficient_matrix(&self) -> MatrixFp {
        MatrixFp::from_fn(self.modulus, self.rows * self.cols, self.nvars, |r, v| {
            self.linear_part(r / self.cols, r % self.cols)[v]
        })
    }

    /// The entries are jointly linearly independent linear forms.
    pub fn is_full_rank(&self) -> bool {
        !self.has_constants() && self.coefficient_matrix().rank() == self.rows * self.cols
    }

    pub fn entry_poly(&self, i: usize, j: usize) -> MultiPoly {
        MultiPoly::linear(self.modulus, self.linear_part(i, j), self.constant(i, j))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }
}
