//! Isomorphism from a matrix algebra to M_w through tensor isomorphism.
//!
//! The left-multiplication matrices of the algebra, and their commutant,
//! pin down a 4-tensor through the Lie algebra it must contain. That tensor
//! is Tr-IMM_{w,4} up to a per-block change of basis, and the change of
//! basis on the first two blocks conjugates the left multiplications into
//! I_w (x) F, which gives the isomorphism.

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::field::PrimeModulus;
use crate::linalg::{MatrixFp, SpanBasis, VectorFp};
use crate::oracles::MmtiOracle;
use crate::poly::{Blackbox, MultiPoly};
use crate::tensor::{degree_d_to_3, TensorError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FmaiError {
    #[error("basis matrices are linearly dependent or misshapen")]
    Input,
    #[error("algebra dimension {0} is not a perfect square")]
    SquareDimension(usize),
    #[error("product of basis elements {0} and {1} leaves the span")]
    NotClosed(usize, usize),
    #[error("commutant has dimension {found}, expected {expected}")]
    CommutantDimension { found: usize, expected: usize },
    #[error("no nonzero tensor satisfies the constraints")]
    Degenerate,
    #[error("constraint nullspace has dimension {0}, expected 1")]
    TensorNullity(usize),
    #[error("degree reduction: {0}")]
    Reduction(#[from] TensorError),
    #[error("conjugated left multiplication of basis element {0} is not I (x) F")]
    Extraction(usize),
    #[error("images are not multiplicative on basis elements {0} and {1}")]
    Multiplicativity(usize, usize),
    #[error("images do not span M_w")]
    Span,
}

impl FmaiError {
    pub fn gate(&self) -> String {
        match self {
            FmaiError::Input => "input".into(),
            FmaiError::SquareDimension(_) => "square-dimension".into(),
            FmaiError::NotClosed(..) => "closure".into(),
            FmaiError::CommutantDimension { .. } => "commutant-dimension".into(),
            FmaiError::Degenerate => "degenerate".into(),
            FmaiError::TensorNullity(_) => "tensor-nullity".into(),
            FmaiError::Reduction(e) => format!("degree-reduction/{}", e.gate()),
            FmaiError::Extraction(_) => "extraction".into(),
            FmaiError::Multiplicativity(..) => "multiplicativity".into(),
            FmaiError::Span => "span".into(),
        }
    }
}

/// A basis of a subspace of M_m that is supposed to be an algebra.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlgebraInput {
    m: usize,
    basis: Vec<MatrixFp>,
}

impl AlgebraInput {
    pub fn new(m: usize, basis: Vec<MatrixFp>) -> Result<Self, FmaiError> {
        if basis.is_empty() || basis.iter().any(|b| b.rows() != m || b.cols() != m) {
            return Err(FmaiError::Input);
        }
        let modulus = basis[0].modulus();
        if basis.iter().any(|b| b.modulus() != modulus) {
            return Err(FmaiError::Input);
        }
        let flat: Vec<VectorFp> = basis.iter().map(|b| b.flatten()).collect();
        let span = SpanBasis::from_vectors(modulus, m * m, flat.iter().map(|v| &v[..]));
        if span.len() != basis.len() {
            return Err(FmaiError::Input);
        }
        Ok(AlgebraInput { m, basis })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn basis(&self) -> &[MatrixFp] {
        &self.basis
    }

    pub fn modulus(&self) -> PrimeModulus {
        self.basis[0].modulus()
    }

    /// Coordinates of `x` in the basis, if it lies in the span.
    pub fn coordinates(&self, x: &MatrixFp) -> Option<Vec<u64>> {
        let cols: Vec<VectorFp> = self.basis.iter().map(|b| b.flatten()).collect();
        let refs: Vec<&[u64]> = cols.iter().map(|c| &c[..]).collect();
        let a = MatrixFp::from_columns(self.modulus(), self.m * self.m, &refs);
        a.solve(&x.flatten()).ok().map(|(v, _)| v.into_inner())
    }
}

/// Images of the basis elements under an isomorphism onto M_w.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlgebraIso {
    pub w: usize,
    pub images: Vec<MatrixFp>,
}

impl AlgebraIso {
    /// Multiplicative on every basis pair, and the images span M_w.
    pub fn verify(&self, alg: &AlgebraInput) -> Result<(), FmaiError> {
        let lmats = left_mult_matrices(alg)?;
        check_iso(&lmats, &self.images, self.w)
    }

    /// The image of an arbitrary element given by its coordinates.
    pub fn apply(&self, coords: &[u64]) -> MatrixFp {
        let m = self.images[0].modulus();
        let mut out = MatrixFp::zeros(m, self.w, self.w);
        for (c, f) in coords.iter().zip(&self.images) {
            out = out.add(&f.scale(*c));
        }
        out
    }
}

fn square_root(r: usize) -> Option<usize> {
    (1..=r).take_while(|w| w * w <= r).find(|w| w * w == r)
}

/// Matrices of left multiplication by each basis element, in basis coordinates:
/// column b of L_a holds the coordinates of E_a E_b.
pub fn left_mult_matrices(alg: &AlgebraInput) -> Result<Vec<MatrixFp>, FmaiError> {
    let r = alg.basis.len();
    square_root(r).ok_or(FmaiError::SquareDimension(r))?;
    let m = alg.modulus();
    let mut out = Vec::with_capacity(r);
    for (a, ea) in alg.basis.iter().enumerate() {
        let mut l = MatrixFp::zeros(m, r, r);
        for (b, eb) in alg.basis.iter().enumerate() {
            let c = alg.coordinates(&ea.mul(eb)).ok_or(FmaiError::NotClosed(a, b))?;
            for (row, v) in c.into_iter().enumerate() {
                l.set(row, b, v);
            }
        }
        out.push(l);
    }
    Ok(out)
}

/// Basis of the matrices commuting with every matrix in `mats`.
pub fn commutant_basis(modulus: PrimeModulus, s: usize, mats: &[MatrixFp]) -> Vec<MatrixFp> {
    // unknown N(r, c) sits at column r*s + c; equation (r, c) of N X - X N
    let mut sys = MatrixFp::zeros(modulus, mats.len() * s * s, s * s);
    for (t, x) in mats.iter().enumerate() {
        assert_eq!((x.rows(), x.cols()), (s, s), "commutant input shape");
        for r in 0..s {
            for c in 0..s {
                let row = t * s * s + r * s + c;
                for u in 0..s {
                    let col = r * s + u;
                    let v = modulus.add(sys.get(row, col), x.get(u, c));
                    sys.set(row, col, v);
                    let col = u * s + c;
                    let v = modulus.sub(sys.get(row, col), x.get(r, u));
                    sys.set(row, col, v);
                }
            }
        }
    }
    sys.nullspace()
        .into_iter()
        .map(|v| MatrixFp::from_data(modulus, s, s, v.into_inner()).expect("square"))
        .collect()
}

/// The 4-tensor constrained by the Lie algebra, and the dimension of the
/// space of such tensors.
#[derive(Clone, Debug)]
pub struct ConstrainedTensor {
    pub poly: MultiPoly,
    pub nullity: usize,
}

/// A Lie element acting on the flat coordinates of two consecutive blocks.
struct PairGenerator {
    first: usize,
    on_first: MatrixFp,
    on_second: MatrixFp,
}

/// Rows expressing that `g` annihilates a 4-tensor whose coefficients are
/// indexed by (a_0, a_1, a_2, a_3) in row-major order, a_k a flat block index.
fn annihilation_rows(g: &PairGenerator, b: usize, out: &mut Vec<Vec<u64>>, modulus: PrimeModulus) {
    let total = b.pow(4);
    let second = (g.first + 1) % 4;
    let stride = |k: usize| b.pow(3 - k as u32);
    for mono in 0..total {
        let mut row = vec![0u64; total];
        for (k, mat) in [(g.first, &g.on_first), (second, &g.on_second)] {
            let s = stride(k);
            let bk = (mono / s) % b;
            let base = mono - bk * s;
            for r in 0..b {
                let col = base + r * s;
                row[col] = modulus.add(row[col], mat.get(r, bk));
            }
        }
        if row.iter().any(|&v| v != 0) {
            out.push(row);
        }
    }
}

/// Nonzero 4-tensor annihilated by L^T on block k and -L on block k+1 for k
/// even, and by N^T on block k and -N on block k+1 for k odd.
pub fn build_constrained_tensor(
    modulus: PrimeModulus,
    lmats: &[MatrixFp],
    nmats: &[MatrixFp],
    w: usize,
) -> Result<ConstrainedTensor, FmaiError> {
    let b = w * w;
    let mut rows = Vec::new();
    for k in 0..4 {
        let family = if k % 2 == 0 { lmats } else { nmats };
        for x in family {
            let g = PairGenerator {
                first: k,
                on_first: x.transpose(),
                on_second: x.scale(modulus.neg(1)),
            };
            annihilation_rows(&g, b, &mut rows, modulus);
        }
    }
    let total = b.pow(4);
    let sys = if rows.is_empty() {
        MatrixFp::zeros(modulus, 1, total)
    } else {
        MatrixFp::from_rows(modulus, &rows).expect("uniform rows")
    };
    let null = sys.nullspace();
    let first = null.first().ok_or(FmaiError::Degenerate)?;
    let n = 4 * b;
    let mut poly = MultiPoly::zero(modulus, n);
    for (idx, &c) in first.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let mut e = vec![0u32; n];
        for k in 0..4 {
            let a = (idx / b.pow(3 - k as u32)) % b;
            e[k * b + a] = 1;
        }
        poly.add_term(e, c);
    }
    Ok(ConstrainedTensor {
        poly,
        nullity: null.len(),
    })
}

/// `lmats` are conjugated by `b1` into I_w (x) F_a; checks the companion
/// identity on `b0` and returns the F_a.
pub fn extract_images(lmats: &[MatrixFp], b0: &MatrixFp, b1: &MatrixFp, w: usize) -> Result<Vec<MatrixFp>, FmaiError> {
    let m = b0.modulus();
    let (b0_inv, b1_inv) = match (b0.inverse(), b1.inverse()) {
        (Ok(x), Ok(y)) => (x, y),
        _ => return Err(FmaiError::Extraction(0)),
    };
    let id = MatrixFp::identity(m, w);
    lmats
        .iter()
        .enumerate()
        .map(|(a, l)| {
            let z = b1.mul(l).mul(&b1_inv);
            let f = z.submatrix(0..w, 0..w);
            let check = b0.mul(&l.transpose()).mul(&b0_inv);
            if z != id.kron(&f) || check != id.kron(&f.transpose()) {
                return Err(FmaiError::Extraction(a));
            }
            Ok(f)
        })
        .collect()
}

fn check_iso(lmats: &[MatrixFp], images: &[MatrixFp], w: usize) -> Result<(), FmaiError> {
    let r = lmats.len();
    if images.len() != r || images.iter().any(|f| f.rows() != w || f.cols() != w) {
        return Err(FmaiError::Span);
    }
    let m = images[0].modulus();
    for a in 0..r {
        for b in 0..r {
            let mut lhs = MatrixFp::zeros(m, w, w);
            for (c, f) in images.iter().enumerate() {
                lhs = lhs.add(&f.scale(lmats[a].get(c, b)));
            }
            if lhs != images[a].mul(&images[b]) {
                return Err(FmaiError::Multiplicativity(a, b));
            }
        }
    }
    let flat: Vec<VectorFp> = images.iter().map(|f| f.flatten()).collect();
    let span = SpanBasis::from_vectors(m, w * w, flat.iter().map(|v| &v[..]));
    if span.len() != w * w {
        return Err(FmaiError::Span);
    }
    Ok(())
}

/// An isomorphism from the algebra onto M_w, found through a degree-4
/// tensor isomorphism problem.
pub fn fmai_solve(alg: &AlgebraInput, mmti: &dyn MmtiOracle, rng: &mut dyn RngCore) -> Result<AlgebraIso, FmaiError> {
    let r = alg.basis.len();
    let w = square_root(r).ok_or(FmaiError::SquareDimension(r))?;
    let m = alg.modulus();
    let lmats = left_mult_matrices(alg)?;
    let lt: Vec<MatrixFp> = lmats.iter().map(|l| l.transpose()).collect();
    let nmats = commutant_basis(m, r, &lt);
    if nmats.len() != r {
        return Err(FmaiError::CommutantDimension {
            found: nmats.len(),
            expected: r,
        });
    }
    let tensor = build_constrained_tensor(m, &lmats, &nmats, w)?;
    if tensor.nullity != 1 {
        return Err(FmaiError::TensorNullity(tensor.nullity));
    }
    let f = Blackbox::explicit(tensor.poly);
    let blocks = degree_d_to_3(&f, w, 4, mmti, rng)?;
    let images = extract_images(&lmats, &blocks[0], &blocks[1], w)?;
    check_iso(&lmats, &images, w)?;
    Ok(AlgebraIso { w, images })
}

/// A copy of M_w inside M_{w^2}: a random conjugate of I_w (x) M_w, given by
/// a randomly mixed basis.
#[derive(Clone, Debug)]
pub struct PlantedAlgebra {
    pub input: AlgebraInput,
    /// Outer conjugation, basis element t is K^-1 (I (x) X_t) K.
    pub conjugator: MatrixFp,
    /// X_t has column-major entries given by row t of this matrix.
    pub mixing: MatrixFp,
}

/// The w x w matrix with column-major entries `v`.
pub fn from_column_major(modulus: PrimeModulus, w: usize, v: &[u64]) -> MatrixFp {
    MatrixFp::from_fn(modulus, w, w, |i, j| v[j * w + i])
}

pub fn planted_algebra<R: Rng + ?Sized>(modulus: PrimeModulus, w: usize, rng: &mut R) -> PlantedAlgebra {
    let b = w * w;
    let k = MatrixFp::random_invertible(modulus, b, rng);
    let mixing = MatrixFp::random_invertible(modulus, b, rng);
    planted_algebra_with(modulus, w, k, mixing)
}

pub fn planted_algebra_with(modulus: PrimeModulus, w: usize, conjugator: MatrixFp, mixing: MatrixFp) -> PlantedAlgebra {
    let id = MatrixFp::identity(modulus, w);
    let k_inv = conjugator.inverse().expect("invertible conjugator");
    let basis = (0..w * w)
        .map(|t| {
            let x = from_column_major(modulus, w, mixing.row(t));
            k_inv.mul(&id.kron(&x)).mul(&conjugator)
        })
        .collect();
    PlantedAlgebra {
        input: AlgebraInput::new(w * w, basis).expect("independent basis"),
        conjugator,
        mixing,
    }
}

/// The diagonal matrices of size m, commutative, given by a random basis.
pub fn diagonal_algebra<R: Rng + ?Sized>(modulus: PrimeModulus, m: usize, rng: &mut R) -> AlgebraInput {
    let mix = MatrixFp::random_invertible(modulus, m, rng);
    let basis = (0..m).map(|t| MatrixFp::diagonal(modulus, mix.row(t))).collect();
    AlgebraInput::new(m, basis).expect("independent basis")
}
