//! Tensor isomorphism to Tr-IMM in degree d, from an oracle for degree 3.
//!
//! Fixing every block past the third at random values leaves a 3-tensor;
//! the oracle's answer for it gives the first three matrices, and points
//! where those matrices become unit matrices let the remaining blocks be
//! read off the blackbox entry by entry.

use rand::RngCore;
use thiserror::Error;

use crate::abp::{reconstruct_abp, AbpError};
use crate::linalg::{LinalgError, MatrixFp, VectorFp};
use crate::oracles::MmtiOracle;
use crate::poly::{Blackbox, LinearMatrix};
use crate::reduction::{ReductionError, FINAL_PIT_TRIALS};
use crate::trimm::{verify_witness, TrimmShape, Witness};

/// Fresh restriction points tried before giving up.
const RESTRICTION_ATTEMPTS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TensorError {
    #[error("{n} variables do not form {d} blocks of width {w}")]
    Shape { n: usize, w: usize, d: usize },
    #[error("degree-3 oracle: {0}")]
    Mmti(#[from] ReductionError),
    #[error(transparent)]
    Abp(#[from] AbpError),
    #[error("linear forms of block {0} are dependent")]
    Singular(usize),
    #[error("entry ({i}, {j}) of block {k} is not a linear form")]
    NotLinear { k: usize, i: usize, j: usize },
    #[error("final identity test failed")]
    Certification,
}

impl TensorError {
    pub fn gate(&self) -> String {
        match self {
            TensorError::Shape { .. } => "dimension".into(),
            TensorError::Mmti(e) => format!("mmti/{}", e.gate()),
            TensorError::Abp(_) => "abp-reconstruction".into(),
            TensorError::Singular(_) => "unit-point".into(),
            TensorError::NotLinear { .. } => "linearity".into(),
            TensorError::Certification => "final-pit".into(),
        }
    }
}

/// A point b with X(b) = E_ij, for X with independent entries.
pub fn unit_point(x: &LinearMatrix, i: usize, j: usize) -> Result<VectorFp, LinalgError> {
    let c = x.coefficient_matrix();
    if !c.is_square() {
        return Err(LinalgError::ShapeMismatch(format!("{}x{} coefficients", c.rows(), c.cols())));
    }
    let inv = c.inverse()?;
    let target = VectorFp::unit(x.modulus(), c.rows(), i * x.cols() + j);
    Ok(VectorFp::new(x.modulus(), inv.mul_vec(&target)))
}

/// The linear matrix whose entry (i, j) is given by row offset(k, i, j) of B_k.
fn block_to_matrix(shape: &TrimmShape, k: usize, b: &MatrixFp) -> LinearMatrix {
    LinearMatrix::from_coefficient_rows(b, shape.w(), shape.w(), |i, j| shape.offset(k, i, j))
}

fn matrix_to_block(shape: &TrimmShape, k: usize, x: &LinearMatrix) -> MatrixFp {
    let b = shape.block_size();
    let mut out = MatrixFp::zeros(x.modulus(), b, b);
    for i in 0..shape.w() {
        for j in 0..shape.w() {
            out.row_mut(shape.offset(k, i, j)).copy_from_slice(x.linear_part(i, j));
        }
    }
    out
}

/// Evaluation points with one slot per block.
struct Slots<'a> {
    f: &'a Blackbox,
    shape: TrimmShape,
    point: Vec<u64>,
}

impl<'a> Slots<'a> {
    fn new(f: &'a Blackbox, shape: TrimmShape) -> Self {
        Slots {
            f,
            shape,
            point: vec![0; shape.n()],
        }
    }

    fn put(&mut self, k: usize, v: &[u64]) -> &mut Self {
        let r = self.shape.block_range(k);
        self.point[r].copy_from_slice(v);
        self
    }

    /// Coefficients of block k -> f(...), checked to be linear without
    /// constant term at a random point.
    fn linear_form(&mut self, k: usize, rng: &mut dyn RngCore) -> Option<Vec<u64>> {
        let m = self.f.modulus();
        let b = self.shape.block_size();
        let zero = vec![0; b];
        self.put(k, &zero);
        if self.f.eval(&self.point) != 0 {
            return None;
        }
        let mut coeffs = Vec::with_capacity(b);
        let mut unit = zero.clone();
        for v in 0..b {
            unit[v] = 1;
            self.put(k, &unit);
            coeffs.push(self.f.eval(&self.point));
            unit[v] = 0;
        }
        let r = m.random_vec(rng, b);
        self.put(k, &r);
        let expect = coeffs.iter().zip(&r).fold(0, |acc, (&c, &x)| m.mul_add(acc, c, x));
        (self.f.eval(&self.point) == expect).then_some(coeffs)
    }
}

/// Per-block matrices B_0..B_{d-1} with f(x) = Tr-IMM(B_0 x_0, ..., B_{d-1} x_{d-1})
/// for a set-multilinear f over d consecutive blocks of w^2 variables.
pub fn degree_d_to_3(
    f: &Blackbox,
    w: usize,
    d: usize,
    mmti: &dyn MmtiOracle,
    rng: &mut dyn RngCore,
) -> Result<Vec<MatrixFp>, TensorError> {
    let shape_err = TensorError::Shape { n: f.nvars(), w, d };
    let shape = TrimmShape::new(w, d).map_err(|_| shape_err.clone())?;
    if f.nvars() != shape.n() {
        return Err(shape_err);
    }
    if d == 3 {
        return Ok(mmti.solve(f, w, rng)?);
    }
    let mut last = TensorError::Certification;
    for _ in 0..RESTRICTION_ATTEMPTS {
        match attempt(f, shape, mmti, rng) {
            Ok(b) => return Ok(b),
            Err(e @ (TensorError::Mmti(_) | TensorError::Abp(_) | TensorError::Singular(_))) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

fn attempt(f: &Blackbox, shape: TrimmShape, mmti: &dyn MmtiOracle, rng: &mut dyn RngCore) -> Result<Vec<MatrixFp>, TensorError> {
    let m = f.modulus();
    let (w, d, b) = (shape.w(), shape.d(), shape.block_size());

    // the first three blocks, with the rest fixed at random points
    let free: Vec<usize> = (0..3 * b).collect();
    let h = f.restrict(free, m.random_vec(rng, shape.n()));
    let first = mmti.solve(&h, w, rng)?;
    let three = TrimmShape::new(w, 3).expect("valid shape");
    let mut xs: Vec<LinearMatrix> = first
        .iter()
        .enumerate()
        .map(|(k, bk)| block_to_matrix(&three, k, bk))
        .collect();

    // unit points, units[k][i][j]
    let units_of = |k: usize, x: &LinearMatrix| -> Result<Vec<Vec<Vec<u64>>>, TensorError> {
        (0..w)
            .map(|i| {
                (0..w)
                    .map(|j| unit_point(x, i, j).map(|v| v.into_inner()).map_err(|_| TensorError::Singular(k)))
                    .collect()
            })
            .collect()
    };
    let mut units: Vec<Vec<Vec<Vec<u64>>>> = Vec::with_capacity(d);
    for (k, x) in xs.iter().enumerate() {
        units.push(units_of(k, x)?);
    }

    if d >= 5 {
        // g = f(b0_00, b1_00, b2_00, x_3, ..., x_{d-1}) as a width-w program
        let mut base = vec![0u64; shape.n()];
        for k in 0..3 {
            base[shape.block_range(k)].copy_from_slice(&units[k][0][0]);
        }
        let free: Vec<usize> = (3 * b..shape.n()).collect();
        let g = f.restrict(free, base);
        let abp = reconstruct_abp(&g, d - 3, b, w, rng)?;
        let layers = abp.layers();
        // Y_{d-1}(b_j) = e_j
        let last = &layers[d - 4];
        let coeffs = last.coefficient_matrix();
        let ends: Vec<Vec<u64>> = (0..w)
            .map(|j| {
                coeffs
                    .solve(&VectorFp::unit(m, w, j))
                    .map(|(x, _)| x.into_inner())
                    .map_err(|_| TensorError::Singular(d - 1))
            })
            .collect::<Result<_, _>>()?;
        let middle: Vec<LinearMatrix> = layers[1..d - 4].to_vec();
        let mut mid_units = Vec::with_capacity(middle.len());
        for (t, x) in middle.iter().enumerate() {
            mid_units.push(units_of(4 + t, x)?);
        }
        // X_3(i, j) = f(b0_00, b1_00, b2_0i, x_3, b4_jj, ..., b_j)
        let mut x3 = LinearMatrix::zeros(m, w, w, b);
        for i in 0..w {
            for j in 0..w {
                let mut s = Slots::new(f, shape);
                s.put(0, &units[0][0][0]).put(1, &units[1][0][0]).put(2, &units[2][0][i]);
                for (t, u) in mid_units.iter().enumerate() {
                    s.put(4 + t, &u[j][j]);
                }
                s.put(d - 1, &ends[j]);
                let c = s.linear_form(3, rng).ok_or(TensorError::NotLinear { k: 3, i, j })?;
                x3.set_linear(i, j, &c);
            }
        }
        units.push(units_of(3, &x3)?);
        xs.push(x3);
        xs.extend(middle);
        units.extend(mid_units);
    }

    // X_{d-1}(i, j) = f(b0_j0, b1_00, ..., b_{d-3}_00, b_{d-2}_0i, x_{d-1})
    let mut xl = LinearMatrix::zeros(m, w, w, b);
    for i in 0..w {
        for j in 0..w {
            let mut s = Slots::new(f, shape);
            s.put(0, &units[0][j][0]);
            for (k, u) in units.iter().enumerate().take(d - 2).skip(1) {
                s.put(k, &u[0][0]);
            }
            s.put(d - 2, &units[d - 2][0][i]);
            let c = s.linear_form(d - 1, rng).ok_or(TensorError::NotLinear { k: d - 1, i, j })?;
            xl.set_linear(i, j, &c);
        }
    }
    xs.push(xl);

    let blocks: Vec<MatrixFp> = xs
        .iter()
        .enumerate()
        .map(|(k, x)| matrix_to_block(&shape, k, x))
        .collect();
    if let Some(k) = blocks.iter().position(|bk| bk.det() == 0) {
        return Err(TensorError::Singular(k));
    }
    let witness = Witness::Blocks(blocks);
    if !verify_witness(f, &shape, &witness, FINAL_PIT_TRIALS, rng) {
        return Err(TensorError::Certification);
    }
    match witness {
        Witness::Blocks(b) => Ok(b),
        Witness::Full(_) => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{seeded_rng, PrimeModulus};
    use crate::oracles::{PipelineMmti, QuadraticDetOracle};
    use crate::reduction::blocks_certify;
    use crate::trimm::{plant_instance, PlantMode};

    #[test]
    fn unit_point_cases() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(1);
        let g = LinearMatrix::generic(f, 2, 2);
        assert_eq!(unit_point(&g, 1, 0).unwrap().into_inner(), vec![0, 0, 1, 0]);
        let x = g.compose(&MatrixFp::random_invertible(f, 4, &mut rng));
        for i in 0..2 {
            for j in 0..2 {
                let b = unit_point(&x, i, j).unwrap();
                let e = x.eval(&b);
                assert!((0..2).all(|r| (0..2).all(|c| e.get(r, c) == ((r, c) == (i, j)) as u64)));
            }
        }
        let mut bad = g.clone();
        bad.set_linear(1, 1, &[1, 0, 0, 0]);
        assert_eq!(unit_point(&bad, 0, 0), Err(LinalgError::Singular));
    }

    #[test]
    fn planted_degree_four_and_six() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(2);
        let mmti = PipelineMmti { det: &QuadraticDetOracle };
        for d in [4, 5, 6] {
            let s = TrimmShape::new(2, d).unwrap();
            let inst = plant_instance(f, s, PlantMode::Block, &mut rng);
            let b = degree_d_to_3(&inst.f, 2, d, &mmti, &mut rng).unwrap();
            assert!(blocks_certify(&inst.f, 2, &b, 50, &mut rng), "d = {d}");
        }
    }

    #[test]
    fn random_tensor_rejected() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(3);
        let mut terms = Vec::new();
        for a in 0..4u32 {
            for b in 0..4u32 {
                for c in 0..4u32 {
                    for e in 0..4u32 {
                        let mut exp = vec![0u32; 16];
                        for (k, v) in [a, b, c, e].into_iter().enumerate() {
                            exp[4 * k + v as usize] = 1;
                        }
                        terms.push((exp, f.random(&mut rng)));
                    }
                }
            }
        }
        let p = crate::poly::MultiPoly::from_terms(f, 16, terms);
        let mmti = PipelineMmti { det: &QuadraticDetOracle };
        assert!(degree_d_to_3(&Blackbox::explicit(p), 2, 4, &mmti, &mut rng).is_err());
    }
}
