//! From equivalence to Tr-IMM down to determinant equivalence.
//!
//! `trace_equivalence` finds A with f(x) = Tr-IMM(A x). It first moves to a
//! basis where f becomes set-multilinear over d blocks (`trace_to_tensor_iso`),
//! then recovers per-block matrices from a branching program of the
//! resulting tensor and determinant oracle answers (`tensor_iso_to_det`).

use std::fmt;

use rand::RngCore;
use thiserror::Error;

use crate::abp::{evaldim, reconstruct_abp, AbpError};
use crate::field::PrimeModulus;
use crate::lie::{irreducible_invariant_subspaces, Reject};
use crate::linalg::MatrixFp;
use crate::oracles::{DetOracle, DetQuery, OracleError};
use crate::poly::{det_linear_matrix, pit_equal, wth_root, Blackbox, LinearMatrix, PolyError, DEFAULT_DET_BOUND};
use crate::trimm::{verify_witness, TrimmShape, Witness};

/// Points used by the final identity test of every pipeline.
pub const FINAL_PIT_TRIALS: usize = 30;
const INTERTWINER_ATTEMPTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReductionError {
    #[error("{n} variables do not split into {d} blocks of a square size")]
    Dimension { n: usize, d: usize },
    #[error(transparent)]
    Subspaces(#[from] Reject),
    #[error("invariant subspaces of dimension {0} are not w^2 for the expected w")]
    SubspaceDimension(usize),
    #[error("block adjacency structure broken: {0}")]
    Ordering(String),
    #[error(transparent)]
    Abp(#[from] AbpError),
    #[error(transparent)]
    Root(#[from] PolyError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("intertwiner: {0}")]
    Intertwiner(String),
    #[error("kronecker structure violated: {0}")]
    Structure(String),
    #[error("recovered matrix for block {0} is singular")]
    Singular(usize),
    #[error("final identity test failed")]
    Certification,
}

impl ReductionError {
    /// Short stable name of the failing gate.
    pub fn gate(&self) -> String {
        match self {
            ReductionError::Dimension { .. } => "dimension".into(),
            ReductionError::Subspaces(Reject(g)) => match g {
                crate::lie::Gate::LieCertification => "lie-certification".into(),
                crate::lie::Gate::NotSquarefree => "square-free".into(),
                crate::lie::Gate::SubspaceCount { .. } => "subspace-count".into(),
                crate::lie::Gate::UnequalDimensions(_) => "subspace-dimensions".into(),
            },
            ReductionError::SubspaceDimension(_) => "subspace-dimensions".into(),
            ReductionError::Ordering(_) => "ordering".into(),
            ReductionError::Abp(_) => "abp-reconstruction".into(),
            ReductionError::Root(_) => "wth-root".into(),
            ReductionError::Oracle(_) => "det-oracle".into(),
            ReductionError::Intertwiner(_) => "intertwiner".into(),
            ReductionError::Structure(_) => "kronecker-structure".into(),
            ReductionError::Singular(_) => "singular-block".into(),
            ReductionError::Certification => "final-pit".into(),
        }
    }
}

fn isqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// Block order of a set-multilinear polynomial whose blocks are those of
/// Tr-IMM up to permutation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderingReport {
    /// Position k of the cycle holds original block tau[k].
    pub tau: Vec<usize>,
    /// Pairwise evaluation dimensions (symmetric, zero diagonal).
    pub table: Vec<Vec<usize>>,
}

/// Recovers the cyclic order of the blocks: two blocks are neighbours
/// exactly when fixing both leaves evaluation dimension w^2.
pub fn order_blocks(g: &Blackbox, w: usize, d: usize, rng: &mut dyn RngCore) -> Result<OrderingReport, ReductionError> {
    let b = w * w;
    let mut table = vec![vec![0usize; d]; d];
    if d == 3 {
        // every pair is adjacent
        for (r, row) in table.iter_mut().enumerate() {
            for (s, v) in row.iter_mut().enumerate() {
                if r != s {
                    *v = b;
                }
            }
        }
        return Ok(OrderingReport { tau: vec![0, 1, 2], table });
    }
    for r in 0..d {
        for s in r + 1..d {
            let v = evaldim(g, b, &[r, s], rng);
            table[r][s] = v;
            table[s][r] = v;
        }
    }
    let neighbours: Vec<Vec<usize>> = (0..d)
        .map(|r| (0..d).filter(|&s| s != r && table[r][s] == b).collect())
        .collect();
    if let Some(r) = neighbours.iter().position(|nb| nb.len() != 2) {
        return Err(ReductionError::Ordering(format!(
            "block {r} has {} neighbours",
            neighbours[r].len()
        )));
    }
    let mut tau = vec![0, neighbours[0][0]];
    while tau.len() < d {
        let (prev, cur) = (tau[tau.len() - 2], tau[tau.len() - 1]);
        let next = if neighbours[cur][0] == prev {
            neighbours[cur][1]
        } else {
            neighbours[cur][0]
        };
        if tau.contains(&next) {
            return Err(ReductionError::Ordering("cycle closes early".into()));
        }
        tau.push(next);
    }
    if !neighbours[tau[d - 1]].contains(&0) {
        return Err(ReductionError::Ordering("chain does not close".into()));
    }
    Ok(OrderingReport { tau, table })
}

/// Output of the first stage: f(A' y) is a tensor isomorphic to Tr-IMM.
#[derive(Clone, Debug)]
pub struct TensorFrame {
    pub w: usize,
    pub a_prime: MatrixFp,
    pub ordering: OrderingReport,
}

/// Finds A' such that f(A' y) is set-multilinear over d consecutive blocks
/// in Tr-IMM's cyclic order. d is the degree bound of f.
pub fn trace_to_tensor_iso(f: &Blackbox, rng: &mut dyn RngCore) -> Result<TensorFrame, ReductionError> {
    let n = f.nvars();
    let d = f.degree();
    let dimension = ReductionError::Dimension { n, d };
    if d < 3 || n % d != 0 {
        return Err(dimension);
    }
    let w = match isqrt(n / d) {
        Some(w) if w >= 2 => w,
        _ => return Err(dimension),
    };
    let spaces = irreducible_invariant_subspaces(f, rng)?;
    if let Some(s) = spaces.iter().find(|s| s.dim() != w * w) {
        return Err(ReductionError::SubspaceDimension(s.dim()));
    }
    let m = f.modulus();
    let parts: Vec<MatrixFp> = spaces.iter().map(|s| s.as_columns(m)).collect();
    let refs: Vec<&MatrixFp> = parts.iter().collect();
    let v = MatrixFp::hstack(&refs).expect("equal heights");
    let h0 = f.compose(&v);
    let ordering = order_blocks(&h0, w, d, rng)?;
    let ordered: Vec<&MatrixFp> = ordering.tau.iter().map(|&k| &parts[k]).collect();
    let a_prime = MatrixFp::hstack(&ordered).expect("equal heights");
    Ok(TensorFrame { w, a_prime, ordering })
}

/// Solution of T' Y' = Z S' (or with Z transposed).
#[derive(Clone, Debug)]
pub struct Intertwiner {
    pub t: MatrixFp,
    pub s: MatrixFp,
    pub transposed: bool,
}

/// Basis of all (T, S) with T Y = Z S, each flattened as [T | S] row-major.
pub fn intertwiner_space(y: &LinearMatrix, z: &LinearMatrix) -> Vec<crate::linalg::VectorFp> {
    let m = y.modulus();
    let wd = y.rows();
    assert_eq!((y.cols(), z.rows(), z.cols()), (wd, wd, wd), "square layers");
    assert_eq!(y.nvars(), z.nvars(), "same variables");
    let nv = y.nvars() + 1;
    let sq = wd * wd;
    let mut sys = MatrixFp::zeros(m, sq * nv, 2 * sq);
    for i in 0..wd {
        for j in 0..wd {
            for v in 0..nv {
                let row = sys.row_mut((i * wd + j) * nv + v);
                for l in 0..wd {
                    row[i * wd + l] = y.entry(l, j)[v];
                    row[sq + l * wd + j] = m.neg(z.entry(i, l)[v]);
                }
            }
        }
    }
    sys.nullspace()
}

fn split_solution(m: PrimeModulus, wd: usize, v: &[u64]) -> (MatrixFp, MatrixFp) {
    let sq = wd * wd;
    let t = MatrixFp::from_data(m, wd, wd, v[..sq].to_vec()).unwrap();
    let s = MatrixFp::from_data(m, wd, wd, v[sq..].to_vec()).unwrap();
    (t, s)
}

/// Invertible T', S' with T' Y' = Z S' or T' Y' = Z^T S'; exactly one of
/// the two systems may have nonzero solutions.
pub fn solve_intertwiner(y: &LinearMatrix, z: &LinearMatrix, rng: &mut dyn RngCore) -> Result<Intertwiner, ReductionError> {
    let m = y.modulus();
    let wd = y.rows();
    let plain = intertwiner_space(y, z);
    let zt = z.transpose();
    let trans = intertwiner_space(y, &zt);
    let (basis, transposed) = match (plain.is_empty(), trans.is_empty()) {
        (false, true) => (plain, false),
        (true, false) => (trans, true),
        (true, true) => return Err(ReductionError::Intertwiner("no nonzero solution".into())),
        (false, false) => return Err(ReductionError::Intertwiner("both branches solvable".into())),
    };
    for _ in 0..INTERTWINER_ATTEMPTS {
        let mut v = vec![0u64; 2 * wd * wd];
        for b in &basis {
            let c = m.random(rng);
            for (x, &y) in v.iter_mut().zip(b.iter()) {
                *x = m.mul_add(*x, c, y);
            }
        }
        let (t, s) = split_solution(m, wd, &v);
        if t.det() != 0 && s.det() != 0 {
            return Ok(Intertwiner { t, s, transposed });
        }
    }
    Err(ReductionError::Intertwiner("no invertible solution sampled".into()))
}

/// Splits Y = (M (x) I_w)(I_w (x) X): block (i, j) of Y is m_ij X.
pub fn factor_kron(y: &LinearMatrix, w: usize) -> Result<(MatrixFp, LinearMatrix), ReductionError> {
    let m = y.modulus();
    if y.rows() != w * w || y.cols() != w * w {
        return Err(ReductionError::Structure(format!("{}x{} is not {w}^2 square", y.rows(), y.cols())));
    }
    let block = |i: usize, j: usize| y.block(i * w, j * w, w, w);
    let (bi, bj) = (0..w * w)
        .map(|t| (t / w, t % w))
        .find(|&(i, j)| !block(i, j).is_zero())
        .ok_or_else(|| ReductionError::Structure("all blocks vanish".into()))?;
    let x = block(bi, bj);
    // a fixed nonzero coefficient of X
    let (pi, pj, pv) = (0..w)
        .flat_map(|i| (0..w).map(move |j| (i, j)))
        .flat_map(|(i, j)| (0..=x.nvars()).map(move |v| (i, j, v)))
        .find(|&(i, j, v)| x.entry(i, j)[v] != 0)
        .expect("nonzero block");
    let pivot_inv = m.inv(x.entry(pi, pj)[pv]).unwrap();
    let mut mm = MatrixFp::zeros(m, w, w);
    for i in 0..w {
        for j in 0..w {
            let b = block(i, j);
            let r = m.mul(b.entry(pi, pj)[pv], pivot_inv);
            if b != x.scale(r) {
                return Err(ReductionError::Structure(format!("block ({i}, {j}) is not a multiple")));
            }
            mm.set(i, j, r);
        }
    }
    Ok((mm, x))
}

/// Columns of `frame` belonging to block k.
fn frame_block(frame: &MatrixFp, k: usize, b: usize) -> MatrixFp {
    frame.submatrix(0..frame.rows(), k * b..(k + 1) * b)
}

/// Per-block matrices B_0..B_{d-1} with h(y) = Tr-IMM(B_0 y_0, ..., B_{d-1} y_{d-1}),
/// where h is set-multilinear over d consecutive blocks of w^2 variables.
///
/// `frame`, when given, is the matrix A' with h(y) = f(A' y) for the
/// original input f; it is passed along with determinant queries.
pub fn tensor_iso_to_det(
    h: &Blackbox,
    w: usize,
    d: usize,
    det: &dyn DetOracle,
    frame: Option<&MatrixFp>,
    rng: &mut dyn RngCore,
) -> Result<Vec<MatrixFp>, ReductionError> {
    let m = h.modulus();
    let b = w * w;
    let n = b * d;
    if h.nvars() != n || d < 3 {
        return Err(ReductionError::Dimension { n: h.nvars(), d });
    }
    let identity;
    let frame = match frame {
        Some(fr) => fr,
        None => {
            identity = MatrixFp::identity(m, n);
            &identity
        }
    };
    let abp = reconstruct_abp(h, d, b, b, rng)?;
    let yp = abp.layers();

    // middle layers: g_k, oracle answer, intertwiner
    let mut xs: Vec<LinearMatrix> = Vec::with_capacity(d);
    let mut ts: Vec<MatrixFp> = Vec::with_capacity(d);
    let mut last_s = None;
    for k in 1..d - 1 {
        let detp = det_linear_matrix(&yp[k], DEFAULT_DET_BOUND)?;
        let g = wth_root(&detp, w, rng)?;
        let fb = frame_block(frame, k, b);
        let query = DetQuery { poly: &g, w, frame: Some(&fb) };
        let xk = det.query(&query, rng)?;
        let z = xk.kron_identity_left(w);
        let it = solve_intertwiner(&yp[k], &z, rng)?;
        xs.push(if it.transposed { xk.transpose() } else { xk });
        ts.push(it.t);
        last_s = Some(it.s);
    }
    let s_last = last_s.expect("d >= 3");
    let inv = |mat: &MatrixFp| mat.inverse().map_err(|_| ReductionError::Intertwiner("singular".into()));

    // Y-hat layers; ts[k-1] is T'_{k-1}
    let mut yhat: Vec<LinearMatrix> = Vec::with_capacity(d);
    yhat.push(yp[0].right_mul(&inv(&ts[0])?));
    for k in 1..d - 2 {
        yhat.push(yp[k].left_mul(&ts[k - 1]).right_mul(&inv(&ts[k])?));
    }
    yhat.push(yp[d - 2].left_mul(&ts[d - 3]).right_mul(&inv(&s_last)?));
    yhat.push(yp[d - 1].left_mul(&s_last));

    let mut mprod = MatrixFp::identity(m, w);
    let mut middle: Vec<LinearMatrix> = Vec::with_capacity(d - 2);
    for layer in &yhat[1..d - 1] {
        let (mk, xk) = factor_kron(layer, w)?;
        mprod = mprod.mul(&mk);
        middle.push(xk);
    }
    let ybar = yhat[d - 1].left_mul(&mprod.kron(&MatrixFp::identity(m, w)));
    let x_first = LinearMatrix::from_fn(m, w, w, b, |i, j| yhat[0].linear_part(0, i * w + j).to_vec());
    let x_last = LinearMatrix::from_fn(m, w, w, b, |i, j| ybar.linear_part(j * w + i, 0).to_vec());

    let mut all = Vec::with_capacity(d);
    all.push(x_first);
    all.extend(middle);
    all.push(x_last);
    let shape = TrimmShape::new(w, d).map_err(|_| ReductionError::Dimension { n, d })?;
    let blocks: Vec<MatrixFp> = all
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let mut bk = MatrixFp::zeros(m, b, b);
            for i in 0..w {
                for j in 0..w {
                    bk.row_mut(shape.offset(k, i, j)).copy_from_slice(x.linear_part(i, j));
                }
            }
            bk
        })
        .collect();
    if let Some(k) = blocks.iter().position(|bk| bk.det() == 0) {
        return Err(ReductionError::Singular(k));
    }
    let witness = Witness::Blocks(blocks);
    if !verify_witness(h, &shape, &witness, FINAL_PIT_TRIALS, rng) {
        return Err(ReductionError::Certification);
    }
    match witness {
        Witness::Blocks(b) => Ok(b),
        Witness::Full(_) => unreachable!(),
    }
}

/// A certified equivalence f(x) = Tr-IMM_{w,d}(A x).
#[derive(Clone, Debug)]
pub struct TraceEquivalence {
    pub w: usize,
    pub a: MatrixFp,
}

/// Decides whether f is equivalent to Tr-IMM_{w,d} for some w, where d is
/// the degree bound of f, and returns a certified witness.
pub fn trace_equivalence(f: &Blackbox, det: &dyn DetOracle, rng: &mut dyn RngCore) -> Result<TraceEquivalence, ReductionError> {
    let d = f.degree();
    let frame = trace_to_tensor_iso(f, rng)?;
    let h = f.compose(&frame.a_prime);
    let blocks = tensor_iso_to_det(&h, frame.w, d, det, Some(&frame.a_prime), rng)?;
    let bmat = MatrixFp::assemble_block_diagonal(&blocks).expect("square blocks");
    let inv = frame
        .a_prime
        .inverse()
        .map_err(|_| ReductionError::Singular(usize::MAX))?;
    let a = bmat.mul(&inv);
    let shape = TrimmShape::new(frame.w, d).map_err(|_| ReductionError::Dimension { n: f.nvars(), d })?;
    if !verify_witness(f, &shape, &Witness::Full(a.clone()), FINAL_PIT_TRIALS, rng) {
        return Err(ReductionError::Certification);
    }
    Ok(TraceEquivalence { w: frame.w, a })
}

impl fmt::Display for OrderingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tau = {:?}", self.tau)
    }
}

/// Identity test between a blackbox and Tr-IMM composed with block matrices.
pub fn blocks_certify(h: &Blackbox, w: usize, blocks: &[MatrixFp], trials: usize, rng: &mut dyn RngCore) -> bool {
    let Ok(shape) = TrimmShape::new(w, blocks.len()) else {
        return false;
    };
    let Ok(bm) = MatrixFp::assemble_block_diagonal(blocks) else {
        return false;
    };
    if bm.rows() != h.nvars() {
        return false;
    }
    let g = Blackbox::trimm(h.modulus(), shape).compose(&bm);
    pit_equal(h, &g, trials, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::seeded_rng;
    use crate::oracles::{PlantedDetOracle, QuadraticDetOracle};
    use crate::trimm::{plant_instance, PlantMode};

    #[test]
    fn kron_factor_cases() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(1);
        let x = LinearMatrix::generic(f, 2, 2);
        let (mm, xx) = factor_kron(&x.kron_identity_left(2), 2).unwrap();
        assert_eq!(mm, MatrixFp::identity(f, 2));
        assert_eq!(xx, x);
        let mr = MatrixFp::random_invertible(f, 2, &mut rng);
        let y = x.kron_identity_left(2).left_mul(&mr.kron(&MatrixFp::identity(f, 2)));
        let (mm, xx) = factor_kron(&y, 2).unwrap();
        let back = xx.kron_identity_left(2).left_mul(&mm.kron(&MatrixFp::identity(f, 2)));
        assert_eq!(back, y);
        let mut bad = y.clone();
        bad.set_linear(3, 3, &[1, 2, 3, 4]);
        assert!(matches!(factor_kron(&bad, 2), Err(ReductionError::Structure(_))));
    }

    #[test]
    fn intertwiner_branches() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(2);
        let z = LinearMatrix::generic(f, 2, 2).kron_identity_left(2);
        assert_eq!(intertwiner_space(&z, &z).len(), 4);
        assert!(intertwiner_space(&z.transpose(), &z).is_empty());
        let it = solve_intertwiner(&z, &z, &mut rng).unwrap();
        assert!(!it.transposed);
        let it = solve_intertwiner(&z.transpose(), &z, &mut rng).unwrap();
        assert!(it.transposed);
    }

    #[test]
    fn tensor_iso_planted_block_mode() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(3);
        let s = TrimmShape::new(2, 3).unwrap();
        let inst = plant_instance(f, s, PlantMode::Block, &mut rng);
        let b = tensor_iso_to_det(&inst.f, 2, 3, &QuadraticDetOracle, None, &mut rng).unwrap();
        assert!(blocks_certify(&inst.f, 2, &b, 50, &mut rng));

        let s = TrimmShape::new(2, 5).unwrap();
        let inst = plant_instance(f, s, PlantMode::Block, &mut rng);
        let oracle = PlantedDetOracle::new(inst.secret_matrices());
        let b = tensor_iso_to_det(&inst.f, 2, 5, &oracle, None, &mut rng).unwrap();
        assert!(blocks_certify(&inst.f, 2, &b, 50, &mut rng));
    }

    #[test]
    fn tensor_iso_transposed_answers() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(4);
        let s = TrimmShape::new(2, 4).unwrap();
        let inst = plant_instance(f, s, PlantMode::Block, &mut rng);
        let oracle = PlantedDetOracle::new(inst.secret_matrices()).transposed(true);
        let b = tensor_iso_to_det(&inst.f, 2, 4, &oracle, None, &mut rng).unwrap();
        assert!(blocks_certify(&inst.f, 2, &b, 50, &mut rng));
    }

    #[test]
    fn trace_equivalence_full_mode() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(5);
        let s = TrimmShape::new(2, 3).unwrap();
        let inst = plant_instance(f, s, PlantMode::Full, &mut rng);
        let res = trace_equivalence(&inst.f, &QuadraticDetOracle, &mut rng).unwrap();
        assert_eq!(res.w, 2);
        assert!(verify_witness(&inst.f, &s, &Witness::Full(res.a), 100, &mut rng));
    }

    #[test]
    fn dimension_gate() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(6);
        let p = crate::poly::MultiPoly::var(f, 3, 0)
            .mul(&crate::poly::MultiPoly::var(f, 3, 1))
            .mul(&crate::poly::MultiPoly::var(f, 3, 2));
        let err = trace_equivalence(&Blackbox::explicit(p), &QuadraticDetOracle, &mut rng).unwrap_err();
        assert!(matches!(err, ReductionError::Dimension { .. }));
    }

    #[test]
    fn ordering_recovers_shuffle() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(7);
        let s = TrimmShape::new(2, 5).unwrap();
        let t = Blackbox::trimm(f, s);
        let rep = order_blocks(&t, 2, 5, &mut rng).unwrap();
        let fwd: Vec<usize> = (0..5).collect();
        let rotations: Vec<Vec<usize>> = (0..5)
            .flat_map(|r| {
                let a: Vec<usize> = fwd.iter().map(|&k| (k + r) % 5).collect();
                let b: Vec<usize> = fwd.iter().map(|&k| (5 + r - k) % 5).collect();
                [a, b]
            })
            .collect();
        assert!(rotations.contains(&rep.tau));
    }
}
