//! Determinant equivalence oracles and the matrix multiplication tensor
//! isomorphism oracle built from them.
//!
//! A determinant oracle receives a polynomial g in w^2 variables and returns
//! a w x w matrix of linear forms X with det(X) = g, or refuses.

use rand::RngCore;
use thiserror::Error;

use crate::field::PrimeModulus;
use crate::linalg::MatrixFp;
use crate::poly::{Blackbox, LinearMatrix, MultiPoly};
use crate::reduction::{tensor_iso_to_det, ReductionError};

/// Points used to certify every oracle answer.
pub const ORACLE_CERTIFY_POINTS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("not equivalent to a determinant: {0}")]
    NotEquivalent(String),
}

/// A determinant query. `frame` optionally records how the query variables
/// sit inside the variables of the original input (x = frame * y); oracles
/// that know a planted secret use it, others ignore it.
#[derive(Clone, Copy, Debug)]
pub struct DetQuery<'a> {
    pub poly: &'a MultiPoly,
    pub w: usize,
    pub frame: Option<&'a MatrixFp>,
}

pub trait DetOracle: Send + Sync {
    fn query(&self, q: &DetQuery<'_>, rng: &mut dyn RngCore) -> Result<LinearMatrix, OracleError>;
}

/// det(X(r)) = g(r) at random points.
pub fn certify_det(x: &LinearMatrix, g: &MultiPoly, trials: usize, rng: &mut dyn RngCore) -> bool {
    let f = g.modulus();
    (0..trials).all(|_| {
        let r = f.random_vec(rng, g.nvars());
        x.eval(&r).det() == g.eval(&r)
    })
}

/// Symmetric Gram matrix of a quadratic form: g(x) = x^T G x.
fn gram(g: &MultiPoly) -> Option<MatrixFp> {
    let f = g.modulus();
    let n = g.nvars();
    let half = f.inv(2)?;
    let mut m = MatrixFp::zeros(f, n, n);
    for (e, c) in g.terms() {
        let idx: Vec<usize> = e
            .iter()
            .enumerate()
            .flat_map(|(i, &k)| std::iter::repeat(i).take(k as usize))
            .collect();
        match idx[..] {
            [i, j] if i == j => m.set(i, i, c),
            [i, j] => {
                let h = f.mul(c, half);
                m.set(i, j, h);
                m.set(j, i, h);
            }
            _ => return None,
        }
    }
    Some(m)
}

/// Congruence to a diagonal form: returns P with P^T G P diagonal.
fn diagonalize(g: &MatrixFp) -> (MatrixFp, Vec<u64>) {
    let f = g.modulus();
    let n = g.rows();
    let mut m = g.clone();
    let mut p = MatrixFp::identity(f, n);
    // column op: col_dst += c * col_src, mirrored on rows to stay symmetric
    let add = |m: &mut MatrixFp, p: &mut MatrixFp, dst: usize, src: usize, c: u64| {
        for r in 0..n {
            let v = f.mul_add(m.get(r, dst), c, m.get(r, src));
            m.set(r, dst, v);
            let v = f.mul_add(p.get(r, dst), c, p.get(r, src));
            p.set(r, dst, v);
        }
        for col in 0..n {
            let v = f.mul_add(m.get(dst, col), c, m.get(src, col));
            m.set(dst, col, v);
        }
    };
    for i in 0..n {
        if m.get(i, i) == 0 {
            if let Some(j) = (i + 1..n).find(|&j| m.get(j, j) != 0) {
                add(&mut m, &mut p, i, j, 1);
            } else if let Some(j) = (i + 1..n).find(|&j| m.get(i, j) != 0) {
                // hyperbolic pair: (b_i + b_j) has value 2 m_ij
                add(&mut m, &mut p, i, j, 1);
            } else {
                continue;
            }
        }
        let inv = f.inv(m.get(i, i)).expect("nonzero pivot");
        for j in i + 1..n {
            let c = f.neg(f.mul(m.get(j, i), inv));
            if c != 0 {
                add(&mut m, &mut p, j, i, c);
            }
        }
    }
    let d = (0..n).map(|i| m.get(i, i)).collect();
    (p, d)
}

/// Finds (u, v) with a u^2 + b v^2 = 1; both a and b nonzero.
fn represent_one(f: PrimeModulus, a: u64, b: u64, rng: &mut dyn RngCore) -> (u64, u64) {
    let binv = f.inv(b).expect("nonzero");
    loop {
        let u = f.random(rng);
        let rest = f.mul(f.sub(1, f.mul(a, f.mul(u, u))), binv);
        if let Some(v) = f.sqrt(rest) {
            return (u, v);
        }
    }
}

/// P with g(P u) = u_0^2 + ... + u_{n-2}^2 + e u_{n-1}^2 for a nondegenerate
/// form given by its Gram matrix; returns (P, e).
fn normal_form(g: &MatrixFp, rng: &mut dyn RngCore) -> (MatrixFp, u64) {
    let f = g.modulus();
    let n = g.rows();
    let (mut p, mut d) = diagonalize(g);
    for i in 0..n - 1 {
        let (a, b) = (d[i], d[i + 1]);
        let (u, v) = represent_one(f, a, b, rng);
        // new basis (u e_i + v e_{i+1}, -b v e_i + a u e_{i+1})
        let t = MatrixFp::from_fn(f, n, n, |r, c| match (r, c) {
            (r, c) if r == i && c == i => u,
            (r, c) if r == i + 1 && c == i => v,
            (r, c) if r == i && c == i + 1 => f.neg(f.mul(b, v)),
            (r, c) if r == i + 1 && c == i + 1 => f.mul(a, u),
            (r, c) => (r == c) as u64,
        });
        p = p.mul(&t);
        d[i] = 1;
        d[i + 1] = f.mul(a, b);
    }
    (p, d[n - 1])
}

/// Genuine determinant oracle for 2 x 2 determinants, through the
/// classification of quadratic forms in four variables.
#[derive(Clone, Copy, Debug, Default)]
pub struct QuadraticDetOracle;

impl QuadraticDetOracle {
    pub fn solve(&self, g: &MultiPoly, rng: &mut dyn RngCore) -> Result<LinearMatrix, OracleError> {
        let f = g.modulus();
        if g.nvars() != 4 {
            return Err(OracleError::NotEquivalent(format!("{} variables", g.nvars())));
        }
        let gg = gram(g).ok_or_else(|| OracleError::NotEquivalent("not a quadratic form".into()))?;
        let rank = gg.rank();
        if rank != 4 {
            return Err(OracleError::NotEquivalent(format!("rank {rank}")));
        }
        let det2 = LinearMatrix::generic(f, 2, 2);
        let det_poly = MultiPoly::var(f, 4, 0)
            .mul(&MultiPoly::var(f, 4, 3))
            .sub(&MultiPoly::var(f, 4, 1).mul(&MultiPoly::var(f, 4, 2)));
        let (pg, eg) = normal_form(&gg, rng);
        let (pd, ed) = normal_form(&gram(&det_poly).unwrap(), rng);
        let s = f
            .sqrt(f.mul(eg, f.inv(ed).unwrap()))
            .ok_or_else(|| OracleError::NotEquivalent("discriminant class".into()))?;
        let scale = MatrixFp::diagonal(f, &[1, 1, 1, s]);
        let l = pd.mul(&scale).mul(&pg.inverse().expect("congruence is invertible"));
        let x = det2.compose(&l);
        if !certify_det(&x, g, ORACLE_CERTIFY_POINTS, rng) {
            return Err(OracleError::NotEquivalent("certification".into()));
        }
        Ok(x)
    }
}

impl DetOracle for QuadraticDetOracle {
    fn query(&self, q: &DetQuery<'_>, rng: &mut dyn RngCore) -> Result<LinearMatrix, OracleError> {
        if q.w != 2 {
            return Err(OracleError::NotEquivalent(format!("width {} unsupported", q.w)));
        }
        self.solve(q.poly, rng)
    }
}

/// Answers from a list of known matrices X_j: finds one with g = beta det(X_j)
/// and returns diag(beta, 1, ..., 1) X_j, optionally transposed.
#[derive(Clone, Debug, Default)]
pub struct PlantedDetOracle {
    registry: Vec<LinearMatrix>,
    transpose: bool,
}

impl PlantedDetOracle {
    pub fn new(registry: Vec<LinearMatrix>) -> Self {
        PlantedDetOracle {
            registry,
            transpose: false,
        }
    }

    /// Return X^T instead of X; both have the queried determinant.
    pub fn transposed(mut self, yes: bool) -> Self {
        self.transpose = yes;
        self
    }

    pub fn registry(&self) -> &[LinearMatrix] {
        &self.registry
    }

    fn try_match(&self, x: &LinearMatrix, g: &MultiPoly, rng: &mut dyn RngCore) -> Option<LinearMatrix> {
        let f = g.modulus();
        let (a, ga) = (0..8)
            .map(|_| {
                let a = f.random_vec(rng, g.nvars());
                let v = g.eval(&a);
                (a, v)
            })
            .find(|(_, v)| *v != 0)?;
        let xa = x.eval(&a).det();
        let beta = f.mul(ga, f.inv(xa)?);
        let mut d = vec![1; x.rows()];
        d[0] = beta;
        let scaled = x.left_mul(&MatrixFp::diagonal(f, &d));
        certify_det(&scaled, g, ORACLE_CERTIFY_POINTS, rng).then_some(scaled)
    }
}

impl DetOracle for PlantedDetOracle {
    fn query(&self, q: &DetQuery<'_>, rng: &mut dyn RngCore) -> Result<LinearMatrix, OracleError> {
        for x in &self.registry {
            if x.rows() != q.w || x.cols() != q.w {
                continue;
            }
            let local = match q.frame {
                Some(fr) if fr.rows() == x.nvars() => x.compose(fr),
                None if x.nvars() == q.poly.nvars() => x.clone(),
                _ => continue,
            };
            if let Some(ans) = self.try_match(&local, q.poly, rng) {
                return Ok(if self.transpose { ans.transpose() } else { ans });
            }
        }
        Err(OracleError::NotEquivalent("no registered matrix matches".into()))
    }
}

/// Matrix multiplication tensor isomorphism: given a set-multilinear h over
/// three blocks of w^2 variables, finds B_0, B_1, B_2 with
/// h(x) = Tr-IMM(B_0 x_0, B_1 x_1, B_2 x_2).
pub trait MmtiOracle {
    fn solve(&self, h: &Blackbox, w: usize, rng: &mut dyn RngCore) -> Result<Vec<MatrixFp>, ReductionError>;
}

/// The d = 3 case of the tensor isomorphism reduction, driven by a
/// determinant oracle.
pub struct PipelineMmti<'a> {
    pub det: &'a dyn DetOracle,
}

impl MmtiOracle for PipelineMmti<'_> {
    fn solve(&self, h: &Blackbox, w: usize, rng: &mut dyn RngCore) -> Result<Vec<MatrixFp>, ReductionError> {
        tensor_iso_to_det(h, w, 3, self.det, None, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::seeded_rng;

    fn det2(f: PrimeModulus) -> MultiPoly {
        MultiPoly::var(f, 4, 0)
            .mul(&MultiPoly::var(f, 4, 3))
            .sub(&MultiPoly::var(f, 4, 1).mul(&MultiPoly::var(f, 4, 2)))
    }

    #[test]
    fn quadratic_oracle_identity_and_rank() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(1);
        let x = QuadraticDetOracle.solve(&det2(f), &mut rng).unwrap();
        assert!(certify_det(&x, &det2(f), 20, &mut rng));
        let sq = MultiPoly::var(f, 4, 0).pow(2);
        assert!(QuadraticDetOracle.solve(&sq, &mut rng).is_err());
    }

    #[test]
    fn quadratic_oracle_composed() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(2);
        for _ in 0..20 {
            let b = MatrixFp::random_invertible(f, 4, &mut rng);
            let g = det2(f).substitute_affine(&b, None);
            let x = QuadraticDetOracle.solve(&g, &mut rng).unwrap();
            assert!(certify_det(&x, &g, 20, &mut rng));
        }
    }

    #[test]
    fn quadratic_oracle_small_prime() {
        let f = PrimeModulus::new(1_000_003).unwrap();
        let mut rng = seeded_rng(3);
        for _ in 0..10 {
            let b = MatrixFp::random_invertible(f, 4, &mut rng);
            let g = det2(f).substitute_affine(&b, None).scale(f.random_nonzero(&mut rng));
            let x = QuadraticDetOracle.solve(&g, &mut rng).unwrap();
            assert!(certify_det(&x, &g, 20, &mut rng));
        }
    }

    #[test]
    fn planted_oracle_scalar_and_unknown() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(4);
        let x = LinearMatrix::generic(f, 2, 2).compose(&MatrixFp::random_invertible(f, 4, &mut rng));
        let oracle = PlantedDetOracle::new(vec![x.clone()]);
        let g = crate::poly::det_linear_matrix(&x, 9).unwrap();
        let q = DetQuery { poly: &g, w: 2, frame: None };
        assert_eq!(oracle.query(&q, &mut rng).unwrap(), x);
        let g5 = g.scale(5);
        let q5 = DetQuery { poly: &g5, w: 2, frame: None };
        let ans = oracle.query(&q5, &mut rng).unwrap();
        let mut expect = x.clone();
        for j in 0..2 {
            let row = x.linear_part(0, j).iter().map(|&c| f.mul(c, 5)).collect::<Vec<_>>();
            expect.set_linear(0, j, &row);
        }
        assert_eq!(ans, expect);
        let other = LinearMatrix::generic(f, 2, 2).compose(&MatrixFp::random_invertible(f, 4, &mut rng));
        let go = crate::poly::det_linear_matrix(&other, 9).unwrap();
        let qo = DetQuery { poly: &go, w: 2, frame: None };
        assert!(oracle.query(&qo, &mut rng).is_err());
        let t = PlantedDetOracle::new(vec![x.clone()]).transposed(true);
        assert_eq!(t.query(&q, &mut rng).unwrap(), x.transpose());
    }
}
