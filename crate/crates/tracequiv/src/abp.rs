//! Evaluation dimension and set-multilinear branching program reconstruction.

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::field::PrimeModulus;
use crate::linalg::MatrixFp;
use crate::poly::{Blackbox, LinearMatrix};

/// Extra rows and columns over w^4 in the evaluation dimension estimate.
const EVALDIM_SLACK: usize = 16;
const ANCHOR_ATTEMPTS: usize = 3;
pub const ABP_CERTIFY_POINTS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbpError {
    #[error("anchor matrix stayed singular after {0} attempts")]
    AnchorSingular(usize),
    #[error("reconstructed program disagrees with the blackbox")]
    CertificationFailed,
}

/// Rank of the matrix of values f(a_s, b_t), where the a_s assign the
/// variables in `fixed` and the b_t assign the rest. Never overestimates.
pub fn evaldim_vars<R: Rng + ?Sized>(f: &Blackbox, fixed: &[usize], samples: usize, rng: &mut R) -> usize {
    let m = f.modulus();
    let n = f.nvars();
    let mut is_fixed = vec![false; n];
    for &v in fixed {
        is_fixed[v] = true;
    }
    let rows: Vec<Vec<u64>> = (0..samples).map(|_| m.random_vec(rng, n)).collect();
    let cols: Vec<Vec<u64>> = (0..samples).map(|_| m.random_vec(rng, n)).collect();
    let vals = MatrixFp::from_fn(m, samples, samples, |s, t| {
        let pt: Vec<u64> = (0..n)
            .map(|v| if is_fixed[v] { rows[s][v] } else { cols[t][v] })
            .collect();
        f.eval(&pt)
    });
    vals.rank()
}

/// Evaluation dimension with respect to a union of variable blocks of size
/// `block_size`, estimated with (block_size^2 + 16) samples per side.
pub fn evaldim<R: Rng + ?Sized>(f: &Blackbox, block_size: usize, blocks: &[usize], rng: &mut R) -> usize {
    let fixed: Vec<usize> = blocks
        .iter()
        .flat_map(|&k| k * block_size..(k + 1) * block_size)
        .collect();
    evaldim_vars(f, &fixed, block_size * block_size + EVALDIM_SLACK, rng)
}

/// A product Y_0 Y_1 ... Y_{d-1} of linear matrices where layer k reads only
/// the k-th block of variables. Y_0 is a row, Y_{d-1} a column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetMultABP {
    modulus: PrimeModulus,
    block_size: usize,
    layers: Vec<LinearMatrix>,
}

impl SetMultABP {
    pub fn new(modulus: PrimeModulus, block_size: usize, layers: Vec<LinearMatrix>) -> Self {
        assert!(layers.len() >= 2, "at least two layers");
        assert_eq!(layers[0].rows(), 1);
        assert_eq!(layers.last().unwrap().cols(), 1);
        for pair in layers.windows(2) {
            assert_eq!(pair[0].cols(), pair[1].rows(), "layer shapes");
        }
        assert!(layers.iter().all(|l| l.nvars() == block_size));
        SetMultABP {
            modulus,
            block_size,
            layers,
        }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn layers(&self) -> &[LinearMatrix] {
        &self.layers
    }

    pub fn layer(&self, k: usize) -> &LinearMatrix {
        &self.layers[k]
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.cols())
            .collect()
    }

    pub fn eval(&self, x: &[u64]) -> u64 {
        let b = self.block_size;
        assert_eq!(x.len(), b * self.layers.len(), "point length");
        let mut acc = self.layers[0].eval(&x[..b]);
        for (k, l) in self.layers.iter().enumerate().skip(1) {
            acc = acc.mul(&l.eval(&x[k * b..(k + 1) * b]));
        }
        acc.get(0, 0)
    }

    pub fn to_blackbox(&self) -> Blackbox {
        let me = Arc::new(self.clone());
        Blackbox::custom(
            self.modulus,
            self.block_size * self.layers.len(),
            self.layers.len(),
            move |x| me.eval(x),
        )
    }
}

/// Builds evaluation points block by block.
struct Assembler {
    block_size: usize,
    point: Vec<u64>,
}

impl Assembler {
    fn new(block_size: usize, nblocks: usize) -> Self {
        Assembler {
            block_size,
            point: vec![0; block_size * nblocks],
        }
    }

    fn put(&mut self, k: usize, v: &[u64]) {
        let b = self.block_size;
        self.point[k * b..(k + 1) * b].copy_from_slice(v);
    }

    fn clear(&mut self, k: usize) {
        let b = self.block_size;
        self.point[k * b..(k + 1) * b].fill(0);
    }
}

/// Coefficients of the linear form x_k -> h(..., x_k, ...) with the other
/// blocks taken from `asm`.
fn linear_in_block(h: &Blackbox, asm: &mut Assembler, k: usize) -> Vec<u64> {
    let b = asm.block_size;
    let mut out = Vec::with_capacity(b);
    for v in 0..b {
        asm.clear(k);
        asm.point[k * b + v] = 1;
        out.push(h.eval(&asm.point));
    }
    asm.clear(k);
    out
}

/// Recovers a width-`width` set-multilinear program computing `h`, whose
/// variables form `nblocks` consecutive blocks of `block_size`.
///
/// Layers are built left to right. Layer k is pinned down by `width` prefix
/// anchors (points for blocks before k) and `width` suffix anchors (points
/// for blocks after k): with P the prefix values of the layers found so far
/// and R(x_k) the blackbox values between anchors, the layer is P^-1 R.
pub fn reconstruct_abp<R: Rng + ?Sized>(
    h: &Blackbox,
    nblocks: usize,
    block_size: usize,
    width: usize,
    rng: &mut R,
) -> Result<SetMultABP, AbpError> {
    assert_eq!(h.nvars(), nblocks * block_size, "blackbox arity");
    assert!(nblocks >= 2);
    for _ in 0..ANCHOR_ATTEMPTS {
        if let Some(abp) = reconstruct_once(h, nblocks, block_size, width, rng) {
            let prod = abp.to_blackbox();
            if !crate::poly::pit_equal(h, &prod, ABP_CERTIFY_POINTS, rng) {
                return Err(AbpError::CertificationFailed);
            }
            return Ok(abp);
        }
    }
    Err(AbpError::AnchorSingular(ANCHOR_ATTEMPTS))
}

fn reconstruct_once<R: Rng + ?Sized>(
    h: &Blackbox,
    nblocks: usize,
    block_size: usize,
    width: usize,
    rng: &mut R,
) -> Option<SetMultABP> {
    let m = h.modulus();
    let d = nblocks;
    let random_block = |rng: &mut R| m.random_vec(rng, block_size);
    let mut layers: Vec<LinearMatrix> = Vec::with_capacity(d);

    // first layer: Y_0[j] = h(x_0, s_j)
    let mut first = LinearMatrix::zeros(m, 1, width, block_size);
    for j in 0..width {
        let mut asm = Assembler::new(block_size, d);
        for k in 1..d {
            asm.put(k, &random_block(rng));
        }
        first.set_linear(0, j, &linear_in_block(h, &mut asm, 0));
    }
    layers.push(first);

    for k in 1..d {
        let last = k == d - 1;
        let cols = if last { 1 } else { width };
        let prefixes: Vec<Vec<Vec<u64>>> = (0..width)
            .map(|_| (0..k).map(|_| random_block(rng)).collect())
            .collect();
        let suffixes: Vec<Vec<Vec<u64>>> = (0..cols)
            .map(|_| (k + 1..d).map(|_| random_block(rng)).collect())
            .collect();
        // P[i] = (Y_0 ... Y_{k-1})(c_i)
        let mut p = MatrixFp::zeros(m, width, width);
        for (i, c) in prefixes.iter().enumerate() {
            let mut row = layers[0].eval(&c[0]);
            for (t, l) in layers.iter().enumerate().skip(1) {
                row = row.mul(&l.eval(&c[t]));
            }
            p.row_mut(i).copy_from_slice(row.row(0));
        }
        let p_inv = p.inverse().ok()?;
        let mut r = LinearMatrix::zeros(m, width, cols, block_size);
        for (i, c) in prefixes.iter().enumerate() {
            for (j, s) in suffixes.iter().enumerate() {
                let mut asm = Assembler::new(block_size, d);
                for (t, blk) in c.iter().enumerate() {
                    asm.put(t, blk);
                }
                for (t, blk) in s.iter().enumerate() {
                    asm.put(k + 1 + t, blk);
                }
                r.set_linear(i, j, &linear_in_block(h, &mut asm, k));
            }
        }
        layers.push(r.left_mul(&p_inv));
    }
    Some(SetMultABP::new(m, block_size, layers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::seeded_rng;
    use crate::poly::MultiPoly;
    use crate::trimm::{plant_instance, PlantMode, TrimmShape};

    #[test]
    fn evaldim_of_constant_is_one() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(1);
        let c = Blackbox::explicit(MultiPoly::constant(f, 8, 5));
        assert_eq!(evaldim(&c, 4, &[0], &mut rng), 1);
    }

    #[test]
    fn evaldim_trimm_pairs() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(2);
        let s = TrimmShape::new(2, 4).unwrap();
        let t = Blackbox::trimm(f, s);
        assert_eq!(evaldim(&t, 4, &[0, 1], &mut rng), 4);
        assert_eq!(evaldim(&t, 4, &[0, 2], &mut rng), 16);
    }

    #[test]
    fn reconstructs_trimm_and_planted() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(3);
        let s = TrimmShape::new(2, 3).unwrap();
        let t = Blackbox::trimm(f, s);
        let abp = reconstruct_abp(&t, 3, 4, 4, &mut rng).unwrap();
        assert_eq!(abp.widths(), vec![4, 4]);
        let s = TrimmShape::new(2, 5).unwrap();
        let inst = plant_instance(f, s, PlantMode::Block, &mut rng);
        let abp = reconstruct_abp(&inst.f, 5, 4, 4, &mut rng).unwrap();
        assert!(crate::poly::pit_equal(&inst.f, &abp.to_blackbox(), 50, &mut rng));
    }

    #[test]
    fn too_narrow_width_fails() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(4);
        let s = TrimmShape::new(2, 3).unwrap();
        let t = Blackbox::trimm(f, s);
        assert!(reconstruct_abp(&t, 3, 4, 3, &mut rng).is_err());
    }
}
