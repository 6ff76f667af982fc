use std::collections::HashMap;

use rand::Rng;

use super::{LinearMatrix, MultiPoly, PolyError};
use crate::field::PrimeModulus;

/// Largest matrix side accepted by [`det_linear_matrix`] unless the caller
/// asks for more.
pub const DEFAULT_DET_BOUND: usize = 9;

const MAX_VARS: usize = 16;
const BITS: u32 = 4;

/// Sparse polynomial with packed exponents, 4 bits per variable.
type Packed = HashMap<u64, u64>;

fn packed_times_form(f: PrimeModulus, p: &Packed, form: &[u64], sign: u64, out: &mut Packed) {
    let nvars = form.len() - 1;
    for (&key, &c) in p {
        let c = f.mul(c, sign);
        for (v, &a) in form.iter().enumerate() {
            if a == 0 {
                continue;
            }
            let k = if v == nvars { key } else { key + (1u64 << (BITS * v as u32)) };
            let slot = out.entry(k).or_insert(0);
            *slot = f.mul_add(*slot, c, a);
        }
    }
}

/// Explicit determinant of a square matrix of affine forms by Laplace
/// expansion along rows, memoized over column subsets.
pub fn det_linear_matrix(y: &LinearMatrix, max_size: usize) -> Result<MultiPoly, PolyError> {
    let m = y.rows();
    if m != y.cols() {
        return Err(PolyError::SizeBound(format!("matrix is {}x{}", m, y.cols())));
    }
    if m > max_size {
        return Err(PolyError::SizeBound(format!("side {m} exceeds {max_size}")));
    }
    if y.nvars() > MAX_VARS {
        return Err(PolyError::SizeBound(format!(
            "{} variables exceed {MAX_VARS}",
            y.nvars()
        )));
    }
    let f = y.modulus();
    let neg1 = f.neg(1);
    // layer[S] = det of rows 0..|S| restricted to the columns in S
    let mut layer: HashMap<u32, Packed> = HashMap::new();
    layer.insert(0, Packed::from([(0u64, 1u64)]));
    for k in 0..m {
        let mut next: HashMap<u32, Packed> = HashMap::new();
        for (&s, minor) in &layer {
            for c in 0..m {
                if s & (1 << c) != 0 {
                    continue;
                }
                let t = s | (1 << c);
                // position of c within the sorted column set t
                let pos = (t & ((1u32 << c) - 1)).count_ones() as usize;
                let sign = if (k + pos) % 2 == 0 { 1 } else { neg1 };
                let out = next.entry(t).or_default();
                packed_times_form(f, minor, y.entry(k, c), sign, out);
            }
        }
        for p in next.values_mut() {
            p.retain(|_, c| *c != 0);
        }
        layer = next;
    }
    let full = (1u32 << m) - 1;
    let packed = layer.remove(&full).unwrap_or_default();
    let n = y.nvars();
    let terms = packed.into_iter().map(|(key, c)| {
        let e = (0..n)
            .map(|v| ((key >> (BITS * v as u32)) & 0xf) as u32)
            .collect();
        (e, c)
    });
    Ok(MultiPoly::from_terms(f, n, terms))
}

fn binomial(n: u32, k: u32) -> u64 {
    let mut r = 1u64;
    for i in 0..k as u64 {
        r = r * (n as u64 - i) / (i + 1);
    }
    r
}

/// Homogeneous Taylor components of P(a + x) up to degree `max`.
fn taylor_components(p: &MultiPoly, a: &[u64], max: usize) -> Vec<MultiPoly> {
    let f = p.modulus();
    let n = p.nvars();
    let mut comps = vec![MultiPoly::zero(f, n); max + 1];
    for (e, c) in p.terms() {
        let mut g = vec![0u32; n];
        enumerate_below(e, &mut g, 0, 0, max, &mut |g: &[u32], deg| {
            let mut coeff = c;
            for i in 0..n {
                if e[i] > 0 {
                    coeff = f.mul(coeff, f.reduce(binomial(e[i], g[i])));
                    coeff = f.mul(coeff, f.pow(a[i], (e[i] - g[i]) as u64));
                }
            }
            comps[deg].add_term(g.to_vec(), coeff);
        });
    }
    comps
}

fn enumerate_below(
    e: &[u32],
    g: &mut Vec<u32>,
    i: usize,
    deg: usize,
    max: usize,
    visit: &mut dyn FnMut(&[u32], usize),
) {
    if i == e.len() {
        visit(g, deg);
        return;
    }
    for k in 0..=e[i] {
        if deg + k as usize > max {
            break;
        }
        g[i] = k;
        enumerate_below(e, g, i + 1, deg + k as usize, max, visit);
    }
    g[i] = 0;
}

/// Recovers g with P = c * g^w, normalized so its graded-lex leading
/// coefficient is 1.
///
/// Works with the power series of (P(a + x) / P(a))^(1/w) at a point where
/// P does not vanish, truncated at degree deg(P)/w, then checks
/// P(r) g(a)^w = P(a) g(r)^w at random points.
pub fn wth_root<R: Rng + ?Sized>(p: &MultiPoly, w: usize, rng: &mut R) -> Result<MultiPoly, PolyError> {
    let f = p.modulus();
    let n = p.nvars();
    let deg = p.total_degree().ok_or(PolyError::NotAPerfectPower(w))?;
    if w == 0 || deg % w != 0 || (deg as u64) >= f.p() {
        return Err(PolyError::NotAPerfectPower(w));
    }
    let m = deg / w;
    let (a, pa) = (0..16)
        .map(|_| {
            let a = f.random_vec(rng, n);
            let v = p.eval(&a);
            (a, v)
        })
        .find(|(_, v)| *v != 0)
        .ok_or(PolyError::NotAPerfectPower(w))?;
    let inv_pa = f.inv(pa).unwrap();
    let comps: Vec<MultiPoly> = taylor_components(p, &a, m)
        .into_iter()
        .map(|c| c.scale(inv_pa))
        .collect();
    // (1 + F)^(1/w): j G_j = sum_{i=1..j} (i/w - (j - i)) F_i G_{j-i}
    let inv_w = f.inv(w as u64).unwrap();
    let mut series = vec![MultiPoly::constant(f, n, 1)];
    for j in 1..=m {
        let mut acc = MultiPoly::zero(f, n);
        for i in 1..=j {
            let coeff = f.sub(f.mul(i as u64, inv_w), (j - i) as u64);
            acc = acc.add(&comps[i].mul(&series[j - i]).scale(coeff));
        }
        series.push(acc.scale(f.inv(j as u64).unwrap()));
    }
    let mut local = MultiPoly::zero(f, n);
    for s in &series {
        local = local.add(s);
    }
    let neg_a: Vec<u64> = a.iter().map(|&v| f.neg(v)).collect();
    let g = local.shift(&neg_a).normalized();
    let ga = f.pow(g.eval(&a), w as u64);
    for _ in 0..10 {
        let r = f.random_vec(rng, n);
        if f.mul(p.eval(&r), ga) != f.mul(pa, f.pow(g.eval(&r), w as u64)) {
            return Err(PolyError::NotAPerfectPower(w));
        }
    }
    Ok(g)
}
