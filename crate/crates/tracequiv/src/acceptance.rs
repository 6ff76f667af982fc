//! The acceptance suite: thirteen end-to-end checks with fixed seeds, trial
//! counts and pass thresholds. Shared by the `acceptance` test target and the
//! `selftest` command.

use std::time::{Duration, Instant};

use crate::abp::{evaldim, reconstruct_abp};
use crate::field::{seeded_rng, PrimeModulus, SeededRng};
use crate::fmai::{
    build_constrained_tensor, commutant_basis, diagonal_algebra, fmai_solve, left_mult_matrices, planted_algebra,
    planted_algebra_with,
};
use crate::lie::{irreducible_invariant_subspaces, lie_algebra_basis, random_element, LieMode};
use crate::linalg::MatrixFp;
use crate::oracles::{certify_det, PipelineMmti, PlantedDetOracle, QuadraticDetOracle};
use crate::poly::{det_linear_matrix, pit_equal, Blackbox, LinearMatrix, MultiPoly};
use crate::reduction::{blocks_certify, intertwiner_space, trace_equivalence};
use crate::tensor::degree_d_to_3;
use crate::trimm::{plant_instance, verify_witness, PlantMode, TrimmShape, Witness};

const WITNESS_PIT_TRIALS: usize = 100;
const E2E_SEEDS: u64 = 20;
const E2E_REQUIRED: usize = 18;
const E2E_BUDGET: Duration = Duration::from_secs(120);
const PLANTED_SEEDS: u64 = 10;
const PLANTED_REQUIRED: usize = 9;
const PLANTED_BUDGET: Duration = Duration::from_secs(300);
const NEGATIVE_SEEDS: u64 = 20;
const NEGATIVE_REQUIRED: usize = 19;
const EVALDIM_SEEDS: u64 = 10;
const SQUAREFREE_SAMPLES: usize = 100;
const SQUAREFREE_REQUIRED: usize = 95;
const SUBSPACE_SEEDS: u64 = 20;
const ABP_SEEDS: u64 = 10;
const ABP_PIT_POINTS: usize = 200;
const DET_QUERIES: u64 = 50;
const DET_PIT_TRIALS: usize = 50;
const LOW_RANK_QUERIES: u64 = 20;
const TENSOR_SEEDS: u64 = 10;
const FMAI_SEEDS: u64 = 10;
const FMAI_REQUIRED: usize = 9;

#[derive(Clone, Debug)]
pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:>2} {:<28} {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    check: fn() -> (bool, String),
}

impl Criterion {
    pub fn run(&self) -> Outcome {
        let start = Instant::now();
        let (passed, detail) = (self.check)();
        Outcome {
            id: self.id,
            name: self.name,
            passed,
            detail,
            elapsed: start.elapsed(),
        }
    }
}

pub fn criteria() -> Vec<Criterion> {
    vec![
        Criterion { id: 1, name: "trace-equivalence-quadratic", check: trace_quadratic },
        Criterion { id: 2, name: "trace-equivalence-planted", check: trace_planted },
        Criterion { id: 3, name: "negative-controls", check: negative_controls },
        Criterion { id: 4, name: "evaluation-dimension", check: evaluation_dimension },
        Criterion { id: 5, name: "lie-algebra", check: lie_algebra },
        Criterion { id: 6, name: "square-free", check: square_free },
        Criterion { id: 7, name: "invariant-subspaces", check: invariant_subspaces },
        Criterion { id: 8, name: "abp-reconstruction", check: abp_reconstruction },
        Criterion { id: 9, name: "quadratic-det-oracle", check: quadratic_det },
        Criterion { id: 10, name: "intertwiners", check: intertwiners },
        Criterion { id: 11, name: "degree-reduction", check: degree_reduction },
        Criterion { id: 12, name: "algebra-isomorphism", check: algebra_isomorphism },
        Criterion { id: 13, name: "constrained-tensor", check: constrained_tensor },
    ]
}

fn rng_for(criterion: u32, case: u64) -> SeededRng {
    seeded_rng(((criterion as u64) << 32) | case)
}

fn modulus() -> PrimeModulus {
    PrimeModulus::default()
}

/// Planted full-mode instances run through the whole pipeline.
fn certified_runs(
    id: u32,
    shape: TrimmShape,
    mode: PlantMode,
    seeds: u64,
    planted_oracle: bool,
) -> usize {
    let f = modulus();
    (0..seeds)
        .filter(|&s| {
            let mut rng = rng_for(id, s + ((shape.w() * 100 + shape.d()) as u64) * 1000);
            let inst = plant_instance(f, shape, mode, &mut rng);
            let result = if planted_oracle {
                trace_equivalence(&inst.f, &PlantedDetOracle::new(inst.secret_matrices()), &mut rng)
            } else {
                trace_equivalence(&inst.f, &QuadraticDetOracle, &mut rng)
            };
            result.is_ok_and(|eq| {
                verify_witness(&inst.f, &shape, &Witness::Full(eq.a), WITNESS_PIT_TRIALS, &mut rng)
            })
        })
        .count()
}

fn trace_quadratic() -> (bool, String) {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for d in [3, 4] {
        let s = TrimmShape::new(2, d).unwrap();
        let n = certified_runs(1, s, PlantMode::Full, E2E_SEEDS, false);
        ok &= n >= E2E_REQUIRED;
        detail.push(format!("(2,{d}) {n}/{E2E_SEEDS}"));
    }
    let t = start.elapsed();
    ok &= t < E2E_BUDGET;
    (ok, format!("{}; need >= {E2E_REQUIRED} each within {}s", detail.join(", "), E2E_BUDGET.as_secs()))
}

fn trace_planted() -> (bool, String) {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for (w, d) in [(3, 3), (2, 6)] {
        let s = TrimmShape::new(w, d).unwrap();
        let n = certified_runs(2, s, PlantMode::Full, PLANTED_SEEDS, true);
        ok &= n >= PLANTED_REQUIRED;
        detail.push(format!("({w},{d}) {n}/{PLANTED_SEEDS}"));
    }
    ok &= start.elapsed() < PLANTED_BUDGET;
    (
        ok,
        format!("{}; need >= {PLANTED_REQUIRED} each within {}s", detail.join(", "), PLANTED_BUDGET.as_secs()),
    )
}

/// Every monomial of degree exactly 3 in 12 variables with a random coefficient.
fn random_cubic(f: PrimeModulus, rng: &mut SeededRng) -> MultiPoly {
    let n = 12;
    let mut p = MultiPoly::zero(f, n);
    for a in 0..n {
        for b in a..n {
            for c in b..n {
                let mut e = vec![0u32; n];
                e[a] += 1;
                e[b] += 1;
                e[c] += 1;
                p.add_term(e, f.random(rng));
            }
        }
    }
    p
}

fn negative_controls() -> (bool, String) {
    use rand::seq::IteratorRandom;
    let f = modulus();
    let s = TrimmShape::new(2, 3).unwrap();
    let full = s.expand(f);
    let dense = (0..NEGATIVE_SEEDS)
        .filter(|&seed| {
            let mut rng = rng_for(3, seed);
            let p = Blackbox::explicit(random_cubic(f, &mut rng));
            trace_equivalence(&p, &QuadraticDetOracle, &mut rng).is_err()
        })
        .count();
    let punctured = (0..NEGATIVE_SEEDS)
        .filter(|&seed| {
            let mut rng = rng_for(3, 1000 + seed);
            let drop = full.terms().map(|(e, _)| e).choose(&mut rng).unwrap().clone();
            let p = MultiPoly::from_terms(
                f,
                s.n(),
                full.terms().filter(|(e, _)| **e != drop).map(|(e, c)| (e.clone(), c)),
            );
            trace_equivalence(&Blackbox::explicit(p), &QuadraticDetOracle, &mut rng).is_err()
        })
        .count();
    (
        dense >= NEGATIVE_REQUIRED && punctured >= NEGATIVE_REQUIRED,
        format!("dense cubic {dense}/{NEGATIVE_SEEDS}, punctured {punctured}/{NEGATIVE_SEEDS} rejected; need >= {NEGATIVE_REQUIRED}"),
    )
}

fn evaluation_dimension() -> (bool, String) {
    let f = modulus();
    let mut good = 0;
    for seed in 0..EVALDIM_SEEDS {
        let mut rng = rng_for(4, seed);
        let mut ok = true;
        for (w, d) in [(2, 4), (3, 3)] {
            let s = TrimmShape::new(w, d).unwrap();
            let t = Blackbox::trimm(f, s);
            for a in 0..d {
                for b in a + 1..d {
                    let adjacent = b == a + 1 || (a == 0 && b == d - 1);
                    let want = if adjacent { w * w } else { w.pow(4) };
                    ok &= evaldim(&t, s.block_size(), &[a, b], &mut rng) == want;
                }
            }
        }
        good += ok as usize;
    }
    (
        good as u64 == EVALDIM_SEEDS,
        format!("{good}/{EVALDIM_SEEDS} seeds match on every block pair"),
    )
}

fn lie_algebra() -> (bool, String) {
    let f = modulus();
    let mut rng = rng_for(5, 0);
    let s = TrimmShape::new(2, 3).unwrap();
    let sampled = match lie_algebra_basis(&Blackbox::trimm(f, s), &mut rng, LieMode::Sampled) {
        Ok(l) => l,
        Err(e) => return (false, format!("sampled mode failed: {e}")),
    };
    let exact = match lie_algebra_basis(&Blackbox::explicit(s.expand(f)), &mut rng, LieMode::Exact) {
        Ok(l) => l,
        Err(e) => return (false, format!("exact mode failed: {e}")),
    };
    let same = sampled.span(f).same_span(&exact.span(f));
    let mut generators = 0;
    let mut contained = 0;
    for k in 0..s.d() {
        for i in 0..s.w() {
            for j in 0..s.w() {
                let mut m = MatrixFp::zeros(f, s.w(), s.w());
                m.set(i, j, 1);
                generators += 1;
                contained += sampled.contains(&s.lie_generator(f, k, &m)) as usize;
            }
        }
    }
    let block_diag = sampled.elements().iter().all(|e| e.is_block_diagonal(s.block_size()));
    let ok = same && contained == generators && block_diag && sampled.dim() == exact.dim();
    (
        ok,
        format!(
            "dim {} (exact {}), same span {same}, generators {contained}/{generators}, block-diagonal {block_diag}",
            sampled.dim(),
            exact.dim()
        ),
    )
}

fn square_free() -> (bool, String) {
    let f = modulus();
    let mut rng = rng_for(6, 0);
    let s = TrimmShape::new(2, 3).unwrap();
    let Ok(lie) = lie_algebra_basis(&Blackbox::trimm(f, s), &mut rng, LieMode::Sampled) else {
        return (false, "Lie algebra computation failed".into());
    };
    let n = (0..SQUAREFREE_SAMPLES)
        .filter(|_| random_element(&lie, f, &mut rng).char_poly().is_squarefree())
        .count();
    (
        n >= SQUAREFREE_REQUIRED,
        format!("{n}/{SQUAREFREE_SAMPLES} square-free; need >= {SQUAREFREE_REQUIRED}"),
    )
}

fn invariant_subspaces() -> (bool, String) {
    let f = modulus();
    let s = TrimmShape::new(2, 3).unwrap();
    let b = s.block_size();
    let good = (0..SUBSPACE_SEEDS)
        .filter(|&seed| {
            let mut rng = rng_for(7, seed);
            let inst = plant_instance(f, s, PlantMode::Full, &mut rng);
            let Ok(spaces) = irreducible_invariant_subspaces(&inst.f, &mut rng) else {
                return false;
            };
            spaces.len() == s.d()
                && spaces.iter().all(|v| {
                    let images: Vec<Vec<u64>> = v.basis().iter().map(|x| inst.a.mul_vec(x)).collect();
                    v.dim() == b
                        && (0..s.d()).any(|k| {
                            images
                                .iter()
                                .all(|y| y.iter().enumerate().all(|(i, &c)| c == 0 || i / b == k))
                        })
                })
        })
        .count();
    (
        good as u64 == SUBSPACE_SEEDS,
        format!("{good}/{SUBSPACE_SEEDS} seeds give 3 subspaces of dimension 4 on single blocks"),
    )
}

fn abp_reconstruction() -> (bool, String) {
    let f = modulus();
    let s = TrimmShape::new(2, 5).unwrap();
    let good = (0..ABP_SEEDS)
        .filter(|&seed| {
            let mut rng = rng_for(8, seed);
            let inst = plant_instance(f, s, PlantMode::Block, &mut rng);
            reconstruct_abp(&inst.f, s.d(), s.block_size(), s.block_size(), &mut rng)
                .is_ok_and(|abp| pit_equal(&inst.f, &abp.to_blackbox(), ABP_PIT_POINTS, &mut rng))
        })
        .count();
    (
        good as u64 == ABP_SEEDS,
        format!("{good}/{ABP_SEEDS} width-4 programs match at {ABP_PIT_POINTS} points"),
    )
}

fn quadratic_det() -> (bool, String) {
    let f = modulus();
    let generic = LinearMatrix::generic(f, 2, 2);
    let solved = (0..DET_QUERIES)
        .filter(|&seed| {
            let mut rng = rng_for(9, seed);
            let b = MatrixFp::random_invertible(f, 4, &mut rng);
            let g = det_linear_matrix(&generic.compose(&b), 2).expect("2x2 determinant");
            QuadraticDetOracle
                .solve(&g, &mut rng)
                .is_ok_and(|x| certify_det(&x, &g, DET_PIT_TRIALS, &mut rng))
        })
        .count();
    let rejected = (0..LOW_RANK_QUERIES)
        .filter(|&seed| {
            let mut rng = rng_for(9, 1000 + seed);
            let mut g = MultiPoly::zero(f, 4);
            for _ in 0..3 {
                let l = MultiPoly::linear(f, &f.random_vec(&mut rng, 4), 0);
                g = g.add(&l.mul(&l).scale(f.random(&mut rng)));
            }
            QuadraticDetOracle.solve(&g, &mut rng).is_err()
        })
        .count();
    (
        solved as u64 == DET_QUERIES && rejected as u64 == LOW_RANK_QUERIES,
        format!("{solved}/{DET_QUERIES} full-rank solved, {rejected}/{LOW_RANK_QUERIES} rank <= 3 rejected"),
    )
}

/// Block (i, j) of `t` is t_ij times the identity.
fn is_kron_with_identity(t: &MatrixFp, w: usize) -> bool {
    (0..w * w).all(|r| {
        (0..w * w).all(|c| {
            let (bi, bj, ri, ci) = (r / w, c / w, r % w, c % w);
            let expect = if ri == ci { t.get(bi * w, bj * w) } else { 0 };
            t.get(r, c) == expect
        })
    })
}

fn intertwiners() -> (bool, String) {
    let f = modulus();
    let w = 2;
    let z = LinearMatrix::generic(f, w, w).kron_identity_left(w);
    let plain = intertwiner_space(&z, &z);
    let sq = w.pow(4);
    let shaped = plain.iter().all(|v| {
        let t = MatrixFp::from_data(f, w * w, w * w, v[..sq].to_vec()).unwrap();
        let s = MatrixFp::from_data(f, w * w, w * w, v[sq..].to_vec()).unwrap();
        t == s && is_kron_with_identity(&t, w)
    });
    let mixed = intertwiner_space(&z.transpose(), &z);
    (
        plain.len() == w * w && shaped && mixed.is_empty(),
        format!(
            "plain branch dim {} (all M (x) I: {shaped}), mixed branch dim {}",
            plain.len(),
            mixed.len()
        ),
    )
}

fn random_four_tensor(f: PrimeModulus, rng: &mut SeededRng) -> MultiPoly {
    let s = TrimmShape::new(2, 4).unwrap();
    let b = s.block_size();
    let mut p = MultiPoly::zero(f, s.n());
    for idx in 0..b.pow(4) {
        let mut e = vec![0u32; s.n()];
        for k in 0..4 {
            e[k * b + (idx / b.pow(3 - k as u32)) % b] = 1;
        }
        p.add_term(e, f.random(rng));
    }
    p
}

fn degree_reduction() -> (bool, String) {
    let f = modulus();
    let mmti = PipelineMmti { det: &QuadraticDetOracle };
    let mut detail = Vec::new();
    let mut ok = true;
    for d in [4, 6] {
        let s = TrimmShape::new(2, d).unwrap();
        let good = (0..TENSOR_SEEDS)
            .filter(|&seed| {
                let mut rng = rng_for(11, d as u64 * 1000 + seed);
                let inst = plant_instance(f, s, PlantMode::Block, &mut rng);
                degree_d_to_3(&inst.f, 2, d, &mmti, &mut rng)
                    .is_ok_and(|b| blocks_certify(&inst.f, 2, &b, WITNESS_PIT_TRIALS, &mut rng))
            })
            .count();
        ok &= good as u64 == TENSOR_SEEDS;
        detail.push(format!("(2,{d}) {good}/{TENSOR_SEEDS}"));
    }
    let rejected = (0..TENSOR_SEEDS)
        .filter(|&seed| {
            let mut rng = rng_for(11, 9000 + seed);
            let p = Blackbox::explicit(random_four_tensor(f, &mut rng));
            degree_d_to_3(&p, 2, 4, &mmti, &mut rng).is_err()
        })
        .count();
    ok &= rejected as u64 == TENSOR_SEEDS;
    detail.push(format!("random 4-tensor rejected {rejected}/{TENSOR_SEEDS}"));
    (ok, detail.join(", "))
}

fn algebra_isomorphism() -> (bool, String) {
    let f = modulus();
    let mmti = PipelineMmti { det: &QuadraticDetOracle };
    let solved = (0..FMAI_SEEDS)
        .filter(|&seed| {
            let mut rng = rng_for(12, seed);
            let alg = planted_algebra(f, 2, &mut rng).input;
            fmai_solve(&alg, &mmti, &mut rng).is_ok_and(|iso| iso.verify(&alg).is_ok())
        })
        .count();
    let mut gates = Vec::new();
    let at_commutant = (0..FMAI_SEEDS)
        .filter(|&seed| {
            let mut rng = rng_for(12, 1000 + seed);
            let alg = diagonal_algebra(f, 4, &mut rng);
            let gate = match fmai_solve(&alg, &mmti, &mut rng) {
                Ok(_) => "accepted".to_string(),
                Err(e) => e.gate(),
            };
            let hit = gate == "commutant-dimension";
            if !gates.contains(&gate) {
                gates.push(gate);
            }
            hit
        })
        .count();
    (
        solved >= FMAI_REQUIRED && at_commutant as u64 == FMAI_SEEDS,
        format!(
            "planted {solved}/{FMAI_SEEDS} verified (need >= {FMAI_REQUIRED}); diagonal algebra rejected at commutant gate {at_commutant}/{FMAI_SEEDS} (gates seen: {})",
            gates.join(", ")
        ),
    )
}

fn constrained_tensor() -> (bool, String) {
    let f = modulus();
    let id = MatrixFp::identity(f, 4);
    let alg = planted_algebra_with(f, 2, id.clone(), id).input;
    let Ok(ls) = left_mult_matrices(&alg) else {
        return (false, "left multiplication failed".into());
    };
    let lt: Vec<MatrixFp> = ls.iter().map(|l| l.transpose()).collect();
    let ns = commutant_basis(f, 4, &lt);
    let Ok(t) = build_constrained_tensor(f, &ls, &ns, 2) else {
        return (false, "no nonzero tensor".into());
    };
    let expected = TrimmShape::new(2, 4).unwrap().expand(f).normalized();
    let same = t.poly.normalized() == expected;
    (
        t.nullity == 1 && same,
        format!("nullspace dimension {}, proportional to Tr-IMM_(2,4): {same}", t.nullity),
    )
}
