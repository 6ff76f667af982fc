//! JSON files for instances, certificates and run reports.
//!
//! Residues are JSON integers; the prime is a decimal string. Parsing never
//! trusts the header: every shape, index and residue is checked before a
//! typed value is built.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldError, PrimeModulus};
use crate::fmai::{AlgebraInput, AlgebraIso, FmaiError};
use crate::linalg::MatrixFp;
use crate::poly::{Blackbox, LinearMatrix, MultiPoly};
use crate::trimm::{TrimmShape, Witness};

pub const FORMAT_VERSION: u32 = 1;

// Loose caps that keep hostile files from allocating without bound.
const MAX_W: usize = 16;
const MAX_D: usize = 64;
const MAX_N: usize = 1024;
const MAX_TERMS: usize = 1 << 17;
const MAX_ALGEBRA_M: usize = 64;
const MAX_ALGEBRA_R: usize = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error(transparent)]
    Prime(#[from] FieldError),
    #[error("shape: {0}")]
    Shape(String),
    #[error("residue {0} is not reduced")]
    Residue(u64),
    #[error("missing payload field '{0}'")]
    Missing(&'static str),
    #[error("size limit exceeded: {0}")]
    Limit(String),
    #[error("algebra: {0}")]
    Algebra(FmaiError),
}

fn shape_err(msg: impl Into<String>) -> FormatError {
    FormatError::Shape(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceKind {
    /// f(x) = Tr-IMM(A x) for one n x n matrix.
    Full,
    /// f(x) = Tr-IMM(B_0 x_0, ..., B_{d-1} x_{d-1}).
    Block,
    /// Same payload as `block`, meant for degree reduction.
    Tensor,
    /// A set-multilinear polynomial given by its terms.
    TensorExplicit,
    /// A basis of a matrix algebra.
    Algebra,
}

/// One monomial x^{(0)}_{i_0 j_0} ... x^{(d-1)}_{i j} with its coefficient.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorTerm {
    pub indices: Vec<[usize; 2]>,
    pub coeff: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgebraPayload {
    pub m: usize,
    pub r: usize,
    pub basis: Vec<Vec<Vec<u64>>>,
}

/// A matrix of linear forms: coefficient row r * cols + c is entry (r, c).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearPayload {
    pub rows: usize,
    pub cols: usize,
    pub nvars: usize,
    pub coefficients: Vec<Vec<u64>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretPayload {
    pub linear_matrices: Vec<LinearPayload>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub format_version: u32,
    pub prime: String,
    pub kind: InstanceKind,
    pub w: usize,
    pub d: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<u64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<Vec<Vec<u64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<TensorTerm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algebra: Option<AlgebraPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret: Option<SecretPayload>,
}

/// Matrix rows as plain vectors.
pub fn matrix_rows(m: &MatrixFp) -> Vec<Vec<u64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn linear_payload(x: &LinearMatrix) -> LinearPayload {
    LinearPayload {
        rows: x.rows(),
        cols: x.cols(),
        nvars: x.nvars(),
        coefficients: matrix_rows(&x.coefficient_matrix()),
    }
}

impl InstanceFile {
    fn header(modulus: PrimeModulus, kind: InstanceKind, w: usize, d: usize, seed: u64) -> Self {
        InstanceFile {
            format_version: FORMAT_VERSION,
            prime: modulus.p().to_string(),
            kind,
            w,
            d,
            seed,
            matrix: None,
            blocks: None,
            terms: None,
            algebra: None,
            secret: None,
        }
    }

    pub fn full(shape: TrimmShape, a: &MatrixFp, seed: u64) -> Self {
        let mut out = Self::header(a.modulus(), InstanceKind::Full, shape.w(), shape.d(), seed);
        out.matrix = Some(matrix_rows(a));
        out
    }

    pub fn blocks(kind: InstanceKind, shape: TrimmShape, blocks: &[MatrixFp], seed: u64) -> Self {
        assert!(matches!(kind, InstanceKind::Block | InstanceKind::Tensor));
        let mut out = Self::header(blocks[0].modulus(), kind, shape.w(), shape.d(), seed);
        out.blocks = Some(blocks.iter().map(matrix_rows).collect());
        out
    }

    pub fn explicit(modulus: PrimeModulus, shape: TrimmShape, terms: Vec<TensorTerm>, seed: u64) -> Self {
        let mut out = Self::header(modulus, InstanceKind::TensorExplicit, shape.w(), shape.d(), seed);
        out.terms = Some(terms);
        out
    }

    pub fn algebra(alg: &AlgebraInput, w: usize, seed: u64) -> Self {
        let mut out = Self::header(alg.modulus(), InstanceKind::Algebra, w, 0, seed);
        out.algebra = Some(AlgebraPayload {
            m: alg.m(),
            r: alg.basis().len(),
            basis: alg.basis().iter().map(matrix_rows).collect(),
        });
        out
    }

    pub fn with_secret(mut self, mats: &[LinearMatrix]) -> Self {
        self.secret = Some(SecretPayload {
            linear_matrices: mats.iter().map(linear_payload).collect(),
        });
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }
}

/// What an instance asks about, after validation.
#[derive(Clone, Debug)]
pub enum Payload {
    Full(MatrixFp),
    Blocks(Vec<MatrixFp>),
    Explicit(MultiPoly),
    Algebra(AlgebraInput),
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub file: InstanceFile,
    pub modulus: PrimeModulus,
    pub payload: Payload,
    secret: Option<Vec<LinearMatrix>>,
}

impl Instance {
    /// The Tr-IMM shape, for every kind but `algebra`.
    pub fn shape(&self) -> Option<TrimmShape> {
        TrimmShape::new(self.file.w, self.file.d).ok()
    }

    /// The polynomial under test, for every kind but `algebra`.
    pub fn blackbox(&self) -> Option<Blackbox> {
        let shape = self.shape()?;
        let m = self.modulus;
        match &self.payload {
            Payload::Full(a) => Some(Blackbox::trimm(m, shape).compose(a)),
            Payload::Blocks(b) => {
                let a = MatrixFp::assemble_block_diagonal(b).ok()?;
                Some(Blackbox::trimm(m, shape).compose(&a))
            }
            Payload::Explicit(p) => Some(Blackbox::explicit(p.clone())),
            Payload::Algebra(_) => None,
        }
    }

    pub fn algebra(&self) -> Option<&AlgebraInput> {
        match &self.payload {
            Payload::Algebra(a) => Some(a),
            _ => None,
        }
    }

    pub fn has_secret(&self) -> bool {
        self.secret.is_some()
    }

    /// The secret section; callers must only use it for the planted oracle.
    pub fn secret(&self) -> Option<&[LinearMatrix]> {
        self.secret.as_deref()
    }
}

fn check_residue(m: PrimeModulus, v: u64) -> Result<u64, FormatError> {
    if v < m.p() {
        Ok(v)
    } else {
        Err(FormatError::Residue(v))
    }
}

fn square_matrix(m: PrimeModulus, rows: &[Vec<u64>], size: usize) -> Result<MatrixFp, FormatError> {
    if rows.len() != size || rows.iter().any(|r| r.len() != size) {
        return Err(shape_err(format!("expected a {size}x{size} matrix")));
    }
    let mut data = Vec::with_capacity(size * size);
    for r in rows {
        for &v in r {
            data.push(check_residue(m, v)?);
        }
    }
    MatrixFp::from_data(m, size, size, data).map_err(|e| shape_err(e.to_string()))
}

fn check_trimm_header(file: &InstanceFile) -> Result<TrimmShape, FormatError> {
    if file.w > MAX_W || file.d > MAX_D || file.w * file.w * file.d > MAX_N {
        return Err(FormatError::Limit(format!("w = {}, d = {}", file.w, file.d)));
    }
    TrimmShape::new(file.w, file.d).map_err(|e| shape_err(e.to_string()))
}

fn parse_linear(m: PrimeModulus, p: &LinearPayload) -> Result<LinearMatrix, FormatError> {
    if p.rows > MAX_W || p.cols > MAX_W || p.nvars > MAX_N {
        return Err(FormatError::Limit("secret matrix".into()));
    }
    if p.coefficients.len() != p.rows * p.cols || p.coefficients.iter().any(|r| r.len() != p.nvars) {
        return Err(shape_err("secret coefficient rows"));
    }
    for r in &p.coefficients {
        for &v in r {
            check_residue(m, v)?;
        }
    }
    let cols = p.cols;
    Ok(LinearMatrix::from_fn(m, p.rows, p.cols, p.nvars, |i, j| {
        p.coefficients[i * cols + j].clone()
    }))
}

fn parse_value<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, FormatError> {
    serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))
}

pub fn parse_instance(text: &str) -> Result<Instance, FormatError> {
    let file: InstanceFile = parse_value(text)?;
    if file.format_version != FORMAT_VERSION {
        return Err(FormatError::Version(file.format_version));
    }
    let m = PrimeModulus::parse(&file.prime)?;
    let payload = match file.kind {
        InstanceKind::Full => {
            let shape = check_trimm_header(&file)?;
            let rows = file.matrix.as_ref().ok_or(FormatError::Missing("matrix"))?;
            Payload::Full(square_matrix(m, rows, shape.n())?)
        }
        InstanceKind::Block | InstanceKind::Tensor => {
            let shape = check_trimm_header(&file)?;
            let blocks = file.blocks.as_ref().ok_or(FormatError::Missing("blocks"))?;
            if blocks.len() != shape.d() {
                return Err(shape_err(format!("expected {} blocks", shape.d())));
            }
            Payload::Blocks(
                blocks
                    .iter()
                    .map(|b| square_matrix(m, b, shape.block_size()))
                    .collect::<Result<_, _>>()?,
            )
        }
        InstanceKind::TensorExplicit => {
            let shape = check_trimm_header(&file)?;
            let terms = file.terms.as_ref().ok_or(FormatError::Missing("terms"))?;
            if terms.len() > MAX_TERMS {
                return Err(FormatError::Limit(format!("{} terms", terms.len())));
            }
            let mut p = MultiPoly::zero(m, shape.n());
            for t in terms {
                if t.indices.len() != shape.d() {
                    return Err(shape_err("term needs one index pair per block"));
                }
                let mut e = vec![0u32; shape.n()];
                for (k, &[i, j]) in t.indices.iter().enumerate() {
                    if i >= shape.w() || j >= shape.w() {
                        return Err(shape_err(format!("index ({i}, {j}) out of range")));
                    }
                    e[shape.var_index(k, i, j)] = 1;
                }
                p.add_term(e, check_residue(m, t.coeff)?);
            }
            Payload::Explicit(p)
        }
        InstanceKind::Algebra => {
            let a = file.algebra.as_ref().ok_or(FormatError::Missing("algebra"))?;
            if a.m == 0 || a.m > MAX_ALGEBRA_M || a.r == 0 || a.r > MAX_ALGEBRA_R {
                return Err(FormatError::Limit(format!("m = {}, r = {}", a.m, a.r)));
            }
            if a.basis.len() != a.r {
                return Err(shape_err(format!("expected {} basis matrices", a.r)));
            }
            let basis = a
                .basis
                .iter()
                .map(|b| square_matrix(m, b, a.m))
                .collect::<Result<Vec<_>, _>>()?;
            Payload::Algebra(AlgebraInput::new(a.m, basis).map_err(FormatError::Algebra)?)
        }
    };
    let secret = match &file.secret {
        Some(s) => Some(
            s.linear_matrices
                .iter()
                .map(|p| parse_linear(m, p))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    Ok(Instance {
        file,
        modulus: m,
        payload,
        secret,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    Full,
    Blocks,
    Algebra,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub format_version: u32,
    pub prime: String,
    pub kind: CertificateKind,
    pub w: usize,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<u64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<Vec<Vec<u64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<Vec<Vec<Vec<u64>>>>,
}

impl CertificateFile {
    pub fn witness(modulus: PrimeModulus, shape: TrimmShape, w: &Witness) -> Self {
        let mut out = CertificateFile {
            format_version: FORMAT_VERSION,
            prime: modulus.p().to_string(),
            kind: CertificateKind::Full,
            w: shape.w(),
            d: shape.d(),
            matrix: None,
            blocks: None,
            images: None,
        };
        match w {
            Witness::Full(a) => out.matrix = Some(matrix_rows(a)),
            Witness::Blocks(b) => {
                out.kind = CertificateKind::Blocks;
                out.blocks = Some(b.iter().map(matrix_rows).collect());
            }
        }
        out
    }

    pub fn algebra(modulus: PrimeModulus, iso: &AlgebraIso) -> Self {
        CertificateFile {
            format_version: FORMAT_VERSION,
            prime: modulus.p().to_string(),
            kind: CertificateKind::Algebra,
            w: iso.w,
            d: 0,
            matrix: None,
            blocks: None,
            images: Some(iso.images.iter().map(matrix_rows).collect()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Certificate {
    Witness { shape: TrimmShape, witness: Witness },
    Algebra(AlgebraIso),
}

#[derive(Clone, Debug)]
pub struct ParsedCertificate {
    pub modulus: PrimeModulus,
    pub body: Certificate,
}

pub fn parse_certificate(text: &str) -> Result<ParsedCertificate, FormatError> {
    let file: CertificateFile = parse_value(text)?;
    if file.format_version != FORMAT_VERSION {
        return Err(FormatError::Version(file.format_version));
    }
    let m = PrimeModulus::parse(&file.prime)?;
    let body = match file.kind {
        CertificateKind::Full | CertificateKind::Blocks => {
            if file.w > MAX_W || file.d > MAX_D || file.w * file.w * file.d > MAX_N {
                return Err(FormatError::Limit(format!("w = {}, d = {}", file.w, file.d)));
            }
            let shape = TrimmShape::new(file.w, file.d).map_err(|e| shape_err(e.to_string()))?;
            let witness = if file.kind == CertificateKind::Full {
                let rows = file.matrix.as_ref().ok_or(FormatError::Missing("matrix"))?;
                Witness::Full(square_matrix(m, rows, shape.n())?)
            } else {
                let blocks = file.blocks.as_ref().ok_or(FormatError::Missing("blocks"))?;
                if blocks.len() != shape.d() {
                    return Err(shape_err(format!("expected {} blocks", shape.d())));
                }
                Witness::Blocks(
                    blocks
                        .iter()
                        .map(|b| square_matrix(m, b, shape.block_size()))
                        .collect::<Result<_, _>>()?,
                )
            };
            Certificate::Witness { shape, witness }
        }
        CertificateKind::Algebra => {
            if file.w == 0 || file.w > MAX_W {
                return Err(FormatError::Limit(format!("w = {}", file.w)));
            }
            let images = file.images.as_ref().ok_or(FormatError::Missing("images"))?;
            if images.len() != file.w * file.w {
                return Err(shape_err(format!("expected {} images", file.w * file.w)));
            }
            let images = images
                .iter()
                .map(|f| square_matrix(m, f, file.w))
                .collect::<Result<_, _>>()?;
            Certificate::Algebra(AlgebraIso { w: file.w, images })
        }
    };
    Ok(ParsedCertificate { modulus: m, body })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Certified,
    No,
    Error,
}

/// Machine-readable summary of one run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub verdict: Verdict,
    pub task: String,
    pub oracle: String,
    pub seed: u64,
    pub gates_passed: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_gate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub pit_trials: usize,
    pub wall_time_ms: u128,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::seeded_rng;
    use crate::fmai::planted_algebra;
    use crate::poly::pit_equal;
    use crate::trimm::{plant_instance, PlantMode};

    #[test]
    fn instance_round_trips() {
        let f = PrimeModulus::default();
        let mut rng = seeded_rng(1);
        let s = TrimmShape::new(2, 3).unwrap();
        let inst = plant_instance(f, s, PlantMode::Full, &mut rng);
        let file = InstanceFile::full(s, &inst.a, 7).with_secret(&inst.secret_matrices());
        let parsed = parse_instance(&file.to_json()).unwrap();
        assert_eq!(parsed.file, file);
        assert!(pit_equal(&parsed.blackbox().unwrap(), &inst.f, 10, &mut rng));
        assert_eq!(parsed.secret().unwrap(), &inst.secret_matrices()[..]);

        let blocks = plant_instance(f, s, PlantMode::Block, &mut rng).blocks().unwrap();
        let file = InstanceFile::blocks(InstanceKind::Tensor, s, &blocks, 8);
        assert!(matches!(parse_instance(&file.to_json()).unwrap().payload, Payload::Blocks(_)));

        let alg = planted_algebra(f, 2, &mut rng).input;
        let file = InstanceFile::algebra(&alg, 2, 9);
        assert_eq!(parse_instance(&file.to_json()).unwrap().algebra(), Some(&alg));
    }

    #[test]
    fn explicit_terms_build_the_polynomial() {
        let f = PrimeModulus::default();
        let s = TrimmShape::new(2, 3).unwrap();
        let terms = vec![TensorTerm {
            indices: vec![[0, 1], [1, 1], [1, 0]],
            coeff: 5,
        }];
        let parsed = parse_instance(&InstanceFile::explicit(f, s, terms, 0).to_json()).unwrap();
        let bb = parsed.blackbox().unwrap();
        let mut x = vec![0u64; 12];
        x[s.var_index(0, 0, 1)] = 2;
        x[s.var_index(1, 1, 1)] = 3;
        x[s.var_index(2, 1, 0)] = 4;
        assert_eq!(bb.eval(&x), 120);
    }

    #[test]
    fn rejects_bad_files() {
        let f = PrimeModulus::default();
        let s = TrimmShape::new(2, 3).unwrap();
        let a = MatrixFp::identity(f, 12);
        let good = InstanceFile::full(s, &a, 0);
        let mut bad = good.clone();
        bad.prime = "15".into();
        assert!(matches!(parse_instance(&bad.to_json()), Err(FormatError::Prime(_))));
        let mut bad = good.clone();
        bad.matrix.as_mut().unwrap()[0][0] = f.p();
        assert_eq!(parse_instance(&bad.to_json()).unwrap_err(), FormatError::Residue(f.p()));
        let mut bad = good.clone();
        bad.matrix.as_mut().unwrap().pop();
        assert!(matches!(parse_instance(&bad.to_json()), Err(FormatError::Shape(_))));
        let mut bad = good.clone();
        bad.w = 1000;
        assert!(matches!(parse_instance(&bad.to_json()), Err(FormatError::Limit(_))));
        let mut bad = good;
        bad.format_version = 9;
        assert_eq!(parse_instance(&bad.to_json()).unwrap_err(), FormatError::Version(9));
        assert!(matches!(parse_instance("{"), Err(FormatError::Json(_))));
    }

    #[test]
    fn certificate_round_trips() {
        let f = PrimeModulus::default();
        let s = TrimmShape::new(2, 3).unwrap();
        let w = Witness::Blocks(vec![MatrixFp::identity(f, 4); 3]);
        let text = CertificateFile::witness(f, s, &w).to_json();
        let parsed = parse_certificate(&text).unwrap();
        assert_eq!(parsed.body, Certificate::Witness { shape: s, witness: w });
        let iso = AlgebraIso {
            w: 2,
            images: vec![MatrixFp::identity(f, 2); 4],
        };
        let parsed = parse_certificate(&CertificateFile::algebra(f, &iso).to_json()).unwrap();
        assert_eq!(parsed.body, Certificate::Algebra(iso));
    }
}
