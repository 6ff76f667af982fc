use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use tracequiv::acceptance::{criteria, Outcome};
use tracequiv::field::{seeded_rng, PrimeModulus, SeededRng};
use tracequiv::fmai::{diagonal_algebra, fmai_solve, planted_algebra};
use tracequiv::format::{
    parse_certificate, parse_instance, Certificate, CertificateFile, Instance, InstanceFile, InstanceKind, Report,
    TensorTerm, Verdict,
};
use tracequiv::oracles::{DetOracle, PipelineMmti, PlantedDetOracle, QuadraticDetOracle};
use tracequiv::reduction::{tensor_iso_to_det, trace_equivalence, FINAL_PIT_TRIALS};
use tracequiv::tensor::degree_d_to_3;
use tracequiv::trimm::{plant_instance, verify_witness, PlantMode, TrimmShape, Witness};

/// Overrides the default prime used by `gen` when --prime is absent.
const PRIME_ENV: &str = "TRACEQUIV_DEFAULT_PRIME";

const EXIT_NO: u8 = 1;
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "tracequiv", version, about = "Equivalence testing for the trace of iterated matrix multiplication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a planted instance file.
    Gen(GenArgs),
    /// Run a reduction on an instance and write a certificate.
    Solve(SolveArgs),
    /// Re-check a certificate against an instance by random evaluation.
    Verify(VerifyArgs),
    /// Run the acceptance suite.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenMode {
    Full,
    Block,
    Tensor,
    Algebra,
    /// Random set-multilinear tensor (a negative control).
    RandomTensor,
    /// Diagonal matrices of size w^2 (a commutative negative control).
    Diagonal,
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long)]
    w: usize,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long)]
    prime: Option<String>,
    #[arg(long, value_enum)]
    mode: GenMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Leave out the secret section used by the planted oracle.
    #[arg(long)]
    no_secret: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Task {
    Trace,
    TensorIso,
    Fmai,
    DegreeReduce,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleChoice {
    W2,
    Planted,
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long, value_enum, default_value = "w2")]
    oracle: OracleChoice,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    certificate: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    certificate: PathBuf,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(clap::Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Only run criteria whose name contains one of these.
    #[arg(long)]
    only: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Selftest(a) => cmd_selftest(a),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn default_prime() -> Result<PrimeModulus, String> {
    match std::env::var(PRIME_ENV) {
        Ok(s) => PrimeModulus::parse(&s).map_err(|e| format!("{PRIME_ENV}: {e}")),
        Err(_) => Ok(PrimeModulus::default()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_instance(path: &Path) -> Result<Instance, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_instance(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_gen(a: GenArgs) -> Result<ExitCode, String> {
    let modulus = match &a.prime {
        Some(p) => PrimeModulus::parse(p).map_err(|e| e.to_string())?,
        None => default_prime()?,
    };
    let mut rng = seeded_rng(a.seed);
    let file = match a.mode {
        GenMode::Full | GenMode::Block | GenMode::Tensor | GenMode::RandomTensor => {
            let shape = TrimmShape::new(a.w, a.d).map_err(|e| e.to_string())?;
            modulus.check_shape(a.w, a.d).map_err(|e| e.to_string())?;
            match a.mode {
                GenMode::Full => {
                    let inst = plant_instance(modulus, shape, PlantMode::Full, &mut rng);
                    let file = InstanceFile::full(shape, &inst.a, a.seed);
                    if a.no_secret { file } else { file.with_secret(&inst.secret_matrices()) }
                }
                GenMode::Block | GenMode::Tensor => {
                    let inst = plant_instance(modulus, shape, PlantMode::Block, &mut rng);
                    let kind = if matches!(a.mode, GenMode::Block) { InstanceKind::Block } else { InstanceKind::Tensor };
                    let file = InstanceFile::blocks(kind, shape, &inst.blocks().expect("block mode"), a.seed);
                    if a.no_secret { file } else { file.with_secret(&inst.secret_matrices()) }
                }
                _ => InstanceFile::explicit(modulus, shape, random_terms(modulus, shape, &mut rng)?, a.seed),
            }
        }
        GenMode::Algebra => {
            if a.w < 2 {
                return Err("algebra mode needs w >= 2".into());
            }
            InstanceFile::algebra(&planted_algebra(modulus, a.w, &mut rng).input, a.w, a.seed)
        }
        GenMode::Diagonal => InstanceFile::algebra(&diagonal_algebra(modulus, a.w * a.w, &mut rng), a.w, a.seed),
    };
    write_file(&a.out, &file.to_json())?;
    Ok(ExitCode::SUCCESS)
}

/// Every set-multilinear monomial with a random coefficient.
fn random_terms(modulus: PrimeModulus, shape: TrimmShape, rng: &mut SeededRng) -> Result<Vec<TensorTerm>, String> {
    let b = shape.block_size();
    let count = b.checked_pow(shape.d() as u32).filter(|&c| c <= 1 << 16).ok_or("too many terms")?;
    Ok((0..count)
        .map(|idx| TensorTerm {
            indices: (0..shape.d())
                .map(|k| {
                    let flat = (idx / b.pow((shape.d() - 1 - k) as u32)) % b;
                    let (_, i, j) = shape.position(k * b + flat);
                    [i, j]
                })
                .collect(),
            coeff: modulus.random(rng),
        })
        .collect())
}

/// Gates in the order a run meets them; the ones before a failure passed.
fn gate_order(task: Task) -> &'static [&'static str] {
    match task {
        Task::Trace => &[
            "dimension",
            "lie-certification",
            "square-free",
            "subspace-count",
            "subspace-dimensions",
            "ordering",
            "abp-reconstruction",
            "wth-root",
            "det-oracle",
            "intertwiner",
            "kronecker-structure",
            "singular-block",
            "final-pit",
        ],
        Task::TensorIso => &[
            "dimension",
            "abp-reconstruction",
            "wth-root",
            "det-oracle",
            "intertwiner",
            "kronecker-structure",
            "singular-block",
            "final-pit",
        ],
        Task::DegreeReduce => &["dimension", "mmti", "unit-point", "abp-reconstruction", "linearity", "final-pit"],
        Task::Fmai => &[
            "input",
            "square-dimension",
            "closure",
            "commutant-dimension",
            "degenerate",
            "tensor-nullity",
            "degree-reduction",
            "extraction",
            "multiplicativity",
            "span",
        ],
    }
}

fn passed_before(task: Task, failed: Option<&str>) -> Vec<String> {
    let order = gate_order(task);
    let stop = failed
        .and_then(|g| {
            let head = g.split('/').next().unwrap_or(g);
            order.iter().position(|o| *o == head)
        })
        .unwrap_or(order.len());
    order[..stop].iter().map(|s| s.to_string()).collect()
}

fn task_name(task: Task) -> &'static str {
    match task {
        Task::Trace => "trace",
        Task::TensorIso => "tensor-iso",
        Task::Fmai => "fmai",
        Task::DegreeReduce => "degree-reduce",
    }
}

fn cmd_solve(a: SolveArgs) -> Result<ExitCode, String> {
    let start = Instant::now();
    let inst = read_instance(&a.instance)?;
    let modulus = inst.modulus;
    let mut rng = seeded_rng(a.seed);

    // the secret is only touched when the planted oracle is asked for
    let planted = match a.oracle {
        OracleChoice::Planted => {
            if matches!(a.task, Task::Fmai | Task::DegreeReduce) {
                return Err("the planted oracle only serves --task trace and --task tensor-iso".into());
            }
            let secret = inst.secret().ok_or("instance has no secret section for the planted oracle")?;
            Some(PlantedDetOracle::new(secret.to_vec()))
        }
        OracleChoice::W2 => {
            if inst.file.w != 2 {
                return Err(format!("the w2 oracle needs w = 2, instance has w = {}", inst.file.w));
            }
            None
        }
    };
    let det: &dyn DetOracle = match &planted {
        Some(p) => p,
        None => &QuadraticDetOracle,
    };
    let mmti = PipelineMmti { det };

    let outcome: Result<CertificateFile, String> = match a.task {
        Task::Fmai => {
            let alg = inst.algebra().ok_or("--task fmai needs an algebra instance")?;
            fmai_solve(alg, &mmti, &mut rng)
                .map(|iso| CertificateFile::algebra(modulus, &iso))
                .map_err(|e| e.gate())
        }
        _ => {
            let f = inst.blackbox().ok_or("this task needs a polynomial instance")?;
            let shape = inst.shape().ok_or("instance has an invalid shape")?;
            let (w, d) = (shape.w(), shape.d());
            match a.task {
                Task::Trace => trace_equivalence(&f, det, &mut rng).and_then(|eq| {
                    let found = TrimmShape::new(eq.w, d).map_err(|_| tracequiv::reduction::ReductionError::Certification)?;
                    Ok(CertificateFile::witness(modulus, found, &Witness::Full(eq.a)))
                }),
                Task::TensorIso => tensor_iso_to_det(&f, w, d, det, None, &mut rng)
                    .map(|b| CertificateFile::witness(modulus, shape, &Witness::Blocks(b))),
                _ => {
                    return finish(
                        &a,
                        start,
                        degree_d_to_3(&f, w, d, &mmti, &mut rng)
                            .map(|b| CertificateFile::witness(modulus, shape, &Witness::Blocks(b)))
                            .map_err(|e| e.gate()),
                    )
                }
            }
            .map_err(|e| e.gate())
        }
    };
    finish(&a, start, outcome)
}

fn finish(a: &SolveArgs, start: Instant, outcome: Result<CertificateFile, String>) -> Result<ExitCode, String> {
    let (verdict, failed) = match &outcome {
        Ok(_) => (Verdict::Certified, None),
        Err(g) => (Verdict::No, Some(g.clone())),
    };
    let report = Report {
        verdict,
        task: task_name(a.task).into(),
        oracle: match a.oracle {
            OracleChoice::W2 => "w2".into(),
            OracleChoice::Planted => "planted".into(),
        },
        seed: a.seed,
        gates_passed: passed_before(a.task, failed.as_deref()),
        failed_gate: failed,
        message: None,
        pit_trials: FINAL_PIT_TRIALS,
        wall_time_ms: start.elapsed().as_millis(),
    };
    if let (Ok(cert), Some(path)) = (&outcome, &a.certificate) {
        write_file(path, &cert.to_json())?;
    }
    let text = report.to_json();
    if let Some(path) = &a.report {
        write_file(path, &text)?;
    }
    print!("{text}");
    Ok(match verdict {
        Verdict::Certified => ExitCode::SUCCESS,
        _ => ExitCode::from(EXIT_NO),
    })
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode, String> {
    let inst = read_instance(&a.instance)?;
    let text = std::fs::read_to_string(&a.certificate).map_err(|e| format!("{}: {e}", a.certificate.display()))?;
    let cert = parse_certificate(&text).map_err(|e| format!("{}: {e}", a.certificate.display()))?;
    if cert.modulus != inst.modulus {
        return Err("certificate and instance use different primes".into());
    }
    let mut rng = seeded_rng(a.seed);
    let ok = match &cert.body {
        Certificate::Witness { shape, witness } => {
            let f = inst.blackbox().ok_or("witness certificate needs a polynomial instance")?;
            shape.n() == f.nvars() && verify_witness(&f, shape, witness, a.trials, &mut rng)
        }
        Certificate::Algebra(iso) => {
            let alg = inst.algebra().ok_or("algebra certificate needs an algebra instance")?;
            iso.images.len() == alg.basis().len() && iso.verify(alg).is_ok()
        }
    };
    println!("{}", if ok { "verified" } else { "rejected" });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(EXIT_NO) })
}

fn cmd_selftest(a: SelftestArgs) -> Result<ExitCode, String> {
    let all: Vec<_> = criteria()
        .into_iter()
        .filter(|c| a.only.is_empty() || a.only.iter().any(|o| c.name.contains(o.as_str())))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Outcome>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..a.jobs.max(1).min(all.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(c) = all.get(i) else { break };
                let out = c.run();
                results.lock().unwrap().push(out);
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|o| o.id);
    let failed = results.iter().filter(|o| !o.passed).count();
    for o in &results {
        println!("{o}");
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(EXIT_NO) })
}
