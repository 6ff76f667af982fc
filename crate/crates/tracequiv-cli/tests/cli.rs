use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use tracequiv::field::PrimeModulus;
use tracequiv::format::{CertificateFile, InstanceFile};
use tracequiv::linalg::MatrixFp;
use tracequiv::trimm::{TrimmShape, Witness};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tracequiv"))
        .args(args)
        .env_remove("TRACEQUIV_DEFAULT_PRIME")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn gen(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let out = path(dir, name);
    let mut args = vec!["gen", "--out", s(&out)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn gen_full_writes_square_matrix_deterministically() {
    let dir = TempDir::new().unwrap();
    let a = gen(&dir, "a.json", &["--w", "2", "--d", "3", "--mode", "full", "--seed", "9"]);
    let b = gen(&dir, "b.json", &["--w", "2", "--d", "3", "--mode", "full", "--seed", "9"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let v = json(&a);
    let m = v["matrix"].as_array().unwrap();
    assert_eq!(m.len(), 12);
    assert!(m.iter().all(|r| r.as_array().unwrap().len() == 12));
    assert!(v.get("secret").is_some());

    let c = gen(&dir, "c.json", &["--w", "2", "--d", "3", "--mode", "full", "--seed", "10", "--no-secret"]);
    assert_ne!(json(&c)["matrix"], v["matrix"]);
    assert!(json(&c).get("secret").is_none());
}

#[test]
fn gen_algebra_writes_four_matrices() {
    let dir = TempDir::new().unwrap();
    let a = gen(&dir, "alg.json", &["--w", "2", "--mode", "algebra", "--seed", "1"]);
    let v = json(&a);
    let basis = v["algebra"]["basis"].as_array().unwrap();
    assert_eq!(basis.len(), 4);
    for m in basis {
        let rows = m.as_array().unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.as_array().unwrap().len() == 4));
    }
}

#[test]
fn gen_rejects_bad_prime_and_shape() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "x.json");
    let o = run(&["gen", "--w", "2", "--d", "3", "--mode", "full", "--prime", "15", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    let o = run(&["gen", "--w", "2", "--d", "2", "--mode", "full", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn solve_then_verify_planted_instance() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "i.json", &["--w", "2", "--d", "3", "--mode", "full", "--seed", "4"]);
    let cert = path(&dir, "c.json");
    let report = path(&dir, "r.json");
    let o = run(&[
        "solve", "--instance", s(&inst), "--task", "trace", "--oracle", "w2", "--seed", "1",
        "--certificate", s(&cert), "--report", s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let r = json(&report);
    assert_eq!(r["verdict"], "certified");
    assert!(r.get("failed_gate").is_none());
    assert_eq!(r["gates_passed"].as_array().unwrap().last().unwrap(), "final-pit");

    let o = run(&["verify", "--instance", s(&inst), "--certificate", s(&cert)]);
    assert_eq!(code(&o), 0);

    // one entry nudged: evaluation almost surely disagrees
    let mut c = json(&cert);
    let entry = &mut c["matrix"][0][0];
    let x = entry.as_u64().unwrap();
    *entry = Value::from(if x == 0 { 1 } else { x - 1 });
    let bad = path(&dir, "bad.json");
    std::fs::write(&bad, c.to_string()).unwrap();
    let o = run(&["verify", "--instance", s(&inst), "--certificate", s(&bad)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn identity_witness_verifies_on_plain_trimm() {
    let dir = TempDir::new().unwrap();
    let f = PrimeModulus::default();
    let shape = TrimmShape::new(2, 4).unwrap();
    let id = MatrixFp::identity(f, shape.n());
    let inst = path(&dir, "i.json");
    std::fs::write(&inst, InstanceFile::full(shape, &id, 0).to_json()).unwrap();

    let good = path(&dir, "good.json");
    std::fs::write(&good, CertificateFile::witness(f, shape, &Witness::Full(id.clone())).to_json()).unwrap();
    assert_eq!(code(&run(&["verify", "--instance", s(&inst), "--certificate", s(&good)])), 0);

    let mut swapped = id.clone();
    swapped.set(0, 0, 0);
    swapped.set(0, 1, 1);
    let bad = path(&dir, "bad.json");
    std::fs::write(&bad, CertificateFile::witness(f, shape, &Witness::Full(swapped)).to_json()).unwrap();
    assert_eq!(code(&run(&["verify", "--instance", s(&inst), "--certificate", s(&bad)])), 1);
}

#[test]
fn planted_oracle_needs_secret() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "i.json", &["--w", "2", "--d", "3", "--mode", "full", "--no-secret"]);
    let o = run(&["solve", "--instance", s(&inst), "--task", "trace", "--oracle", "planted"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn w2_oracle_refuses_wider_instances() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "i.json", &["--w", "3", "--d", "3", "--mode", "full"]);
    let o = run(&["solve", "--instance", s(&inst), "--task", "trace", "--oracle", "w2"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn planted_oracle_solves_width_three() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "i.json", &["--w", "3", "--d", "3", "--mode", "block", "--seed", "2"]);
    let cert = path(&dir, "c.json");
    let o = run(&[
        "solve", "--instance", s(&inst), "--task", "tensor-iso", "--oracle", "planted", "--certificate", s(&cert),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&run(&["verify", "--instance", s(&inst), "--certificate", s(&cert)])), 0);
}

#[test]
fn degree_reduce_round_trip() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "t.json", &["--w", "2", "--d", "5", "--mode", "tensor", "--seed", "8"]);
    let cert = path(&dir, "c.json");
    let o = run(&["solve", "--instance", s(&inst), "--task", "degree-reduce", "--certificate", s(&cert)]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&run(&["verify", "--instance", s(&inst), "--certificate", s(&cert)])), 0);
}

#[test]
fn random_tensor_is_not_certified() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "r.json", &["--w", "2", "--d", "3", "--mode", "random-tensor", "--seed", "3"]);
    let o = run(&["solve", "--instance", s(&inst), "--task", "tensor-iso"]);
    assert_eq!(code(&o), 1);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["verdict"], "no");
    assert!(r["failed_gate"].is_string());
}

#[test]
fn fmai_certifies_matrix_algebra() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "a.json", &["--w", "2", "--mode", "algebra", "--seed", "6"]);
    let cert = path(&dir, "c.json");
    let o = run(&["solve", "--instance", s(&inst), "--task", "fmai", "--certificate", s(&cert)]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&run(&["verify", "--instance", s(&inst), "--certificate", s(&cert)])), 0);
}

#[test]
fn fmai_rejects_diagonal_algebra() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "d.json", &["--w", "2", "--mode", "diagonal", "--seed", "6"]);
    let o = run(&["solve", "--instance", s(&inst), "--task", "fmai"]);
    assert_eq!(code(&o), 1);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    // the commutant of a commutative 4-dimensional algebra is 4-dimensional,
    // so the rejection comes from the tensor nullity check
    assert_eq!(r["failed_gate"], "tensor-nullity");
    assert!(r["gates_passed"].as_array().unwrap().iter().any(|g| g == "commutant-dimension"));
}

#[test]
fn malformed_files_exit_two() {
    let dir = TempDir::new().unwrap();
    let junk = path(&dir, "junk.json");
    std::fs::write(&junk, "{\"format_version\": 1").unwrap();
    assert_eq!(code(&run(&["solve", "--instance", s(&junk), "--task", "trace"])), 2);
    let inst = gen(&dir, "i.json", &["--w", "2", "--d", "3", "--mode", "full"]);
    assert_eq!(code(&run(&["verify", "--instance", s(&inst), "--certificate", s(&junk)])), 2);
}

#[test]
fn selftest_runs_a_filtered_criterion() {
    let o = run(&["selftest", "--jobs", "2", "--only", "quadratic-det-oracle"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("[PASS]"), "{text}");
    assert_eq!(code(&o), 0);
}
