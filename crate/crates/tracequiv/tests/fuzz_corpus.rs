use std::path::PathBuf;

use tracequiv::format::{parse_certificate, parse_instance};

fn corpus(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

// Seeds named missing_* or bad_* are expected to be refused.
fn expect_ok(name: &str) -> bool {
    !(name.starts_with("missing_") || name.starts_with("bad_"))
}

#[test]
fn instance_seeds_parse_as_labelled() {
    let seeds = corpus("parse_instance");
    assert!(seeds.len() >= 5);
    for (name, text) in seeds {
        assert_eq!(parse_instance(&text).is_ok(), expect_ok(&name), "{name}");
    }
}

#[test]
fn certificate_seeds_parse_as_labelled() {
    let seeds = corpus("parse_certificate");
    assert!(seeds.len() >= 3);
    for (name, text) in seeds {
        assert_eq!(parse_certificate(&text).is_ok(), expect_ok(&name), "{name}");
    }
}
