#![no_main]
use libfuzzer_sys::fuzz_target;
use tracequiv::format::{parse_certificate, Certificate, CertificateFile};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cert) = parse_certificate(text) else { return };
    let file = match &cert.body {
        Certificate::Witness { shape, witness } => CertificateFile::witness(cert.modulus, *shape, witness),
        Certificate::Algebra(iso) => CertificateFile::algebra(cert.modulus, iso),
    };
    parse_certificate(&file.to_json()).expect("round trip");
});
