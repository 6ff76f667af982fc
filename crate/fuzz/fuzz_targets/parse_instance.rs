#![no_main]
use libfuzzer_sys::fuzz_target;
use tracequiv::format::parse_instance;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(inst) = parse_instance(text) else { return };
    // anything accepted must survive a write and re-read
    let again = parse_instance(&inst.file.to_json()).expect("round trip");
    assert_eq!(again.modulus, inst.modulus);
    if let Some(f) = inst.blackbox() {
        let zero = vec![0; f.nvars()];
        let _ = f.eval(&zero);
    }
});
