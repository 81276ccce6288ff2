use std::fs;
use std::path::Path;

use rehost_core::fir::parse_program;

#[test]
fn every_fixture_parses_and_round_trips() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut errors = Vec::new();
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "fir") {
            continue;
        }
        n += 1;
        let src = fs::read_to_string(&path).unwrap();
        match parse_program(&src) {
            Ok(p) => assert_eq!(parse_program(&p.to_source()).unwrap(), p, "{}", path.display()),
            Err(e) => errors.push(format!("{}: {e}", path.display())),
        }
    }
    assert!(n >= 10);
    assert!(errors.is_empty(), "{}", errors.join("\n"));
}
