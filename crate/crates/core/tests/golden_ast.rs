use std::path::Path;

use rehost_core::fir::parse_program;

// Regenerate with REHOST_BLESS=1 and review the diff by hand.
#[test]
fn rcc_clock_ast_matches_golden() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let src = std::fs::read_to_string(dir.join("rcc_clock.fir")).unwrap();
    let p = parse_program(&src).unwrap();
    let dump = format!("{p:#?}\n");
    let golden = dir.join("rcc_clock.ast.txt");
    if std::env::var_os("REHOST_BLESS").is_some() {
        std::fs::write(&golden, &dump).unwrap();
    }
    assert_eq!(dump, std::fs::read_to_string(golden).unwrap());
    let names: Vec<&str> = p.functions.keys().map(String::as_str).collect();
    assert_eq!(names, vec!["HAL_RCC_GetSysClockFreq", "main"]);
    assert_eq!(p.tasks.len(), 1);
}
