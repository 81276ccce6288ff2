mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use common::{code, fixture, rehost, stdout_json};
use serde_json::Value;

#[test]
fn missing_file_exits_2_with_diagnostic() {
    let o = rehost(["analyze", "/definitely/not/here.fir"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("not/here.fir"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn json_errors_are_machine_readable() {
    let o = rehost(["--json", "analyze", "/definitely/not/here.fir"]);
    assert_eq!(code(&o), 2);
    let v: Value = serde_json::from_slice(&o.stderr).expect("stderr is JSON");
    assert_eq!(v["code"], 2);
    assert!(v["error"].as_str().unwrap().contains("here.fir"));
}

#[test]
fn parse_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.fir");
    fs::write(&bad, "fn main( {").unwrap();
    for cmd in ["analyze", "instrument", "run", "fuzz"] {
        let o = rehost([cmd, bad.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{cmd}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("1:"), "{cmd}: position missing");
    }
}

#[test]
fn weaken_without_mmio_is_rejected() {
    let o = rehost(["instrument", "--no-mmio", fixture("rcc_clock.fir").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = rehost([
        "instrument",
        "--no-mmio",
        "--no-weaken",
        fixture("rcc_clock.fir").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&rehost(["frobnicate"])), 2);
    assert_eq!(code(&rehost(["fuzz", "--execs", "5", "--seconds", "1", "x.fir"])), 2);
}

#[test]
fn zero_execs_is_an_input_error() {
    let o = rehost(["fuzz", "--execs", "0", fixture("rcc_clock.fir").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn found_versus_clean_exit_codes() {
    let rcc = fixture("rcc_clock.fir");
    assert_eq!(code(&rehost(["fuzz", "--execs", "2000", rcc.to_str().unwrap()])), 1);
    // every input is fine for a program with no faults
    let stm = fixture("stm32_sample.fir");
    assert_eq!(code(&rehost(["run", stm.to_str().unwrap()])), 0);
}

#[test]
fn blocker_hangs_without_weakening() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero64.bin");
    fs::write(&zero, [0u8; 64]).unwrap();
    let o = rehost([
        "--json",
        "run",
        "--input",
        zero.to_str().unwrap(),
        fixture("clock_blocker.fir").to_str().unwrap(),
        "--no-weaken",
    ]);
    assert_eq!(code(&o), 1);
    let v = stdout_json(&o);
    assert_eq!(v["outcome"]["outcome"], "Hang");
    assert_eq!(v["instructions_executed"], 2_000_000);
}

#[test]
fn unknown_report_root_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let rcc = fixture("rcc_clock.fir");
    rehost(["--out", out.to_str().unwrap(), "fuzz", "--execs", "50", rcc.to_str().unwrap()]);
    let o = rehost(["report", out.to_str().unwrap(), "--roots", "no_such_fn"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_fn"));
}

#[test]
fn linkplan_oracle_receives_rendered_configs() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("calls.log");
    // log each candidate, reject anything mentioning tickless idle
    let cmd = format!(
        "cat \"$1\" >> {0}; echo --- >> {0}; ! grep -q TICKLESS \"$1\"",
        log.display()
    );
    let o = rehost([
        "--json",
        "linkplan",
        "--manifest",
        fixture("timers_scenario.json").to_str().unwrap(),
        "--oracle-cmd",
        &cmd,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let accepted: Vec<&str> = v["accepted_configs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["key"].as_str().unwrap())
        .collect();
    assert_eq!(accepted, ["configTIMER_QUEUE_LENGTH", "configTICK_RATE_HZ"]);
    let calls = fs::read_to_string(&log).unwrap();
    // empty set first, then one call per config
    assert_eq!(calls.matches("---").count(), 4);
    assert!(calls.starts_with("---"));
}

#[test]
fn failing_oracle_on_empty_set_exits_2() {
    let o = rehost([
        "linkplan",
        "--manifest",
        fixture("timers_scenario.json").to_str().unwrap(),
        "--oracle-cmd",
        "false",
    ]);
    assert_eq!(code(&o), 2);
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                files.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    files
}

/// Each deterministic command, as argument lists after `--out DIR`.
fn deterministic_commands() -> Vec<Vec<String>> {
    let f = |n: &str| fixture(n).display().to_string();
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    vec![
        s(&["analyze", &f("stm32_sample.fir"), "--svd", &f("svd_truncated.json")]),
        s(&["instrument", &f("asm_ipsr.fir")]),
        s(&["run", &f("gpio_latch.fir"), "--budget", "5000"]),
        s(&["fuzz", "--execs", "1500", &f("isr_fp.fir")]),
        s(&["fuzz-fn", "tud_msc_read10_cb", &f("msc_read.fir"), "--execs", "800"]),
        s(&["linkplan", "--manifest", &f("timers_scenario.json")]),
    ]
}

#[test]
fn reruns_into_clean_directories_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for (i, cmd) in deterministic_commands().into_iter().enumerate() {
        let a = tmp.path().join(format!("{i}a"));
        let b = tmp.path().join(format!("{i}b"));
        let oa = rehost(["--out", a.to_str().unwrap()].into_iter().map(String::from).chain(cmd.clone()));
        let ob = rehost(["--out", b.to_str().unwrap()].into_iter().map(String::from).chain(cmd.clone()));
        assert_eq!(code(&oa), code(&ob), "{cmd:?}");
        assert!(code(&oa) <= 1, "{cmd:?}: {}", String::from_utf8_lossy(&oa.stderr));
        let ta = read_tree(&a);
        assert!(!ta.is_empty(), "{cmd:?} wrote nothing");
        assert_eq!(ta, read_tree(&b), "{cmd:?}");
        assert_eq!(oa.stdout, ob.stdout, "{cmd:?}");
    }
}

#[test]
fn rerun_into_same_directory_leaves_no_stale_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let rcc = fixture("rcc_clock.fir");
    let run = |execs: &str| {
        rehost(["--out", out.to_str().unwrap(), "fuzz", "--execs", execs, rcc.to_str().unwrap()])
    };
    run("3000");
    let big = read_tree(&out);
    run("1");
    let small = read_tree(&out);
    assert!(small.len() < big.len());
    // the zero seed is harmless, so a single execution finds nothing
    assert!(!small.keys().any(|k| k.starts_with("crashes/")));
    run("3000");
    assert_eq!(read_tree(&out), big);
}

#[test]
fn report_reproduces_campaign_coverage() {
    let tmp = tempfile::tempdir().unwrap();
    let camp = tmp.path().join("camp");
    let again = tmp.path().join("again");
    let rcc = fixture("rcc_clock.fir");
    rehost(["--out", camp.to_str().unwrap(), "fuzz", "--execs", "500", rcc.to_str().unwrap()]);
    let o = rehost(["--out", again.to_str().unwrap(), "report", camp.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["coverage.json", "coverage_functions.csv", "coverage_cdf.csv"] {
        assert_eq!(fs::read(camp.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

/// Keys and value types, with arrays reduced to their first element.
fn schema(v: &Value) -> Value {
    match v {
        Value::Null => "null".into(),
        Value::Bool(_) => "bool".into(),
        Value::Number(_) => "number".into(),
        Value::String(_) => "string".into(),
        Value::Array(a) => Value::Array(a.first().map(schema).into_iter().collect()),
        Value::Object(m) => Value::Object(m.iter().map(|(k, v)| (k.clone(), schema(v))).collect()),
    }
}

#[test]
fn json_output_schema_is_stable() {
    let golden_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let bless = std::env::var_os("REHOST_BLESS").is_some();
    let tmp = tempfile::tempdir().unwrap();
    let camp = tmp.path().join("camp");
    let f = |n: &str| fixture(n).display().to_string();
    let camp_s = camp.display().to_string();
    let cases: Vec<(&str, Vec<String>)> = vec![
        ("analyze", vec!["analyze".into(), f("stm32_sample.fir"), "--svd".into(), f("svd_truncated.json")]),
        ("instrument", vec!["instrument".into(), f("asm_ipsr.fir")]),
        ("run", vec!["run".into(), f("five_faults.fir"), "--no-weaken".into()]),
        ("fuzz", vec!["--out".into(), camp_s.clone(), "fuzz".into(), "--execs".into(), "500".into(), f("rcc_clock.fir")]),
        ("fuzz_fn", vec!["fuzz-fn".into(), "fill".into(), f("fill.fir"), "--execs".into(), "200".into()]),
        ("linkplan", vec!["linkplan".into(), "--manifest".into(), f("timers_scenario.json"), "--oracle-cmd".into(), "true".into()]),
        ("report", vec!["report".into(), camp_s]),
    ];
    for (name, args) in cases {
        let o = rehost(std::iter::once("--json".to_string()).chain(args));
        assert!(code(&o) <= 1, "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let got = serde_json::to_string_pretty(&schema(&stdout_json(&o))).unwrap() + "\n";
        let path = golden_dir.join(format!("{name}.schema.json"));
        if bless {
            fs::write(&path, &got).unwrap();
            continue;
        }
        let want = fs::read_to_string(&path)
            .unwrap_or_else(|_| panic!("missing {}; rerun with REHOST_BLESS=1", path.display()));
        assert_eq!(got, want, "{name} output schema changed");
    }
}
