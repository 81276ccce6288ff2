use super::*;
use crate::fir::parse_program;
use crate::vm::CrashKind;

fn ip(src: &str, cfg: PassConfig) -> InstrumentedProgram {
    run_pipeline(&parse_program(src).unwrap(), &cfg).unwrap()
}

const RCC: &str = include_str!("../../fixtures/rcc_clock.fir");
const FIVE: &str = include_str!("../../fixtures/five_faults.fir");

#[test]
fn zero_budget_rejected() {
    let ip = ip("fn main() { b0: return; }", PassConfig::default());
    assert!(matches!(
        fuzz_whole(&ip, &[], Budget::Executions(0), 0),
        Err(FuzzError::BudgetZero)
    ));
}

#[test]
fn straight_line_program_keeps_one_entry() {
    let ip = ip("global g; fn main() { b0: store32 g, 1; return; }", PassConfig::default());
    let c = fuzz_whole(&ip, &[], Budget::Executions(300), 0).unwrap();
    assert_eq!(c.corpus.len(), 1);
    assert!(c.findings.is_empty());
    assert_eq!(c.executions, 300);
}

#[test]
fn same_seed_same_campaign() {
    let ip = ip(RCC, PassConfig::default());
    let a = fuzz_whole(&ip, &[], Budget::Executions(400), 3).unwrap();
    let b = fuzz_whole(&ip, &[], Budget::Executions(400), 3).unwrap();
    assert_eq!(a.summary(), b.summary());
    assert_eq!(a.corpus, b.corpus);
}

#[test]
fn corpus_entries_each_added_bits() {
    let ip = ip(RCC, PassConfig::default());
    let c = fuzz_whole(&ip, &[], Budget::Executions(500), 1).unwrap();
    assert!(c.corpus.iter().all(|e| e.new_bits > 0));
    let admitted: usize = c.corpus.iter().map(|e| e.new_bits).sum();
    assert!(admitted <= c.bitmap.count());
    let mut last = 0;
    for e in &c.corpus {
        assert!(e.found_at > last);
        last = e.found_at;
    }
}

#[test]
fn rcc_divide_by_zero_found() {
    let ip = ip(RCC, PassConfig::default());
    let c = fuzz_whole(&ip, &[], Budget::Executions(2_000), 0).unwrap();
    let b = c.buckets();
    assert!(
        b.iter().any(|b| b.kind == "DivByZero" && b.function == "HAL_RCC_GetSysClockFreq"),
        "{b:?}"
    );
    assert!(b.iter().all(|b| b.stable));
}

fn five_input(cmd: u32, arg: u32) -> Vec<u8> {
    let mut v = cmd.to_le_bytes().to_vec();
    v.extend_from_slice(&arg.to_le_bytes());
    v
}

#[test]
fn triage_groups_by_site() {
    let cfg = PassConfig {
        weaken: false,
        ..PassConfig::default()
    };
    let target = Target::new(&ip(FIVE, cfg), Limits::default()).unwrap();
    let mut findings = Vec::new();
    for sel in 0..5u32 {
        for k in 0..4u32 {
            let input = five_input(sel + 8 * k, 0x1234_0000 + k * 7919);
            let failure = replay(&target, &input).expect("faults");
            findings.push(Finding {
                input,
                failure,
                found_at: 0,
            });
        }
    }
    let buckets = triage(&findings, &target);
    assert_eq!(buckets.len(), 5);
    assert!(buckets.iter().all(|b| b.count == 4 && b.stable));
    let kinds: BTreeSet<&str> = buckets.iter().map(|b| b.kind.as_str()).collect();
    assert_eq!(
        kinds,
        BTreeSet::from(["AssertFail", "DivByZero", "NullDeref", "OobRead", "OobWrite"])
    );
    // same kind in two functions stays apart
    let d1 = findings[0].clone();
    let mut d2 = d1.clone();
    if let Failure::Crash(c) = &mut d2.failure {
        c.function = "elsewhere".into();
        c.stack[0] = "elsewhere".into();
    }
    assert_eq!(triage(&[d1.clone(), d2], &target).len(), 2);
    assert_eq!(triage(&[d1.clone(), d1], &target)[0].count, 2);
}

#[test]
fn untainted_hang_is_not_a_finding() {
    let ip = ip("fn main() { b0: jump b0; }", PassConfig::default());
    let opts = FuzzOptions {
        limits: Limits {
            instruction_budget: 500,
            max_call_depth: 256,
        },
        ..FuzzOptions::default()
    };
    let c = fuzz_whole_with(&ip, &[], Budget::Executions(20), 0, &opts).unwrap();
    assert_eq!(c.hangs, 20);
    assert!(c.findings.is_empty());
}

#[test]
fn function_mode_oob() {
    let src = include_str!("../../fixtures/msc_read.fir");
    let p = parse_program(src).unwrap();
    let c = fuzz_function(&p, "tud_msc_read10_cb", Budget::Executions(1_000), 0).unwrap();
    let b = c.buckets();
    assert!(b.iter().any(|b| b.kind == "OobRead" && b.function == "tud_msc_read10_cb"), "{b:?}");
}

#[test]
fn forced_fixed_spec_on_pure_function() {
    let p = parse_program("fn add(a, b) { b0: return a + b; } fn main() { b0: return; }").unwrap();
    let specs = vec![
        ArgSpec {
            name: "a".into(),
            kind: ArgKind::Int,
        },
        ArgSpec {
            name: "b".into(),
            kind: ArgKind::Int,
        },
    ];
    let h = build_fn_harness(&p, "add", &specs).unwrap();
    let ip = run_pipeline(&h, &PassConfig::default()).unwrap();
    let c = fuzz_whole(&ip, &[], Budget::Executions(200), 0).unwrap();
    assert!(c.findings.is_empty());
    let r = coverage_report(&c.bitmap, &ip, &["add"]).unwrap();
    assert_eq!(r.functions[0].fraction, 1.0);
}

#[test]
fn parallel_workers_share_budget() {
    let ip = ip(RCC, PassConfig::default());
    let opts = FuzzOptions {
        workers: 3,
        ..FuzzOptions::default()
    };
    let c = fuzz_whole_with(&ip, &[], Budget::Executions(600), 0, &opts).unwrap();
    assert_eq!(c.executions, 600);
    assert!(c.corpus.iter().all(|e| e.new_bits > 0));
}

#[test]
fn crash_kinds_cover_harness_boundary() {
    // zero-length array, any index faults
    let p = parse_program(
        "fn first(p: buf, n) { b0: let i = 0; jump b1; b1: branch i <u n, b2, b3; b2: i = i + 1; jump b1; b3: x = p[0]; return x; }
         fn main() { b0: return; }",
    )
    .unwrap();
    let (ip, specs) = function_harness(&p, "first", &PassConfig::default()).unwrap();
    assert_eq!(format_specs(&specs), "{p: Array Fixed(64), n: Int}");
    let target = Target::new(&ip, Limits::default()).unwrap();
    assert!(replay(&target, &[]).is_none());
    let _ = CrashKind::OobRead;
}
