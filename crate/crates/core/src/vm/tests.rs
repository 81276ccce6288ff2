use std::collections::BTreeSet;
use std::sync::Arc;

use super::*;
use crate::fir::parse_program;
use crate::transforms::{run_pipeline, PassConfig};

fn compile(src: &str, cfg: PassConfig) -> Arc<CompiledProgram> {
    let p = parse_program(src).unwrap();
    let ip = run_pipeline(&p, &cfg).unwrap();
    let layout = ip.layout().unwrap();
    Arc::new(CompiledProgram::new(&ip, &layout))
}

fn run_src(src: &str, cfg: PassConfig, input: &[u8], limits: Limits) -> ExecutionReport {
    Vm::new(compile(src, cfg), InputStream::new(input.to_vec()), limits).run()
}

fn plain(src: &str) -> ExecutionReport {
    run_src(src, PassConfig::none(), &[], Limits::default())
}

fn crash_kind(r: &ExecutionReport) -> Option<CrashKind> {
    r.outcome.crash().map(|c| c.kind)
}

#[test]
fn globals_initialized_before_first_instruction() {
    let prog = compile("global g = 5; fn main() { b0: return; }", PassConfig::none());
    let vm = Vm::new(prog, InputStream::empty(), Limits::default());
    assert_eq!(&vm.globals()[..4], &5u32.to_le_bytes());
}

#[test]
fn ready_queue_by_priority() {
    let prog = compile(
        "task p1 priority 1 calls w; task p2 priority 2 calls w; vector { irq }
         fn irq() { b0: return; } fn w() { b0: return; } fn main() { b0: return; }",
        PassConfig::default(),
    );
    let vm = Vm::new(prog, InputStream::empty(), Limits::default());
    assert_eq!(vm.ready_queue(), vec!["__dispatcher", "p2", "p1"]);
}

#[test]
fn mmio_read_on_empty_input_is_zero_and_exhausts() {
    let r = run_src(
        "global out; fn main() { b0: v = load32 0x40000000; store32 out, v; return; }",
        PassConfig::default(),
        &[],
        Limits::default(),
    );
    assert_eq!(r.outcome, Outcome::InputExhaustedExit);
    assert!(r.input_exhausted);
    assert_eq!(r.bytes_consumed, 4);
}

#[test]
fn mmio_read_little_endian_and_tainted() {
    let src = "global out; fn main() { b0: v = load16 0x40000002; store32 out, v; return; }";
    let prog = compile(src, PassConfig::default());
    let mut vm = Vm::new(prog, InputStream::new(vec![0x34, 0x12]), Limits::default());
    let r = vm.run();
    assert_eq!(r.outcome, Outcome::CleanExit);
    assert_eq!(&vm.globals()[..4], &0x1234u32.to_le_bytes());
    assert!(vm.memory.load(0x2000_0000, 4).1);
}

#[test]
fn unhooked_device_access_is_unmapped() {
    let r = plain("fn main() { b0: v = load32 0x40000000; return; }");
    assert_eq!(crash_kind(&r), Some(CrashKind::UnmappedAccess));
    assert_eq!(r.outcome.crash().unwrap().address, Some(0x4000_0000));
}

#[test]
fn store_to_mmio_ignored() {
    let src = "global g = 9; fn main() { b0: mmio_store32 0x40000000, 77; x = load32 g; assert x == 9; return; }";
    let a = run_src(src, PassConfig::default(), &[], Limits::default());
    assert_eq!(a.outcome, Outcome::CleanExit);
    let b = run_src(&src.replace("77", "12345"), PassConfig::default(), &[], Limits::default());
    assert_eq!(a, b);
}

#[test]
fn fault_kinds() {
    assert_eq!(
        crash_kind(&plain("fn main() { b0: z = 0; x = 7 / z; return; }")),
        Some(CrashKind::DivByZero)
    );
    assert_eq!(
        crash_kind(&plain("fn main() { b0: x = load32 0x10; return; }")),
        Some(CrashKind::NullDeref)
    );
    assert_eq!(
        crash_kind(&plain("fn main() { b0: assert 0; return; }")),
        Some(CrashKind::AssertFail)
    );
    let r = plain("fn main() { b0: b = alloc 3; x = b[3]; return; }");
    let c = r.outcome.crash().unwrap();
    assert_eq!(c.kind, CrashKind::OobRead);
    assert_eq!((c.buffer_len, c.index), (Some(3), Some(3)));
    assert_eq!((c.function.as_str(), c.block, c.instr), ("main", 0, 1));
    assert_eq!(
        crash_kind(&plain("global a[2]; fn main() { b0: a[2] = 1; return; }")),
        Some(CrashKind::OobWrite)
    );
    assert_eq!(
        crash_kind(&plain("fn main() { b0: b = alloc 0; x = b[0]; return; }")),
        Some(CrashKind::OobRead)
    );
    assert_eq!(
        crash_kind(&plain("fn main() { b0: x = 0x20100000; v = load32 x + 0x100000; return; }")),
        Some(CrashKind::UnmappedAccess)
    );
}

#[test]
fn recursion_overflows_stack() {
    let r = plain("fn f() { b0: call f(); return; } fn main() { b0: call f(); return; }");
    let c = r.outcome.crash().unwrap();
    assert_eq!(c.kind, CrashKind::OobWrite);
    assert_eq!(c.stack.len(), 256);
}

#[test]
fn hang_at_exact_budget() {
    let limits = Limits {
        instruction_budget: 1234,
        max_call_depth: 256,
    };
    let r = run_src("fn main() { b0: jump b0; }", PassConfig::none(), &[], limits);
    assert_eq!(r.outcome, Outcome::Hang);
    assert_eq!(r.instructions_executed, 1234);
}

const BLOCKER: &str = "const STAT = 0x40000000;
    fn main() { b0: v = load32 STAT; branch v == 7, b1, b0; b1: return; }";

#[test]
fn weakened_branch_consumes_toggle_byte() {
    let limits = Limits {
        instruction_budget: 10_000,
        max_call_depth: 256,
    };
    // 4 bytes register value (0), then an odd toggle byte flips the exit test
    let r = run_src(BLOCKER, PassConfig::default(), &[0, 0, 0, 0, 1], limits);
    assert_eq!(r.outcome, Outcome::CleanExit);
    assert_eq!(r.bytes_consumed, 5);
    let even = run_src(BLOCKER, PassConfig::default(), &[0, 0, 0, 0, 2], limits);
    assert_eq!(even.outcome, Outcome::Hang);
    assert_eq!(
        even.last_tainted_branch,
        Some(Site {
            function: "main".into(),
            block: 0
        })
    );
    let unweakened = PassConfig {
        weaken: false,
        ..PassConfig::default()
    };
    assert_eq!(run_src(BLOCKER, unweakened, &[0, 0, 0, 0, 1], limits).outcome, Outcome::Hang);
}

#[test]
fn untainted_branch_never_consumes() {
    let r = run_src(
        "fn main() { b0: x = 1; branch x, b1, b1; b1: return; }",
        PassConfig::default(),
        &[5],
        Limits::default(),
    );
    assert_eq!(r.bytes_consumed, 0);
}

#[test]
fn deterministic_reports() {
    let prog = compile(BLOCKER, PassConfig::default());
    let input = vec![3u8, 1, 4, 1, 5, 9, 2, 6];
    let a = Vm::new(Arc::clone(&prog), InputStream::new(input.clone()), Limits::default()).run();
    let b = Vm::new(prog, InputStream::new(input), Limits::default()).run();
    assert_eq!(a, b);
}

#[test]
fn entry_runs_before_tasks_and_priorities_preempt() {
    // entry writes 1; the high task asserts it sees the entry's write and records
    // its order relative to the low task.
    let src = "global flag; global order; global seen_low;
        task low priority 1 calls lo; task high priority 5 calls hi;
        fn lo() { b0: store32 seen_low, 1; return; }
        fn hi() { b0: f = load32 flag; assert f == 1; s = load32 seen_low; assert s == 0; return; }
        fn main() { b0: store32 flag, 1; return; }";
    assert_eq!(plain(src).outcome, Outcome::CleanExit);
}

#[test]
fn equal_priority_round_robin() {
    // Both tasks spin 200 times; each records the other's counter when it
    // finishes. Without time slicing the first finisher would see zero.
    let src = "global a; global b; global b_seen; global a_seen;
        task ta priority 1 calls fa; task tb priority 1 calls fb;
        fn fa() { b0: x = load32 a; x = x + 1; store32 a, x; branch x <u 200, b0, b1; b1: o = load32 b; store32 b_seen, o; return; }
        fn fb() { b0: x = load32 b; x = x + 1; store32 b, x; branch x <u 200, b0, b1; b1: o = load32 a; store32 a_seen, o; return; }
        fn main() { b0: return; }";
    let prog = compile(src, PassConfig::none());
    let mut vm = Vm::new(prog, InputStream::empty(), Limits::default());
    assert_eq!(vm.run().outcome, Outcome::CleanExit);
    let word = |i: usize| u32::from_le_bytes(vm.globals()[i * 4..i * 4 + 4].try_into().unwrap());
    let (b_seen, a_seen) = (word(2), word(3));
    assert!(b_seen > 100 && a_seen > 100, "b_seen={b_seen} a_seen={a_seen}");
}

#[test]
fn higher_priority_waits_at_most_one_tick() {
    // The low task spins; the high task yields once and must resume at the next tick.
    let src = "global hi_done; global spins;
        task low priority 1 calls lo; task high priority 9 calls hi;
        fn hi() { b0: yield; store32 hi_done, 1; return; }
        fn lo() { b0: s = load32 spins; s = s + 1; store32 spins, s; d = load32 hi_done; branch d, b1, b0; b1: return; }
        fn main() { b0: return; }";
    let prog = compile(src, PassConfig::none());
    let mut vm = Vm::new(prog, InputStream::empty(), Limits::default());
    assert_eq!(vm.run().outcome, Outcome::CleanExit);
    let spins = u32::from_le_bytes(vm.globals()[4..8].try_into().unwrap());
    // each spin is 5 instructions; at most one quantum elapses before the high task runs
    assert!(spins as u64 * 5 <= TICK_QUANTUM + 5, "spins={spins}");
}

const ISR_FP: &str = "global m_cb;
    vector { good, bad }
    task app priority 1 calls work;
    fn work() { b0: return; }
    fn good() { b0: v = load32 0x40027000; return; }
    fn bad() { b0: p = load32 m_cb; x = load32 p; return; }
    fn main() { b0: v = load32 0x40027004; return; }";

#[test]
fn calibration_disables_crashing_isr() {
    let prog = compile(ISR_FP, PassConfig::default());
    let disabled = calibrate_isrs(&prog, Limits::default());
    assert_eq!(disabled, BTreeSet::from(["bad".to_string()]));
    let vm = Vm::new(prog, InputStream::new(vec![1, 1, 1]), Limits::default())
        .with_disabled_isrs(&disabled);
    let mut vm = vm;
    let r = vm.run();
    assert!(r.outcome.is_clean(), "{:?}", r.outcome);
    assert_eq!(r.disabled_isrs, disabled);
}

#[test]
fn dispatcher_selects_by_modulo() {
    // byte 5 with two handlers selects index 1
    let prog = compile(ISR_FP, PassConfig::default());
    let r = Vm::new(prog, InputStream::new(vec![0, 0, 0, 0, 5]), Limits::default()).run();
    let c = r.outcome.crash().expect("bad handler runs");
    assert_eq!(c.function, "bad");
    assert_eq!(c.kind, CrashKind::NullDeref);
    assert_eq!(c.stack, vec!["bad", "__dispatcher"]);
}

#[test]
fn empty_vector_calibrates_to_nothing() {
    let prog = compile("fn main() { b0: return; }", PassConfig::default());
    assert!(calibrate_isrs(&prog, Limits::default()).is_empty());
}

#[test]
fn copy_builtin_bounds() {
    assert_eq!(
        plain("fn main() { b0: a = alloc 2; b = alloc 4; call copy(b, a, 3); return; }")
            .outcome
            .crash()
            .map(|c| c.kind),
        Some(CrashKind::OobRead)
    );
    assert_eq!(
        crash_kind(&plain("fn main() { b0: a = alloc 4; b = alloc 2; call copy(b, a, 3); return; }")),
        Some(CrashKind::OobWrite)
    );
    assert_eq!(
        plain("fn main() { b0: a = alloc 4; a[2] = 9; b = alloc 4; call copy(b, a, 4); x = b[2]; assert x == 9; return; }").outcome,
        Outcome::CleanExit
    );
}

