use proptest::prelude::*;
use rehost_core::fir::synth::random_program;
use rehost_core::fir::{parse_program, Program};
use rehost_core::transforms::{run_pipeline, taint_summary, InstrumentedProgram, PassConfig};
use rehost_core::vm::{new_vm, ExecutionReport, InputStream, Limits};

fn execute(ip: &InstrumentedProgram, input: &[u8]) -> (ExecutionReport, Vec<u8>, Option<(u32, bool)>) {
    let layout = ip.layout().unwrap();
    let mut vm = new_vm(ip, &layout, InputStream::new(input.to_vec()), Limits::default());
    let report = vm.run();
    let out = vm.read_global("out");
    (report, vm.globals().to_vec(), out)
}

/// Exit and final global memory with no passes against every pass.
fn observe(p: &Program, cfg: &PassConfig) -> (String, Vec<u8>) {
    let (r, globals, _) = execute(&run_pipeline(p, cfg).unwrap(), &[]);
    (format!("{:?}", r.outcome), globals)
}

#[test]
fn full_pipeline_preserves_device_free_programs() {
    for seed in 0..200 {
        let p = random_program(seed);
        let plain = observe(&p, &PassConfig::none());
        let full = observe(&p, &PassConfig::default());
        assert_eq!(plain, full, "seed {seed}\n{}", p.to_source());
    }
}

#[test]
fn pipeline_twice_is_pipeline_once() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "fir") {
            continue;
        }
        let p = parse_program(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let once = run_pipeline(&p, &PassConfig::default()).unwrap();
        let twice = run_pipeline(&once.program, &PassConfig::default()).unwrap();
        assert_eq!(twice.program, once.program, "{}", path.display());
        assert_eq!(twice.block_table, once.block_table);
    }
}

#[derive(Clone, Copy, Debug)]
enum Body {
    Param,
    Const,
    Device,
    CallParam,
    CallConst,
    CallDevice,
    Mixed,
    Guarded,
    ViaGlobal,
}

fn body_src(k: usize, last: bool, b: Body) -> String {
    let next = format!("f{}", k + 1);
    let b = match (last, b) {
        (true, Body::CallParam) => Body::Param,
        (true, Body::CallConst) => Body::Const,
        (true, Body::CallDevice) => Body::Device,
        (_, b) => b,
    };
    match b {
        Body::Param => "b0: return x;".into(),
        Body::Const => "b0: return 7;".into(),
        Body::Device => "b0: d = load32 DEV; return d;".into(),
        Body::CallParam => format!("b0: r = call {next}(x); return r;"),
        Body::CallConst => format!("b0: r = call {next}(3); return r;"),
        Body::CallDevice => format!("b0: d = load32 DEV; r = call {next}(d); return r;"),
        Body::Mixed => "b0: d = load32 DEV; y = x + d; y = y & 0xFF; return y;".into(),
        Body::Guarded => "b0: d = load32 DEV; branch d == 0, b1, b2; b1: return x; b2: return 5;".into(),
        Body::ViaGlobal => "b0: d = load32 DEV; store32 tmp, d; e = load32 tmp; return e;".into(),
    }
}

fn body() -> impl Strategy<Value = Body> {
    prop_oneof![
        Just(Body::Param),
        Just(Body::Const),
        Just(Body::Device),
        Just(Body::CallParam),
        Just(Body::CallConst),
        Just(Body::CallDevice),
        Just(Body::Mixed),
        Just(Body::Guarded),
        Just(Body::ViaGlobal),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    /// Whenever a run actually stores device data through `f0(1)`, the
    /// static summary must have predicted a tainted return.
    #[test]
    fn static_taint_covers_dynamic_taint(
        bodies in prop::collection::vec(body(), 1..4),
        input in prop::collection::vec(any::<u8>(), 0..24),
    ) {
        let n = bodies.len();
        let mut src = String::from("const DEV = 0x40001000; global out; global tmp;\n");
        for (k, b) in bodies.iter().enumerate() {
            src += &format!("fn f{k}(x) {{ {} }}\n", body_src(k, k + 1 == n, *b));
        }
        src += "fn main() { b0: r = call f0(1); store32 out, r; return; }";
        let p = parse_program(&src).unwrap();
        let cfg = PassConfig { weaken: false, ..PassConfig::default() };
        let ip = run_pipeline(&p, &cfg).unwrap();
        let summary = taint_summary(&ip.program, &ip.layout().unwrap(), &ip.mmio_map);
        let (report, _, out) = execute(&ip, &input);
        prop_assert!(report.outcome.is_clean());
        let (_, dyn_taint) = out.unwrap();
        if dyn_taint {
            prop_assert!(summary.functions["f0"].returns_tainted, "{}", src);
            prop_assert!(summary.is_tainted("main", "r"));
        }
    }
}

#[test]
fn taint_reaches_global_through_memory_and_calls() {
    for b in [Body::Device, Body::CallDevice, Body::Mixed, Body::ViaGlobal] {
        let src = format!(
            "const DEV = 0x40001000; global out; global tmp;
             fn f0(x) {{ {} }} fn f1(x) {{ b0: return x; }}
             fn main() {{ b0: r = call f0(1); store32 out, r; return; }}",
            body_src(0, false, b)
        );
        let cfg = PassConfig { weaken: false, ..PassConfig::default() };
        let ip = run_pipeline(&parse_program(&src).unwrap(), &cfg).unwrap();
        let (_, _, out) = execute(&ip, &[1, 2, 3, 4]);
        assert!(out.unwrap().1, "{b:?}");
    }
}
