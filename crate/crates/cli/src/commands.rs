use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::{Command as Process, Stdio};
use std::time::Instant;

use rehost_core::fir::{parse_program, Instr, Program};
use rehost_core::fuzz::{
    coverage_report, default_roots, format_specs, function_harness, fuzz_whole_with, Budget,
    Campaign, CampaignSummary, FuzzOptions, Target,
};
use rehost_core::linkplan::{select_configs, LinkOutcome, Manifest};
use rehost_core::mmio::{svd_compare, SvdDoc};
use rehost_core::transforms::{analyze_mmio, run_pipeline, InstrumentedProgram, Pass, PassConfig};
use rehost_core::vm::{Limits, Outcome};
use serde_json::json;

use crate::output::{read_bytes, read_text, to_json, Classify, CmdError, CmdResult, Out};
use crate::{Cli, Command, FuzzFlags, Passes, EXIT_FOUND, EXIT_INPUT, EXIT_OK};

const DEFAULT_EXECS: u64 = 10_000;

pub fn dispatch(cli: &Cli) -> CmdResult<u8> {
    let out = Out::new(cli.out.as_deref())?;
    let ctx = Ctx {
        out,
        seed: cli.seed,
        json: cli.json,
    };
    match &cli.command {
        Command::Analyze {
            file,
            svd,
            no_dispatcher,
        } => analyze(&ctx, file, svd.as_deref(), !no_dispatcher),
        Command::Instrument { file, passes } => instrument(&ctx, file, passes),
        Command::Run {
            file,
            input,
            budget,
            passes,
        } => run(&ctx, file, input.as_deref(), *budget, passes),
        Command::Fuzz { file, passes, flags } => fuzz(&ctx, file, passes, flags),
        Command::FuzzFn {
            function,
            file,
            passes,
            flags,
        } => fuzz_fn(&ctx, function, file, passes, flags),
        Command::Linkplan {
            manifest,
            oracle_cmd,
        } => linkplan(&ctx, manifest, oracle_cmd.as_deref()),
        Command::Report { dir, roots } => report(&ctx, dir, roots),
    }
}

struct Ctx {
    out: Out,
    seed: u64,
    json: bool,
}

impl Ctx {
    /// Prints `value` as JSON under `--json`, else the human summary.
    fn emit(&self, value: &serde_json::Value, human: &str) {
        if self.json {
            print!("{}", to_json(value));
        } else {
            print!("{human}");
        }
    }
}

fn load_program(path: &Path) -> CmdResult<Program> {
    let text = read_text(path)?;
    parse_program(&text).input_err(path.display())
}

fn pipeline(p: &Program, passes: &Passes, seed: u64) -> CmdResult<InstrumentedProgram> {
    run_pipeline(p, &passes.config(seed)).input_err("cannot instrument")
}

fn analyze(ctx: &Ctx, file: &Path, svd: Option<&Path>, with_dispatcher: bool) -> CmdResult<u8> {
    let p = load_program(file)?;
    let map = analyze_mmio(&p, with_dispatcher).input_err("cannot lay out memory")?;
    let mut human = String::new();
    for iv in &map.intervals {
        let _ = writeln!(human, "mmio {iv}");
    }
    ctx.out.write("mmio_map.json", to_json(&map))?;
    let mut value = json!({ "mmio_map": map });
    if let Some(svd) = svd {
        let doc = SvdDoc::from_json(&read_text(svd)?).input_err(svd.display())?;
        let cmp = svd_compare(&map, &doc);
        for m in &cmp.matched {
            let _ = writeln!(human, "matched {} {}", m.interval, m.peripheral);
        }
        for iv in &cmp.undocumented {
            let _ = writeln!(human, "undocumented {iv}");
        }
        ctx.out.write("svd_compare.json", to_json(&cmp))?;
        value["svd_compare"] = json!(cmp);
    }
    ctx.emit(&value, &human);
    Ok(EXIT_OK)
}

/// Constructs a person retargeting the firmware should look at.
fn diagnostics(original: &Program, ip: &InstrumentedProgram) -> String {
    let mut d = String::new();
    let asm_kept = !ip.pass_applied(Pass::ElideAsm);
    for f in original.functions.values() {
        for (b, i, ins) in f.instrs() {
            if let Instr::Asm { text, .. } = ins {
                let fate = if asm_kept { "kept as no-op" } else { "elided" };
                let _ = writeln!(d, "asm {}:{b}:{i} {text:?} {fate}", f.name);
            }
        }
    }
    let mut hooked = 0usize;
    let mut raw_device = 0usize;
    for f in ip.program.functions.values() {
        for (_, _, ins) in f.instrs() {
            match ins {
                Instr::Load { hooked: true, .. } | Instr::Store { hooked: true, .. } => hooked += 1,
                Instr::Load { .. } | Instr::Store { .. } => raw_device += 1,
                _ => {}
            }
        }
    }
    let _ = writeln!(d, "mmio_intervals {}", ip.mmio_map.intervals.len());
    for iv in &ip.mmio_map.intervals {
        let _ = writeln!(d, "mmio {iv}");
    }
    let _ = writeln!(d, "hooked_accesses {hooked}");
    let _ = writeln!(d, "raw_accesses {raw_device}");
    for (f, b) in &ip.weakened_branches {
        let _ = writeln!(d, "weakened {f}:{b}");
    }
    if !original.vector_table.is_empty() && ip.dispatcher_task.is_none() {
        let _ = writeln!(d, "isrs_unreachable {}", original.vector_table.join(","));
    }
    d
}

fn instrument(ctx: &Ctx, file: &Path, passes: &Passes) -> CmdResult<u8> {
    let p = load_program(file)?;
    let ip = pipeline(&p, passes, ctx.seed)?;
    let diag = diagnostics(&p, &ip);
    ctx.out.write("artifact.json", ip.to_json())?;
    ctx.out.write("instrumented.fir", ip.program.to_source())?;
    ctx.out.write("diagnostics.txt", &diag)?;
    let value = json!({
        "passes_applied": ip.passes_applied,
        "blocks": ip.block_table.len(),
        "mmio_map": ip.mmio_map,
        "weakened_branches": ip.weakened_branches,
        "dispatcher_task": ip.dispatcher_task,
    });
    let mut human = String::new();
    for r in &ip.passes_applied {
        let _ = writeln!(human, "{:?} {}", r.pass, if r.applied { "applied" } else { "skipped" });
    }
    let _ = writeln!(human, "blocks {}", ip.block_table.len());
    human.push_str(&diag);
    ctx.emit(&value, &human);
    Ok(EXIT_OK)
}

fn run(ctx: &Ctx, file: &Path, input: Option<&Path>, budget: Option<u64>, passes: &Passes) -> CmdResult<u8> {
    let p = load_program(file)?;
    let ip = pipeline(&p, passes, ctx.seed)?;
    let bytes = match input {
        Some(path) => read_bytes(path)?,
        None => Vec::new(),
    };
    let mut limits = Limits::default();
    if let Some(b) = budget {
        limits.instruction_budget = b;
    }
    let target = Target::new(&ip, limits).input_err("cannot lay out memory")?.calibrated();
    let report = target.execute(&bytes);
    ctx.out.write("report.json", to_json(&report))?;
    let mut human = format!(
        "outcome {}\ninstructions {}\nbytes_consumed {}\nblocks {}\n",
        report.outcome.kind_name(),
        report.instructions_executed,
        report.bytes_consumed,
        report.coverage.count(),
    );
    if let Some(c) = report.outcome.crash() {
        let _ = writeln!(human, "crash {} at {}:{}:{} {}", c.kind.name(), c.function, c.block, c.instr, c.detail);
    }
    ctx.emit(&json!(report), &human);
    Ok(match report.outcome {
        Outcome::Crash(_) | Outcome::Hang => EXIT_FOUND,
        _ => EXIT_OK,
    })
}

/// Seed files in name order.
fn load_seeds(dir: Option<&Path>) -> CmdResult<Vec<Vec<u8>>> {
    let Some(dir) = dir else {
        return Ok(Vec::new());
    };
    let mut paths: Vec<_> = fs::read_dir(dir)
        .input_err(format!("cannot read {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    paths.iter().map(|p| read_bytes(p)).collect()
}

fn fuzz_setup(flags: &FuzzFlags) -> CmdResult<(Budget, FuzzOptions, Vec<Vec<u8>>)> {
    let budget = match (flags.execs, flags.seconds) {
        (_, Some(s)) => Budget::Seconds(s),
        (n, None) => Budget::Executions(n.unwrap_or(DEFAULT_EXECS)),
    };
    let mut opts = FuzzOptions {
        workers: flags.workers,
        ..FuzzOptions::default()
    };
    if let Some(b) = flags.budget {
        opts.limits.instruction_budget = b;
    }
    Ok((budget, opts, load_seeds(flags.seeds.as_deref())?))
}

fn write_campaign(ctx: &Ctx, ip: &InstrumentedProgram, c: &Campaign, started: Instant) -> CmdResult<u8> {
    let summary = c.summary();
    let cov = coverage_report(&c.bitmap, ip, &default_roots(ip)).internal_err("coverage")?;
    let out = &ctx.out;
    out.write("artifact.json", ip.to_json())?;
    out.write("campaign.json", to_json(&summary))?;
    out.write("coverage.json", to_json(&cov))?;
    out.write("coverage_functions.csv", cov.functions_csv())?;
    out.write("coverage_cdf.csv", cov.cdf_csv())?;
    out.fresh_dir("corpus")?;
    for (i, e) in c.corpus.iter().enumerate() {
        out.write(&format!("corpus/{i:06}.bin"), &e.input)?;
    }
    out.fresh_dir("crashes")?;
    for b in &summary.buckets {
        let sig = format!("{:016x}", b.signature);
        out.write(&format!("crashes/{sig}.bin"), &b.representative)?;
        out.write(&format!("crashes/{sig}.json"), to_json(b))?;
    }
    if !ctx.json {
        // timing stays out of the files so reruns are byte-identical
        eprintln!("elapsed {:.2}s", started.elapsed().as_secs_f64());
    }
    ctx.emit(&json!(summary), &human_summary(&summary));
    Ok(if summary.buckets.is_empty() { EXIT_OK } else { EXIT_FOUND })
}

fn human_summary(s: &CampaignSummary) -> String {
    let mut h = format!(
        "executions {}\nunique_blocks {}\ncorpus {}\nfindings {}\nhangs {}\n",
        s.executions, s.unique_blocks, s.corpus_size, s.findings, s.hangs
    );
    for isr in &s.disabled_isrs {
        let _ = writeln!(h, "disabled_isr {isr}");
    }
    for b in &s.buckets {
        let _ = writeln!(
            h,
            "bucket {:016x} {} {}:{} count {}{}",
            b.signature,
            b.kind,
            b.function,
            b.block,
            b.count,
            if b.stable { "" } else { " unstable" }
        );
    }
    h
}

fn fuzz(ctx: &Ctx, file: &Path, passes: &Passes, flags: &FuzzFlags) -> CmdResult<u8> {
    let p = load_program(file)?;
    let ip = pipeline(&p, passes, ctx.seed)?;
    let (budget, opts, seeds) = fuzz_setup(flags)?;
    let started = Instant::now();
    let c = fuzz_whole_with(&ip, &seeds, budget, ctx.seed, &opts).input_err("cannot fuzz")?;
    write_campaign(ctx, &ip, &c, started)
}

fn fuzz_fn(ctx: &Ctx, function: &str, file: &Path, passes: &Passes, flags: &FuzzFlags) -> CmdResult<u8> {
    let p = load_program(file)?;
    let cfg: PassConfig = passes.config(ctx.seed);
    let (ip, specs) = function_harness(&p, function, &cfg).input_err("cannot build harness")?;
    ctx.out.write("argspecs.txt", format_specs(&specs) + "\n")?;
    ctx.out.write("argspecs.json", to_json(&specs))?;
    if !ctx.json {
        eprintln!("harness {}", format_specs(&specs));
    }
    let (budget, opts, seeds) = fuzz_setup(flags)?;
    let started = Instant::now();
    let c = fuzz_whole_with(&ip, &seeds, budget, ctx.seed, &opts).input_err("cannot fuzz")?;
    write_campaign(ctx, &ip, &c, started)
}

/// Runs `cmd` via `sh -c` with the rendered config file as `$1`.
fn shell_oracle(cmd: &str, candidate: &str) -> CmdResult<bool> {
    let file = tempfile::Builder::new()
        .prefix("rehost-configs")
        .suffix(".txt")
        .tempfile()
        .internal_err("cannot create temp file")?;
    fs::write(file.path(), candidate).internal_err("cannot write temp file")?;
    let status = Process::new("sh")
        .arg("-c")
        .arg(cmd)
        .arg("rehost")
        .arg(file.path())
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .status()
        .internal_err("cannot run oracle command")?;
    Ok(status.success())
}

fn linkplan(ctx: &Ctx, manifest: &Path, oracle_cmd: Option<&str>) -> CmdResult<u8> {
    let m = Manifest::from_json(&read_text(manifest)?).input_err(manifest.display())?;
    let (plan, report) = m.plan().input_err("cannot plan link")?;
    let accepted_configs = match oracle_cmd {
        Some(cmd) => {
            let mut failure = None;
            let picked = select_configs(&m.configs, |cs| match shell_oracle(cmd, &cs.render()) {
                Ok(ok) => ok,
                Err(e) => {
                    failure.get_or_insert(e);
                    false
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            Some(picked.input_err("config selection failed")?)
        }
        None => None,
    };
    let outcome = LinkOutcome {
        plan,
        report,
        accepted_configs,
    };
    ctx.out.write("linkplan.json", to_json(&outcome))?;
    if let Some(cs) = &outcome.accepted_configs {
        ctx.out.write("configs.txt", cs.render())?;
    }
    let mut human = String::new();
    for o in &outcome.plan.selected {
        let _ = writeln!(human, "object {o}");
    }
    for r in &outcome.plan.renames {
        let _ = writeln!(human, "rename {}: {} -> {}", r.object, r.old, r.new);
    }
    for a in &outcome.plan.alias_bindings {
        let _ = writeln!(human, "alias {} = {}", a.alias, a.canonical);
    }
    if let Some(cs) = &outcome.accepted_configs {
        human.push_str(&cs.render());
    }
    for u in &outcome.report.unresolved {
        let _ = writeln!(human, "unresolved {} in {}", u.symbol, u.object);
    }
    for d in &outcome.report.duplicate_strong {
        let _ = writeln!(human, "duplicate {} in {}", d.symbol, d.objects.join(","));
    }
    ctx.emit(&json!(outcome), &human);
    Ok(if outcome.report.is_valid() { EXIT_OK } else { EXIT_INPUT })
}

fn report(ctx: &Ctx, dir: &Path, roots: &[String]) -> CmdResult<u8> {
    let artifact = dir.join("artifact.json");
    let ip = InstrumentedProgram::from_json(&read_text(&artifact)?).input_err(artifact.display())?;
    let campaign = dir.join("campaign.json");
    let summary: CampaignSummary =
        serde_json::from_str(&read_text(&campaign)?).input_err(campaign.display())?;
    let roots = if roots.is_empty() {
        default_roots(&ip)
    } else {
        roots.to_vec()
    };
    let cov = coverage_report(&summary.coverage, &ip, &roots)
        .map_err(|e| CmdError::input(format!("unknown root function `{}`", e.0)))?;
    // without --out the report lands next to the campaign it describes
    let out = if ctx.out.enabled() {
        None
    } else {
        Some(Out::new(Some(dir))?)
    };
    let out = out.as_ref().unwrap_or(&ctx.out);
    out.write("coverage.json", to_json(&cov))?;
    out.write("coverage_functions.csv", cov.functions_csv())?;
    out.write("coverage_cdf.csv", cov.cdf_csv())?;
    let mut human = format!(
        "unique_blocks {}\nreachable_functions {}\ntriggered_functions {}\ntriggered_pct {:.1}\n",
        cov.unique_blocks, cov.reachable_functions, cov.triggered_functions, cov.triggered_pct
    );
    for f in &cov.functions {
        let _ = writeln!(human, "{} {}/{}", f.function, f.blocks_hit, f.blocks_total);
    }
    ctx.emit(&json!(cov), &human);
    Ok(EXIT_OK)
}
