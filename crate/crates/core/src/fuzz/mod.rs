//! Coverage-guided greybox fuzzing of instrumented programs, whole-program
//! and one function at a time.
//!
//! Every execution starts from a fresh VM, so a campaign behaves like a
//! persistent-mode fuzzer whose state reset is free. With one worker and an
//! execution budget the campaign is a pure function of its inputs.

mod argspec;
mod coverage;
mod harness;
mod mutate;
mod triage;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fir::{LayoutOverflow, Program, SemanticError};
use crate::transforms::{run_pipeline, InstrumentedProgram, Pass, PassConfig, TransformError};
use crate::vm::{calibrate_isrs, CompiledProgram, Coverage, ExecutionReport, InputStream, Limits, Outcome, Vm};

pub use argspec::{format_specs, infer_arg_specs, ArgKind, ArgSpec, SizeOf, FIXED_FALLBACK};
pub use coverage::{coverage_report, default_roots, CdfPoint, CoverageReport, FunctionCoverage};
pub use harness::{build_fn_harness, ARRAY_LEN_MODULUS, HARNESS_NAME};
pub use mutate::{mutate, mutate_once, splice, INTERESTING, MAX_INPUT_LEN};
pub use triage::{replay, triage, CrashBucket, Failure, Finding, SIGNATURE_FRAMES};

/// Per-execution instruction budget while fuzzing. Lower than the VM
/// default so hanging inputs stay cheap.
pub const FUZZ_INSTRUCTION_BUDGET: u64 = 20_000;
/// Seed used when the caller supplies none.
pub const DEFAULT_SEED_LEN: usize = 64;

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("fuzz budget is zero")]
    BudgetZero,
    #[error("function `{0}` has no buffer parameters")]
    NoBufferParams(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("arg specs do not fit `{func}`: {detail}")]
    SpecMismatch { func: String, detail: String },
    #[error("generated harness is invalid: {0}")]
    Harness(#[from] SemanticError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Layout(#[from] LayoutOverflow),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Executions(u64),
    /// Wall clock; not reproducible.
    Seconds(f64),
}

impl Budget {
    fn is_zero(&self) -> bool {
        match *self {
            Budget::Executions(n) => n == 0,
            Budget::Seconds(s) => s <= 0.0 || !s.is_finite(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FuzzOptions {
    pub limits: Limits,
    pub workers: usize,
    /// Disable ISRs that crash on their own before fuzzing.
    pub calibrate: bool,
}

impl Default for FuzzOptions {
    fn default() -> Self {
        FuzzOptions {
            limits: Limits {
                instruction_budget: FUZZ_INSTRUCTION_BUDGET,
                ..Limits::default()
            },
            workers: 1,
            calibrate: true,
        }
    }
}

/// A compiled program plus everything needed to execute one input.
#[derive(Clone, Debug)]
pub struct Target {
    prog: Arc<CompiledProgram>,
    limits: Limits,
    disabled: BTreeSet<String>,
}

impl Target {
    pub fn new(ip: &InstrumentedProgram, limits: Limits) -> Result<Self, LayoutOverflow> {
        let layout = ip.layout()?;
        Ok(Target {
            prog: Arc::new(CompiledProgram::new(ip, &layout)),
            limits,
            disabled: BTreeSet::new(),
        })
    }

    /// Runs ISR calibration when a dispatcher is present.
    pub fn calibrated(mut self) -> Self {
        if self.prog.program().tasks.iter().any(|t| t.name == crate::transforms::DISPATCHER_NAME) {
            self.disabled = calibrate_isrs(&self.prog, self.limits);
        }
        self
    }

    pub fn disabled_isrs(&self) -> &BTreeSet<String> {
        &self.disabled
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    pub fn execute(&self, input: &[u8]) -> ExecutionReport {
        Vm::new(
            Arc::clone(&self.prog),
            InputStream::new(input.to_vec()),
            self.limits,
        )
        .with_disabled_isrs(&self.disabled)
        .run()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    #[serde(with = "hex")]
    pub input: Vec<u8>,
    /// Bitmap bits this input added when admitted.
    pub new_bits: usize,
    pub found_at: u64,
}

#[derive(Clone, Debug)]
pub struct Campaign {
    pub corpus: Vec<CorpusEntry>,
    pub findings: Vec<Finding>,
    pub bitmap: Coverage,
    pub executions: u64,
    /// Every run that hit the instruction budget, tainted or not.
    pub hangs: u64,
    pub rng_seed: u64,
    pub budget: Budget,
    pub workers: usize,
    pub target: Target,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub executions: u64,
    pub unique_blocks: usize,
    pub corpus_size: usize,
    pub findings: usize,
    pub hangs: u64,
    pub rng_seed: u64,
    pub budget: Budget,
    pub workers: usize,
    pub disabled_isrs: BTreeSet<String>,
    pub buckets: Vec<CrashBucket>,
    pub coverage: Coverage,
}

impl Campaign {
    pub fn buckets(&self) -> Vec<CrashBucket> {
        triage(&self.findings, &self.target)
    }

    pub fn summary(&self) -> CampaignSummary {
        CampaignSummary {
            executions: self.executions,
            unique_blocks: self.bitmap.count(),
            corpus_size: self.corpus.len(),
            findings: self.findings.len(),
            hangs: self.hangs,
            rng_seed: self.rng_seed,
            budget: self.budget,
            workers: self.workers,
            disabled_isrs: self.target.disabled.clone(),
            buckets: self.buckets(),
            coverage: self.bitmap.clone(),
        }
    }
}

struct State {
    corpus: Vec<CorpusEntry>,
    findings: Vec<Finding>,
    bitmap: Coverage,
    hangs: u64,
    completed: u64,
}

impl State {
    /// Records one execution. Inputs that still add bits are admitted
    /// unless they crash; a crashing input is only admitted when the corpus
    /// would otherwise be empty.
    fn absorb(&mut self, input: Vec<u8>, report: ExecutionReport) {
        self.completed += 1;
        let found_at = self.completed;
        if report.outcome == Outcome::Hang {
            self.hangs += 1;
        }
        let new_bits = self.bitmap.merge(&report.coverage);
        let crashed = report.outcome.crash().is_some();
        if new_bits > 0 && (!crashed || self.corpus.is_empty()) {
            self.corpus.push(CorpusEntry {
                input: input.clone(),
                new_bits,
                found_at,
            });
        }
        if let Some(failure) = Failure::from_report(&report) {
            self.findings.push(Finding {
                input,
                failure,
                found_at,
            });
        }
    }
}

struct Clock {
    budget: Budget,
    started: Instant,
    issued: AtomicU64,
}

impl Clock {
    /// Reserves one execution, or `false` once the budget is spent.
    fn claim(&self) -> bool {
        match self.budget {
            Budget::Executions(n) => self.issued.fetch_add(1, Ordering::Relaxed) < n,
            Budget::Seconds(s) => self.started.elapsed() < Duration::from_secs_f64(s),
        }
    }
}

fn worker(target: &Target, state: &Mutex<State>, clock: &Clock, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while clock.claim() {
        let (parent, other) = {
            let st = state.lock().expect("campaign state poisoned");
            if st.corpus.is_empty() {
                return;
            }
            let n = st.corpus.len();
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            (st.corpus[a].input.clone(), st.corpus[b].input.clone())
        };
        let child = mutate(&mut rng, &parent, Some(&other));
        let report = target.execute(&child);
        state
            .lock()
            .expect("campaign state poisoned")
            .absorb(child, report);
    }
}

/// Fuzzes an already-built target. Seeds run first, in order; with no seeds
/// a single zero input of [`DEFAULT_SEED_LEN`] bytes is used.
pub fn fuzz_target(
    target: Target,
    seeds: &[Vec<u8>],
    budget: Budget,
    rng_seed: u64,
    workers: usize,
) -> Result<Campaign, FuzzError> {
    if budget.is_zero() {
        return Err(FuzzError::BudgetZero);
    }
    let default_seed = [vec![0u8; DEFAULT_SEED_LEN]];
    let seeds = if seeds.is_empty() { &default_seed[..] } else { seeds };
    let clock = Clock {
        budget,
        started: Instant::now(),
        issued: AtomicU64::new(0),
    };
    let state = Mutex::new(State {
        corpus: Vec::new(),
        findings: Vec::new(),
        bitmap: Coverage::new(),
        hangs: 0,
        completed: 0,
    });
    for s in seeds {
        if !clock.claim() {
            break;
        }
        let report = target.execute(s);
        state.lock().expect("campaign state poisoned").absorb(s.clone(), report);
    }
    let workers = workers.max(1);
    if workers == 1 {
        worker(&target, &state, &clock, rng_seed);
    } else {
        std::thread::scope(|scope| {
            for w in 0..workers as u64 {
                let (target, state, clock) = (&target, &state, &clock);
                // worker 0 keeps the campaign seed; the rest get distinct streams
                let seed = rng_seed ^ w.wrapping_mul(0x9E37_79B9_7F4A_7C15);
                scope.spawn(move || worker(target, state, clock, seed));
            }
        });
    }
    let st = state.into_inner().expect("campaign state poisoned");
    Ok(Campaign {
        corpus: st.corpus,
        findings: st.findings,
        bitmap: st.bitmap,
        executions: st.completed,
        hangs: st.hangs,
        rng_seed,
        budget,
        workers,
        target,
    })
}

/// Whole-program campaign with default options.
pub fn fuzz_whole(
    ip: &InstrumentedProgram,
    seeds: &[Vec<u8>],
    budget: Budget,
    rng_seed: u64,
) -> Result<Campaign, FuzzError> {
    fuzz_whole_with(ip, seeds, budget, rng_seed, &FuzzOptions::default())
}

pub fn fuzz_whole_with(
    ip: &InstrumentedProgram,
    seeds: &[Vec<u8>],
    budget: Budget,
    rng_seed: u64,
    opts: &FuzzOptions,
) -> Result<Campaign, FuzzError> {
    if budget.is_zero() {
        return Err(FuzzError::BudgetZero);
    }
    let mut target = Target::new(ip, opts.limits)?;
    if opts.calibrate && ip.pass_applied(Pass::InjectDispatcher) {
        target = target.calibrated();
    }
    fuzz_target(target, seeds, budget, rng_seed, opts.workers)
}

/// The instrumented single-call harness for `fname`, with the specs used.
pub fn function_harness(
    p: &Program,
    fname: &str,
    cfg: &PassConfig,
) -> Result<(InstrumentedProgram, Vec<ArgSpec>), FuzzError> {
    let specs = infer_arg_specs(p, fname)?;
    let harness = build_fn_harness(p, fname, &specs)?;
    let cfg = PassConfig {
        dispatcher: false,
        ..*cfg
    };
    Ok((run_pipeline(&harness, &cfg)?, specs))
}

pub fn fuzz_function(
    p: &Program,
    fname: &str,
    budget: Budget,
    rng_seed: u64,
) -> Result<Campaign, FuzzError> {
    fuzz_function_with(p, fname, budget, rng_seed, &PassConfig::default(), &FuzzOptions::default())
}

pub fn fuzz_function_with(
    p: &Program,
    fname: &str,
    budget: Budget,
    rng_seed: u64,
    cfg: &PassConfig,
    opts: &FuzzOptions,
) -> Result<Campaign, FuzzError> {
    let (ip, _) = function_harness(p, fname, cfg)?;
    fuzz_whole_with(&ip, &[], budget, rng_seed, opts)
}

#[cfg(test)]
mod tests;
