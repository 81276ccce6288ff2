//! Instrumentation passes turning a [`Program`] into an
//! [`InstrumentedProgram`]: asm elision, MMIO hooking, condition weakening,
//! dispatcher injection and coverage probes, applied in that order.

mod artifact;
mod asm;
mod dispatcher;
mod mmio;
mod probes;
mod taint;
mod weaken;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fir::{layout_memory, LayoutOverflow, MemoryLayout, Program};
use crate::mmio::{build_mmio_map, collect_constant_addresses, MmioMap};

pub use artifact::{ArtifactError, ARTIFACT_FORMAT, ARTIFACT_VERSION};
pub use asm::elide_asm;
pub use dispatcher::{inject_dispatcher, DISPATCHER_NAME};
pub use mmio::instrument_mmio;
pub use probes::{block_table, probe_id, BlockProbe, BITMAP_BITS};
pub use taint::{taint_summary, FunctionTaint, TaintSummary};
pub use weaken::weaken_conditions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pass {
    ElideAsm,
    InstrumentMmio,
    WeakenConditions,
    InjectDispatcher,
    CoverageProbes,
}

impl Pass {
    /// Passes that must be recorded before probes are inserted.
    pub const BEFORE_PROBES: [Pass; 4] = [
        Pass::ElideAsm,
        Pass::InstrumentMmio,
        Pass::WeakenConditions,
        Pass::InjectDispatcher,
    ];
}

/// One pipeline step; `applied` is false when the pass was toggled off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassRecord {
    pub pass: Pass,
    pub applied: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransformError {
    #[error("condition weakening needs MMIO instrumentation for its taint sources")]
    WeakenWithoutMmio,
    #[error("pass order error: {missing:?} has not been run")]
    PassOrder { missing: Pass },
    #[error(transparent)]
    Layout(#[from] LayoutOverflow),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassConfig {
    pub elide_asm: bool,
    pub mmio: bool,
    pub weaken: bool,
    pub dispatcher: bool,
    /// Seed for asm elision.
    pub seed: u64,
}

impl Default for PassConfig {
    fn default() -> Self {
        PassConfig {
            elide_asm: true,
            mmio: true,
            weaken: true,
            dispatcher: true,
            seed: 0,
        }
    }
}

impl PassConfig {
    /// Every pass off: the program runs as written.
    pub fn none() -> Self {
        PassConfig {
            elide_asm: false,
            mmio: false,
            weaken: false,
            dispatcher: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        if self.weaken && !self.mmio {
            return Err(TransformError::WeakenWithoutMmio);
        }
        Ok(())
    }
}

/// A program between passes, with the metadata gathered so far.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PassState {
    pub program: Program,
    pub mmio_map: MmioMap,
    pub weakened_branches: BTreeSet<(String, usize)>,
    pub dispatcher_task: Option<String>,
    pub passes_applied: Vec<PassRecord>,
}

impl PassState {
    pub fn new(program: Program) -> Self {
        PassState {
            program,
            mmio_map: MmioMap::default(),
            weakened_branches: BTreeSet::new(),
            dispatcher_task: None,
            passes_applied: Vec::new(),
        }
    }

    fn record(&mut self, pass: Pass, applied: bool) {
        self.passes_applied.push(PassRecord { pass, applied });
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstrumentedProgram {
    pub program: Program,
    pub block_table: Vec<BlockProbe>,
    pub mmio_map: MmioMap,
    pub weakened_branches: BTreeSet<(String, usize)>,
    pub dispatcher_task: Option<String>,
    pub passes_applied: Vec<PassRecord>,
}

impl InstrumentedProgram {
    pub fn layout(&self) -> Result<MemoryLayout, LayoutOverflow> {
        layout_memory(&self.program)
    }

    pub fn pass_applied(&self, pass: Pass) -> bool {
        self.passes_applied.iter().any(|r| r.pass == pass && r.applied)
    }
}

/// Emits the block table. Every earlier pass must already be recorded, in
/// order, whether it ran or was toggled off.
pub fn insert_coverage_probes(state: PassState) -> Result<InstrumentedProgram, TransformError> {
    let recorded: Vec<Pass> = state.passes_applied.iter().map(|r| r.pass).collect();
    let mut cursor = 0;
    for want in Pass::BEFORE_PROBES {
        match recorded[cursor..].iter().position(|p| *p == want) {
            Some(i) => cursor += i + 1,
            None => return Err(TransformError::PassOrder { missing: want }),
        }
    }
    let mut state = state;
    state.record(Pass::CoverageProbes, true);
    Ok(InstrumentedProgram {
        block_table: block_table(&state.program),
        program: state.program,
        mmio_map: state.mmio_map,
        weakened_branches: state.weakened_branches,
        dispatcher_task: state.dispatcher_task,
        passes_applied: state.passes_applied,
    })
}

/// MMIO map for `p` as it will look once the dispatcher (if enabled) is in
/// place, since the extra task stack changes the layout.
pub fn analyze_mmio(p: &Program, with_dispatcher: bool) -> Result<MmioMap, LayoutOverflow> {
    let shaped = if with_dispatcher {
        inject_dispatcher(p)
    } else {
        p.clone()
    };
    let layout = layout_memory(&shaped)?;
    Ok(build_mmio_map(&collect_constant_addresses(&shaped, &layout)))
}

pub fn run_pipeline(p: &Program, cfg: &PassConfig) -> Result<InstrumentedProgram, TransformError> {
    cfg.validate()?;
    let mut st = PassState::new(p.clone());

    if cfg.elide_asm {
        st.program = elide_asm(&st.program, cfg.seed);
    }
    st.record(Pass::ElideAsm, cfg.elide_asm);

    if cfg.mmio {
        st.mmio_map = analyze_mmio(&st.program, cfg.dispatcher)?;
        st.program = instrument_mmio(&st.program);
    }
    st.record(Pass::InstrumentMmio, cfg.mmio);

    if cfg.weaken {
        let shaped = if cfg.dispatcher {
            inject_dispatcher(&st.program)
        } else {
            st.program.clone()
        };
        let layout = layout_memory(&shaped)?;
        let taint = taint_summary(&st.program, &layout, &st.mmio_map);
        let (prog, sites) = weaken_conditions(&st.program, &taint);
        st.program = prog;
        st.weakened_branches = sites;
    }
    st.record(Pass::WeakenConditions, cfg.weaken);

    if cfg.dispatcher {
        st.program = inject_dispatcher(&st.program);
        if st.program.tasks.iter().any(|t| t.name == DISPATCHER_NAME) {
            st.dispatcher_task = Some(DISPATCHER_NAME.to_string());
        }
    }
    st.record(Pass::InjectDispatcher, cfg.dispatcher);

    // Surface layout overflow here rather than at VM construction.
    layout_memory(&st.program)?;
    insert_coverage_probes(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fir::parse_program;

    const SRC: &str = r#"
        const REG = 0x40000000;
        vector { irq }
        task t priority 2 calls worker;
        fn irq() { b0: v = load32 REG; return; }
        fn worker() { b0: s = load32 REG + 4; branch s, b1, b0; b1: return; }
        fn main() { b0: asm "mrs r0, ipsr" -> r; return; }
    "#;

    #[test]
    fn full_pipeline_records_every_pass() {
        let p = parse_program(SRC).unwrap();
        let ip = run_pipeline(&p, &PassConfig::default()).unwrap();
        let passes: Vec<Pass> = ip.passes_applied.iter().map(|r| r.pass).collect();
        assert_eq!(
            passes,
            vec![
                Pass::ElideAsm,
                Pass::InstrumentMmio,
                Pass::WeakenConditions,
                Pass::InjectDispatcher,
                Pass::CoverageProbes
            ]
        );
        assert_eq!(ip.dispatcher_task.as_deref(), Some(DISPATCHER_NAME));
        assert!(ip.weakened_branches.contains(&("worker".to_string(), 0)));
        assert_eq!(ip.mmio_map.intervals.len(), 1);
    }

    #[test]
    fn pipeline_idempotent() {
        let p = parse_program(SRC).unwrap();
        let cfg = PassConfig::default();
        let once = run_pipeline(&p, &cfg).unwrap();
        let twice = run_pipeline(&once.program, &cfg).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn probes_require_prior_passes() {
        let p = parse_program(SRC).unwrap();
        let mut st = PassState::new(p);
        st.passes_applied = vec![
            PassRecord { pass: Pass::ElideAsm, applied: true },
            PassRecord { pass: Pass::WeakenConditions, applied: true },
        ];
        assert_eq!(
            insert_coverage_probes(st).unwrap_err(),
            TransformError::PassOrder { missing: Pass::InstrumentMmio }
        );
    }

    #[test]
    fn weaken_without_mmio_rejected() {
        let p = parse_program(SRC).unwrap();
        let cfg = PassConfig { mmio: false, ..PassConfig::default() };
        assert_eq!(run_pipeline(&p, &cfg).unwrap_err(), TransformError::WeakenWithoutMmio);
    }
}
