use std::collections::BTreeSet;
use std::sync::Arc;

use super::{CompiledProgram, InputStream, Limits, Outcome, Vm};

/// Runs entry initialization on an all-zero input, then invokes every ISR
/// once on its own copy of that state. ISRs whose lone invocation crashes
/// are returned for the dispatcher to skip.
pub fn calibrate_isrs(prog: &Arc<CompiledProgram>, limits: Limits) -> BTreeSet<String> {
    let mut disabled = BTreeSet::new();
    if prog.vector.is_empty() {
        return disabled;
    }
    let mut base = Vm::new(Arc::clone(prog), InputStream::empty(), limits);
    base.run_entry_init();
    let handlers: BTreeSet<usize> = prog.vector.iter().copied().collect();
    for f in handlers {
        let mut vm = base.clone();
        vm.executed = 0;
        if let Outcome::Crash(_) = vm.run_isolated(f) {
            disabled.insert(prog.functions[f].name.clone());
        }
    }
    disabled
}
