use crate::fir::{Instr, Program};

/// Marks every load and store as a guarded MMIO access. The VM resolves the
/// guard per access: addresses inside the map read from the input stream
/// (loads) or are dropped (stores); anything else is a plain memory access.
pub fn instrument_mmio(p: &Program) -> Program {
    let mut out = p.clone();
    for f in out.functions.values_mut() {
        for blk in &mut f.blocks {
            for ins in &mut blk.instrs {
                match ins {
                    Instr::Load { hooked, .. } | Instr::Store { hooked, .. } => *hooked = true,
                    _ => {}
                }
            }
        }
    }
    out
}
