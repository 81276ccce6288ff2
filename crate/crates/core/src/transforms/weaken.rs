use std::collections::BTreeSet;

use crate::fir::{Program, Terminator};

use super::taint::TaintSummary;

/// Marks each branch whose condition may be MMIO-tainted as weakened and
/// clears the mark everywhere else. Returns the weakened (function, block)
/// sites.
pub fn weaken_conditions(p: &Program, taint: &TaintSummary) -> (Program, BTreeSet<(String, usize)>) {
    let mut out = p.clone();
    let mut sites = BTreeSet::new();
    for f in out.functions.values_mut() {
        for (b, blk) in f.blocks.iter_mut().enumerate() {
            if let Terminator::Branch { cond, weakened, .. } = &mut blk.term {
                *weakened = taint.expr_tainted(&f.name, cond);
                if *weakened {
                    sites.insert((f.name.clone(), b));
                }
            }
        }
    }
    (out, sites)
}
