use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fir::{Expr, Instr, Program};

/// Replaces every inline-assembly node with assignments of 0 or 1 to its
/// outputs, drawn from a generator seeded with `seed`. Functions are visited
/// in name order so the draw sequence is stable.
pub fn elide_asm(p: &Program, seed: u64) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = p.clone();
    for f in out.functions.values_mut() {
        for blk in &mut f.blocks {
            if !blk.instrs.iter().any(|i| matches!(i, Instr::Asm { .. })) {
                continue;
            }
            let mut rewritten = Vec::with_capacity(blk.instrs.len());
            for ins in blk.instrs.drain(..) {
                match ins {
                    Instr::Asm { outputs, .. } => {
                        for dst in outputs {
                            let v: u32 = rng.gen_range(0..=1);
                            rewritten.push(Instr::Let {
                                dst,
                                expr: Expr::Int(v),
                            });
                        }
                    }
                    other => rewritten.push(other),
                }
            }
            blk.instrs = rewritten;
        }
    }
    out
}

#[cfg(test)]
fn has_asm(p: &Program) -> bool {
    p.functions
        .values()
        .any(|f| f.instrs().any(|(_, _, i)| matches!(i, Instr::Asm { .. })))
}
