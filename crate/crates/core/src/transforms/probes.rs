use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::fir::Program;

pub const BITMAP_BITS: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockProbe {
    pub function: String,
    pub block: usize,
    pub probe: u16,
}

/// FNV-1a 64 of the function name, a NUL separator and the little-endian
/// block index, reduced mod 2^16.
pub fn probe_id(function: &str, block: usize) -> u16 {
    let mut h = FnvHasher::default();
    h.write(function.as_bytes());
    h.write_u8(0);
    h.write(&(block as u64).to_le_bytes());
    (h.finish() % BITMAP_BITS as u64) as u16
}

pub fn block_table(p: &Program) -> Vec<BlockProbe> {
    p.functions
        .values()
        .flat_map(|f| {
            (0..f.blocks.len()).map(move |b| BlockProbe {
                function: f.name.clone(),
                block: b,
                probe: probe_id(&f.name, b),
            })
        })
        .collect()
}
