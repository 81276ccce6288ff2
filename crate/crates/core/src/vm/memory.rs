use std::collections::HashMap;

use crate::fir::{MemoryLayout, Program, Segment};

/// Byte-addressed memory for the laid-out segments, with one taint bit per
/// byte. Globals are dense; stack and heap segments are sparse because FIR
/// keeps locals and buffers out of raw memory.
#[derive(Clone, Debug)]
pub(crate) struct Memory {
    globals_base: u32,
    globals: Vec<u8>,
    globals_taint: Vec<bool>,
    sparse: HashMap<u32, (u8, bool)>,
    segments: Vec<Segment>,
}

impl Memory {
    pub fn new(p: &Program, layout: &MemoryLayout) -> Self {
        let size = layout.globals_size() as usize;
        let mut globals = vec![0u8; size];
        for (decl, slot) in p.globals.iter().zip(&layout.globals) {
            let init = decl.init.unwrap_or(0).to_le_bytes();
            let start = (slot.address - layout.globals_base) as usize;
            for chunk in globals[start..start + slot.size as usize].chunks_mut(4) {
                chunk.copy_from_slice(&init);
            }
        }
        Memory {
            globals_base: layout.globals_base,
            globals_taint: vec![false; size],
            globals,
            sparse: HashMap::new(),
            segments: layout.segments.clone(),
        }
    }

    /// True when all `len` bytes at `addr` fall inside one segment.
    pub fn mapped(&self, addr: u32, len: u32) -> bool {
        let Some(last) = addr.checked_add(len - 1) else {
            return false;
        };
        self.segments
            .iter()
            .any(|s| s.contains(addr) && s.contains(last))
    }

    fn global_index(&self, addr: u32) -> Option<usize> {
        let off = addr.checked_sub(self.globals_base)? as usize;
        (off < self.globals.len()).then_some(off)
    }

    fn byte(&self, addr: u32) -> (u8, bool) {
        match self.global_index(addr) {
            Some(i) => (self.globals[i], self.globals_taint[i]),
            None => self.sparse.get(&addr).copied().unwrap_or((0, false)),
        }
    }

    fn set_byte(&mut self, addr: u32, v: u8, taint: bool) {
        match self.global_index(addr) {
            Some(i) => {
                self.globals[i] = v;
                self.globals_taint[i] = taint;
            }
            None => {
                self.sparse.insert(addr, (v, taint));
            }
        }
    }

    /// Little-endian load; the caller has checked [`Memory::mapped`].
    pub fn load(&self, addr: u32, len: u32) -> (u32, bool) {
        let mut v = 0u32;
        let mut t = false;
        for k in 0..len {
            let (b, bt) = self.byte(addr + k);
            v |= (b as u32) << (8 * k);
            t |= bt;
        }
        (v, t)
    }

    pub fn store(&mut self, addr: u32, len: u32, value: u32, taint: bool) {
        for k in 0..len {
            self.set_byte(addr + k, (value >> (8 * k)) as u8, taint);
        }
    }

    pub fn globals(&self) -> &[u8] {
        &self.globals
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct HeapBuf {
    pub elems: Vec<u32>,
    pub taint: Vec<bool>,
}
