use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Program;

pub const GLOBALS_BASE: u32 = 0x2000_0000;
pub const GLOBALS_CAPACITY: u32 = 512 * 1024;
pub const STACKS_BASE: u32 = 0x2008_0000;
pub const STACKS_CAPACITY: u32 = 512 * 1024;
pub const STACK_SIZE: u32 = 8 * 1024;
pub const HEAP_BASE: u32 = 0x2010_0000;
pub const HEAP_SIZE: u32 = 1024 * 1024;
pub const PAGE_SIZE: u32 = 4096;
/// Half-open address band reserved for device registers.
pub const DEVICE_BAND: (u32, u32) = (0x4000_0000, 0x6000_0000);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("layout overflow: {segment} needs {needed} bytes, capacity is {capacity}")]
pub struct LayoutOverflow {
    pub segment: &'static str,
    pub needed: u64,
    pub capacity: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    Globals,
    Stack,
    Heap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub base: u32,
    pub size: u32,
}

impl Segment {
    pub fn contains(&self, addr: u32) -> bool {
        addr >= self.base && (addr - self.base) < self.size
    }

    /// Inclusive last address; `None` for an empty segment.
    pub fn last(&self) -> Option<u32> {
        self.size.checked_sub(1).map(|s| self.base + s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalSlot {
    pub name: String,
    pub address: u32,
    pub size: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackRegion {
    /// Entry function name for the first region, task name otherwise.
    pub owner: String,
    pub base: u32,
    pub size: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryLayout {
    pub globals_base: u32,
    pub globals: Vec<GlobalSlot>,
    pub stacks_base: u32,
    pub stacks: Vec<StackRegion>,
    pub heap_base: u32,
    pub heap_size: u32,
    pub segments: Vec<Segment>,
}

impl MemoryLayout {
    pub fn global(&self, name: &str) -> Option<&GlobalSlot> {
        self.globals.iter().find(|g| g.name == name)
    }

    pub fn global_address(&self, name: &str) -> Option<u32> {
        self.global(name).map(|g| g.address)
    }

    pub fn segment_of(&self, addr: u32) -> Option<&Segment> {
        self.segments.iter().find(|s| s.contains(addr))
    }

    pub fn in_segment(&self, addr: u32) -> bool {
        self.segment_of(addr).is_some()
    }

    /// Bytes occupied by globals.
    pub fn globals_size(&self) -> u32 {
        self.globals.iter().map(|g| g.size).sum()
    }
}

/// Packs globals, assigns one stack per execution context (entry first,
/// then tasks in declaration order) and places the heap.
pub fn layout_memory(p: &Program) -> Result<MemoryLayout, LayoutOverflow> {
    let mut globals = Vec::with_capacity(p.globals.len());
    let mut offset: u64 = 0;
    for g in &p.globals {
        let size = g.byte_size();
        if offset + size > GLOBALS_CAPACITY as u64 {
            return Err(LayoutOverflow {
                segment: "globals",
                needed: p.globals.iter().map(|g| g.byte_size()).sum(),
                capacity: GLOBALS_CAPACITY as u64,
            });
        }
        globals.push(GlobalSlot {
            name: g.name.clone(),
            address: GLOBALS_BASE + offset as u32,
            size: size as u32,
        });
        offset += size;
    }

    let owners = std::iter::once(p.entry.clone()).chain(p.tasks.iter().map(|t| t.name.clone()));
    let mut stacks = Vec::new();
    for (i, owner) in owners.enumerate() {
        let needed = (i as u64 + 1) * STACK_SIZE as u64;
        if needed > STACKS_CAPACITY as u64 {
            return Err(LayoutOverflow {
                segment: "stacks",
                needed: (p.tasks.len() as u64 + 1) * STACK_SIZE as u64,
                capacity: STACKS_CAPACITY as u64,
            });
        }
        stacks.push(StackRegion {
            owner,
            base: STACKS_BASE + i as u32 * STACK_SIZE,
            size: STACK_SIZE,
        });
    }

    let mut segments = Vec::new();
    if offset > 0 {
        segments.push(Segment {
            kind: SegmentKind::Globals,
            base: GLOBALS_BASE,
            size: offset as u32,
        });
    }
    segments.extend(stacks.iter().map(|s| Segment {
        kind: SegmentKind::Stack,
        base: s.base,
        size: s.size,
    }));
    segments.push(Segment {
        kind: SegmentKind::Heap,
        base: HEAP_BASE,
        size: HEAP_SIZE,
    });

    Ok(MemoryLayout {
        globals_base: GLOBALS_BASE,
        globals,
        stacks_base: STACKS_BASE,
        stacks,
        heap_base: HEAP_BASE,
        heap_size: HEAP_SIZE,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fir::parse_program;

    #[test]
    fn word_globals_pack() {
        let p = parse_program("global a; global b; fn main() { b0: return; }").unwrap();
        let l = layout_memory(&p).unwrap();
        assert_eq!(l.global_address("a"), Some(0x2000_0000));
        assert_eq!(l.global_address("b"), Some(0x2000_0004));
    }

    #[test]
    fn one_stack_per_task_plus_entry() {
        let p = parse_program(
            "task a priority 1 calls w; task b priority 2 calls w; task c priority 2 calls w;
             fn w() { b0: return; } fn main() { b0: return; }",
        )
        .unwrap();
        let l = layout_memory(&p).unwrap();
        let bases: Vec<u32> = l.stacks.iter().map(|s| s.base).collect();
        assert_eq!(bases, vec![0x2008_0000, 0x2008_2000, 0x2008_4000, 0x2008_6000]);
        assert!(l.stacks.iter().all(|s| s.size == 8 * 1024));
        assert_eq!(l.stacks[0].owner, "main");
    }

    #[test]
    fn oversized_globals_overflow() {
        let mut src = String::new();
        for i in 0..100 {
            src.push_str(&format!("global g{i}[10000];\n"));
        }
        src.push_str("fn main() { b0: return; }");
        let p = parse_program(&src).unwrap();
        let total: u64 = 100 * 10_000 * 4;
        assert!(total > GLOBALS_CAPACITY as u64);
        assert!(layout_memory(&p).is_err());
    }

    #[test]
    fn segments_disjoint_aligned_outside_device_band() {
        let p = parse_program(
            "global a[3]; global b = 7; task t priority 1 calls main; fn main() { b0: return; }",
        )
        .unwrap();
        let l = layout_memory(&p).unwrap();
        for (i, s) in l.segments.iter().enumerate() {
            assert_eq!(s.base % 4, 0);
            assert_eq!(s.size % 4, 0);
            let last = s.last().unwrap();
            assert!(last < DEVICE_BAND.0 || s.base >= DEVICE_BAND.1);
            for t in &l.segments[i + 1..] {
                assert!(last < t.base || t.last().unwrap() < s.base);
            }
        }
    }
}
