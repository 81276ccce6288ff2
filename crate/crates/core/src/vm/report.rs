use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::transforms::BITMAP_BITS;

const WORDS: usize = BITMAP_BITS / 64;

/// 65536-bit block coverage bitmap. Serialized as the sorted list of set ids.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Coverage {
    words: Box<[u64; WORDS]>,
}

impl Default for Coverage {
    fn default() -> Self {
        Coverage {
            words: Box::new([0; WORDS]),
        }
    }
}

impl fmt::Debug for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Coverage({} bits)", self.count())
    }
}

impl Coverage {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn set(&mut self, id: u16) {
        self.words[id as usize / 64] |= 1 << (id % 64);
    }

    pub fn get(&self, id: u16) -> bool {
        self.words[id as usize / 64] >> (id % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    /// Bits set here but not in `base`.
    pub fn new_bits_over(&self, base: &Coverage) -> usize {
        self.words
            .iter()
            .zip(base.words.iter())
            .map(|(a, b)| (a & !b).count_ones() as usize)
            .sum()
    }

    /// ORs `other` in and returns how many bits were newly set.
    pub fn merge(&mut self, other: &Coverage) -> usize {
        let mut added = 0;
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            added += (b & !*a).count_ones() as usize;
            *a |= b;
        }
        added
    }

    pub fn ids(&self) -> impl Iterator<Item = u16> + '_ {
        self.words.iter().enumerate().flat_map(|(i, w)| {
            (0..64u32)
                .filter(move |k| w >> k & 1 == 1)
                .map(move |k| (i * 64 + k as usize) as u16)
        })
    }

    /// Raw little-endian bytes, 8 KiB.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.words.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != WORDS * 8 {
            return None;
        }
        let mut c = Coverage::new();
        for (i, chunk) in bytes.chunks_exact(8).enumerate() {
            c.words[i] = u64::from_le_bytes(chunk.try_into().ok()?);
        }
        Some(c)
    }
}

impl FromIterator<u16> for Coverage {
    fn from_iter<I: IntoIterator<Item = u16>>(iter: I) -> Self {
        let mut c = Coverage::new();
        for id in iter {
            c.set(id);
        }
        c
    }
}

impl Serialize for Coverage {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.ids())
    }
}

impl<'de> Deserialize<'de> for Coverage {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ids: Vec<u16> = Vec::deserialize(d)?;
        Ok(ids.into_iter().collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CrashKind {
    OobRead,
    OobWrite,
    NullDeref,
    DivByZero,
    AssertFail,
    UnmappedAccess,
}

impl CrashKind {
    pub fn name(self) -> &'static str {
        match self {
            CrashKind::OobRead => "OobRead",
            CrashKind::OobWrite => "OobWrite",
            CrashKind::NullDeref => "NullDeref",
            CrashKind::DivByZero => "DivByZero",
            CrashKind::AssertFail => "AssertFail",
            CrashKind::UnmappedAccess => "UnmappedAccess",
        }
    }
}

impl fmt::Display for CrashKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub function: String,
    pub block: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashRecord {
    pub kind: CrashKind,
    pub function: String,
    pub block: usize,
    /// Instruction index in the block; equal to the block length for the
    /// terminator.
    pub instr: usize,
    /// Innermost first.
    pub stack: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_len: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u32>,
    pub detail: String,
}

impl CrashRecord {
    pub fn site(&self) -> Site {
        Site {
            function: self.function.clone(),
            block: self.block,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome")]
pub enum Outcome {
    CleanExit,
    Crash(CrashRecord),
    Hang,
    InputExhaustedExit,
}

impl Outcome {
    pub fn crash(&self) -> Option<&CrashRecord> {
        match self {
            Outcome::Crash(c) => Some(c),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Outcome::CleanExit => "CleanExit",
            Outcome::Crash(_) => "Crash",
            Outcome::Hang => "Hang",
            Outcome::InputExhaustedExit => "InputExhaustedExit",
        }
    }

    pub fn is_clean(&self) -> bool {
        matches!(self, Outcome::CleanExit | Outcome::InputExhaustedExit)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub outcome: Outcome,
    pub instructions_executed: u64,
    pub bytes_consumed: u64,
    pub input_exhausted: bool,
    pub disabled_isrs: BTreeSet<String>,
    /// Most recent branch whose condition carried MMIO taint.
    pub last_tainted_branch: Option<Site>,
    pub coverage: Coverage,
}
