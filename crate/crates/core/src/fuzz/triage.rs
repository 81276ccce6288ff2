//! Crash deduplication by stack-hash signature.

use std::collections::BTreeMap;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::Target;
use crate::vm::{CrashRecord, ExecutionReport, Outcome, Site};

/// Call-stack frames that enter the signature, innermost first.
pub const SIGNATURE_FRAMES: usize = 3;

/// A run worth reporting. Hangs only count when the last branch taken before
/// the budget ran out depended on device input; other hangs are ordinary
/// idle loops.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Failure {
    Crash(CrashRecord),
    Hang { site: Site },
}

impl Failure {
    pub fn from_report(r: &ExecutionReport) -> Option<Failure> {
        match &r.outcome {
            Outcome::Crash(c) => Some(Failure::Crash(c.clone())),
            Outcome::Hang => r
                .last_tainted_branch
                .clone()
                .map(|site| Failure::Hang { site }),
            Outcome::CleanExit | Outcome::InputExhaustedExit => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Failure::Crash(c) => c.kind.name(),
            Failure::Hang { .. } => "Hang",
        }
    }

    pub fn site(&self) -> Site {
        match self {
            Failure::Crash(c) => c.site(),
            Failure::Hang { site } => site.clone(),
        }
    }

    /// Instruction index; hangs are keyed by branch site alone.
    pub fn instr(&self) -> Option<usize> {
        match self {
            Failure::Crash(c) => Some(c.instr),
            Failure::Hang { .. } => None,
        }
    }

    pub fn top_frames(&self) -> &[String] {
        match self {
            Failure::Crash(c) => &c.stack[..c.stack.len().min(SIGNATURE_FRAMES)],
            Failure::Hang { .. } => &[],
        }
    }

    /// FNV-1a 64 over kind, function, block, instruction index (all ones for
    /// hangs) and the top frames, each string NUL-terminated and each
    /// integer 8 bytes little-endian.
    pub fn signature(&self) -> u64 {
        let site = self.site();
        let mut h = FnvHasher::default();
        let mut text = |s: &str| {
            h.write(s.as_bytes());
            h.write_u8(0);
        };
        text(self.kind_name());
        text(&site.function);
        h.write(&(site.block as u64).to_le_bytes());
        h.write(&self.instr().map_or(u64::MAX, |i| i as u64).to_le_bytes());
        for frame in self.top_frames() {
            h.write(frame.as_bytes());
            h.write_u8(0);
        }
        h.finish()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    #[serde(with = "hex")]
    pub input: Vec<u8>,
    pub failure: Failure,
    /// Execution number that produced it, counting from 1.
    pub found_at: u64,
}

mod sig_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashBucket {
    #[serde(with = "sig_hex")]
    pub signature: u64,
    pub kind: String,
    pub function: String,
    pub block: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub instr: Option<usize>,
    pub stack: Vec<String>,
    pub count: u64,
    #[serde(with = "hex")]
    pub representative: Vec<u8>,
    /// The representative reproduced the same signature on replay.
    pub stable: bool,
}

/// Re-executes `input` and returns its failure, if any.
pub fn replay(target: &Target, input: &[u8]) -> Option<Failure> {
    Failure::from_report(&target.execute(input))
}

/// Groups findings by signature, replaying each representative once.
/// Buckets come out ordered by kind, site and instruction.
pub fn triage(findings: &[Finding], target: &Target) -> Vec<CrashBucket> {
    let mut groups: BTreeMap<u64, (&Finding, u64)> = BTreeMap::new();
    for f in findings {
        groups.entry(f.failure.signature()).or_insert((f, 0)).1 += 1;
    }
    let mut buckets: Vec<CrashBucket> = groups
        .into_iter()
        .map(|(signature, (first, count))| {
            let site = first.failure.site();
            let stable = replay(target, &first.input).is_some_and(|r| r.signature() == signature);
            CrashBucket {
                signature,
                kind: first.failure.kind_name().to_string(),
                function: site.function,
                block: site.block,
                instr: first.failure.instr(),
                stack: first.failure.top_frames().to_vec(),
                count,
                representative: first.input.clone(),
                stable,
            }
        })
        .collect();
    buckets.sort_by(|a, b| {
        (&a.kind, &a.function, a.block, a.instr, a.signature)
            .cmp(&(&b.kind, &b.function, b.block, b.instr, b.signature))
    });
    buckets
}
