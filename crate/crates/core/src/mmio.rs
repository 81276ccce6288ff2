//! Constant-address MMIO discovery and the coalesced interval map.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fir::{ConstFolder, Instr, MemoryLayout, Program, PAGE_SIZE};

/// Addresses below this are the null guard band, never MMIO.
pub const MIN_MMIO_ADDRESS: u32 = 0x1000;
/// Pages whose boundary gap is at most this many bytes are merged.
pub const MERGE_GAP: u64 = 2048;

const PAGE_MASK: u32 = !(PAGE_SIZE - 1);

pub(crate) mod hex_u32 {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:#010x}"))
    }

    pub fn parse(text: &str) -> Option<u32> {
        let t = text.trim();
        match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
            Some(hex) => u32::from_str_radix(&hex.replace('_', ""), 16).ok(),
            None => t.parse().ok(),
        }
    }

    struct U32Visitor;

    impl Visitor<'_> for U32Visitor {
        type Value = u32;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a u32 as a number or a decimal/0x-hex string")
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<u32, E> {
            u32::try_from(v).map_err(|_| E::custom(format!("{v} does not fit in 32 bits")))
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<u32, E> {
            u32::try_from(v).map_err(|_| E::custom(format!("{v} does not fit in 32 bits")))
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<u32, E> {
            parse(v).ok_or_else(|| E::custom(format!("invalid address `{v}`")))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
        d.deserialize_any(U32Visitor)
    }
}

/// Inclusive address range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "hex_u32")]
    pub lo: u32,
    #[serde(with = "hex_u32")]
    pub hi: u32,
}

impl Interval {
    pub fn contains(&self, addr: u32) -> bool {
        self.lo <= addr && addr <= self.hi
    }

    /// Overlap with the half-open range `[base, end)`.
    pub fn overlaps(&self, base: u32, end: u32) -> bool {
        (self.lo as u64) < end as u64 && base <= self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:#x}, {:#x}]", self.lo, self.hi)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MmioMap {
    pub intervals: Vec<Interval>,
}

impl MmioMap {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn is_mmio(&self, addr: u32) -> bool {
        let idx = self.intervals.partition_point(|iv| iv.hi < addr);
        self.intervals.get(idx).is_some_and(|iv| iv.contains(addr))
    }

    /// True when any byte of the `len`-byte access at `addr` is MMIO.
    pub fn touches(&self, addr: u32, len: u32) -> bool {
        (0..len).any(|k| self.is_mmio(addr.wrapping_add(k)))
    }
}

pub fn is_mmio(m: &MmioMap, addr: u32) -> bool {
    m.is_mmio(addr)
}

fn page_of(addr: u32) -> Interval {
    let lo = addr & PAGE_MASK;
    Interval {
        lo,
        hi: lo + (PAGE_SIZE - 1),
    }
}

fn page_hits_segment(layout: &MemoryLayout, addr: u32) -> bool {
    let page = page_of(addr);
    layout
        .segments
        .iter()
        .any(|s| s.last().is_some_and(|last| s.base <= page.hi && last >= page.lo))
}

/// Constant address operands of every load and store, after folding.
pub fn collect_constant_addresses(p: &Program, layout: &MemoryLayout) -> Vec<u32> {
    let mut out = BTreeSet::new();
    for f in p.functions.values() {
        let folder = ConstFolder::for_function(p, Some(layout), f);
        for (_, _, ins) in f.instrs() {
            let addr = match ins {
                Instr::Load { addr, .. } | Instr::Store { addr, .. } => addr,
                _ => continue,
            };
            if let Some(c) = folder.fold(addr) {
                if c >= MIN_MMIO_ADDRESS && !layout.in_segment(c) && !page_hits_segment(layout, c) {
                    out.insert(c);
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Maps each address to its page and merges pages separated by at most
/// [`MERGE_GAP`] bytes, repeatedly, until no two intervals are that close.
pub fn build_mmio_map(addrs: &[u32]) -> MmioMap {
    let pages: BTreeSet<Interval> = addrs.iter().map(|&a| page_of(a)).collect();
    let mut intervals: Vec<Interval> = Vec::with_capacity(pages.len());
    for page in pages {
        match intervals.last_mut() {
            Some(last) if page.lo as u64 <= last.hi as u64 + 1 + MERGE_GAP => {
                last.hi = last.hi.max(page.hi);
            }
            _ => intervals.push(page),
        }
    }
    MmioMap { intervals }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvdPeripheral {
    pub name: String,
    #[serde(with = "hex_u32")]
    pub base: u32,
    /// Exclusive end address.
    #[serde(with = "hex_u32")]
    pub end: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvdDoc {
    pub peripherals: Vec<SvdPeripheral>,
}

#[derive(Debug, thiserror::Error)]
pub enum SvdError {
    #[error("invalid SVD JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("peripheral `{name}` has base {base:#x} not below end {end:#x}")]
    EmptyRange { name: String, base: u32, end: u32 },
}

impl SvdDoc {
    pub fn from_json(text: &str) -> Result<Self, SvdError> {
        let doc: SvdDoc = serde_json::from_str(text)?;
        for p in &doc.peripherals {
            if p.base >= p.end {
                return Err(SvdError::EmptyRange {
                    name: p.name.clone(),
                    base: p.base,
                    end: p.end,
                });
            }
        }
        Ok(doc)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedInterval {
    pub interval: Interval,
    pub peripheral: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompareReport {
    pub matched: Vec<MatchedInterval>,
    pub undocumented: Vec<Interval>,
}

/// Splits the map into intervals overlapping some documented peripheral
/// (named by the first such peripheral) and undocumented ones.
pub fn svd_compare(m: &MmioMap, svd: &SvdDoc) -> CompareReport {
    let mut report = CompareReport::default();
    for iv in &m.intervals {
        match svd.peripherals.iter().find(|p| iv.overlaps(p.base, p.end)) {
            Some(p) => report.matched.push(MatchedInterval {
                interval: *iv,
                peripheral: p.name.clone(),
            }),
            None => report.undocumented.push(*iv),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fir::{layout_memory, parse_program};

    fn iv(lo: u32, hi: u32) -> Interval {
        Interval { lo, hi }
    }

    #[test]
    fn single_page() {
        assert_eq!(build_mmio_map(&[0x40009400]).intervals, vec![iv(0x40009000, 0x40009FFF)]);
        assert!(build_mmio_map(&[]).is_empty());
    }

    #[test]
    fn adjacent_pages_merge() {
        assert_eq!(
            build_mmio_map(&[0x40000010, 0x40001800]).intervals,
            vec![iv(0x40000000, 0x40001FFF)]
        );
        assert_eq!(build_mmio_map(&[0x40000010, 0x40002000]).intervals.len(), 2);
    }

    #[test]
    fn lookup_edges() {
        let m = build_mmio_map(&[0x40000000]);
        assert!(m.is_mmio(0x40000400));
        assert!(m.is_mmio(0x40000FFF));
        assert!(!m.is_mmio(0x40001000));
        assert!(!m.is_mmio(0x3FFFFFFF));
        assert!(!MmioMap::default().is_mmio(0));
    }

    #[test]
    fn top_of_address_space() {
        let m = build_mmio_map(&[0xFFFF_FFF0, 0xFFFF_E000]);
        assert_eq!(m.intervals, vec![iv(0xFFFF_E000, 0xFFFF_FFFF)]);
    }

    #[test]
    fn collects_literals_and_folded_sums() {
        let p = parse_program(
            "const B = 0x40009400; global g;
             fn main() { b0: x = load32 0x40000000; y = load32 B + 8; z = load32 g;
                         w = load32 0x10; store32 0x40015400, 1; return; }",
        )
        .unwrap();
        let l = layout_memory(&p).unwrap();
        assert_eq!(
            collect_constant_addresses(&p, &l),
            vec![0x40000000, 0x40009408, 0x40015400]
        );
    }

    #[test]
    fn svd_json_accepts_hex_and_decimal() {
        let doc = SvdDoc::from_json(
            r#"{"peripherals":[{"name":"TIM2","base":1073741824,"end":"0x40000400"}]}"#,
        )
        .unwrap();
        assert_eq!(doc.peripherals[0].base, 0x4000_0000);
        assert_eq!(doc.peripherals[0].end, 0x4000_0400);
        assert!(SvdDoc::from_json(r#"{"peripherals":[{"name":"X","base":5,"end":5}]}"#).is_err());
    }

    #[test]
    fn compare_partitions() {
        let m = build_mmio_map(&[0x40000000, 0x40009400]);
        let svd = SvdDoc {
            peripherals: vec![SvdPeripheral {
                name: "TIM2".into(),
                base: 0x40000000,
                end: 0x40000400,
            }],
        };
        let r = svd_compare(&m, &svd);
        assert_eq!(r.matched.len(), 1);
        assert_eq!(r.matched[0].peripheral, "TIM2");
        assert_eq!(r.undocumented, vec![iv(0x40009000, 0x40009FFF)]);
        let empty = svd_compare(&MmioMap::default(), &svd);
        assert!(empty.matched.is_empty() && empty.undocumented.is_empty());
    }

    #[test]
    fn interval_json_is_hex() {
        let s = serde_json::to_string(&iv(0x40009000, 0x40009FFF)).unwrap();
        assert_eq!(s, r#"{"lo":"0x40009000","hi":"0x40009fff"}"#);
        let back: Interval = serde_json::from_str(&s).unwrap();
        assert_eq!(back, iv(0x40009000, 0x40009FFF));
    }
}
