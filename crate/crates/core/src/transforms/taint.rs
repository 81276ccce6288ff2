//! Static MMIO taint: which locals, returns and memory may carry values
//! read from device registers.

use std::collections::{BTreeMap, BTreeSet};

use crate::fir::{ConstFolder, Expr, Function, Instr, MemoryLayout, Program, Terminator, BUILTIN_COPY};
use crate::mmio::MmioMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Origin {
    Mmio,
    Memory,
    Param(usize),
}

type Origins = BTreeSet<Origin>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FunctionTaint {
    /// Bit `i` set: the return value may be derived from parameter `i`.
    pub param_return_mask: Vec<bool>,
    /// The return value may carry MMIO data whatever the arguments are.
    pub return_from_mmio: bool,
    /// Parameters some call site passes a tainted value to.
    pub tainted_params: BTreeSet<usize>,
    /// Return value taint under the program's actual call sites.
    pub returns_tainted: bool,
    pub tainted_locals: BTreeSet<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaintSummary {
    pub functions: BTreeMap<String, FunctionTaint>,
    /// Some tainted value may be written to memory, so every memory read is
    /// treated as possibly tainted.
    pub memory_tainted: bool,
}

impl TaintSummary {
    pub fn is_tainted(&self, func: &str, name: &str) -> bool {
        self.functions.get(func).is_some_and(|f| f.tainted_locals.contains(name))
    }

    pub fn expr_tainted(&self, func: &str, e: &Expr) -> bool {
        e.names().into_iter().any(|n| self.is_tainted(func, n))
    }
}

struct FnFacts {
    origins: BTreeMap<String, Origins>,
    ret: Origins,
}

fn expr_origins(origins: &BTreeMap<String, Origins>, e: &Expr) -> Origins {
    let mut out = Origins::new();
    for n in e.names() {
        if let Some(o) = origins.get(n) {
            out.extend(o.iter().copied());
        }
    }
    out
}

fn load_origins(folder: &ConstFolder<'_>, map: &MmioMap, addr: &Expr, width: u32, hooked: bool) -> Origins {
    if !hooked {
        return [Origin::Memory].into();
    }
    match folder.fold(addr) {
        Some(c) if map.touches(c, width) => [Origin::Mmio].into(),
        Some(_) => [Origin::Memory].into(),
        None if map.is_empty() => [Origin::Memory].into(),
        None => [Origin::Mmio, Origin::Memory].into(),
    }
}

fn analyze_function(
    p: &Program,
    layout: &MemoryLayout,
    map: &MmioMap,
    f: &Function,
    rets: &BTreeMap<String, Origins>,
) -> FnFacts {
    let folder = ConstFolder::for_function(p, Some(layout), f);
    let mut origins: BTreeMap<String, Origins> = BTreeMap::new();
    for (i, prm) in f.params.iter().enumerate() {
        origins.insert(prm.name.clone(), [Origin::Param(i)].into());
    }
    loop {
        let mut changed = false;
        for (_, _, ins) in f.instrs() {
            let (dst, new): (&str, Origins) = match ins {
                Instr::Let { dst, expr } => (dst, expr_origins(&origins, expr)),
                Instr::BinOp { dst, lhs, rhs, .. } => {
                    let mut o = expr_origins(&origins, lhs);
                    o.extend(expr_origins(&origins, rhs));
                    (dst, o)
                }
                Instr::Load {
                    dst,
                    addr,
                    width,
                    hooked,
                } => (dst, load_origins(&folder, map, addr, width.bytes(), *hooked)),
                Instr::Index { dst, .. } => (dst, [Origin::Memory].into()),
                Instr::Call {
                    dst: Some(dst),
                    func,
                    args,
                } if func != BUILTIN_COPY => {
                    let mut o = Origins::new();
                    for origin in rets.get(func).into_iter().flatten() {
                        match origin {
                            Origin::Param(j) => {
                                if let Some(a) = args.get(*j) {
                                    o.extend(expr_origins(&origins, a));
                                }
                            }
                            other => {
                                o.insert(*other);
                            }
                        }
                    }
                    (dst, o)
                }
                _ => continue,
            };
            let slot = origins.entry(dst.to_string()).or_default();
            let before = slot.len();
            slot.extend(new);
            changed |= slot.len() != before;
        }
        if !changed {
            break;
        }
    }
    let mut ret = Origins::new();
    for blk in &f.blocks {
        if let Terminator::Return(Some(e)) = &blk.term {
            ret.extend(expr_origins(&origins, e));
        }
    }
    FnFacts { origins, ret }
}

/// Computes per-function return summaries to a fixpoint over the whole
/// program (recursion included), then propagates taint through call sites
/// and memory until nothing changes.
pub fn taint_summary(p: &Program, layout: &MemoryLayout, map: &MmioMap) -> TaintSummary {
    let mut rets: BTreeMap<String, Origins> = BTreeMap::new();
    let mut facts: BTreeMap<String, FnFacts>;
    loop {
        facts = p
            .functions
            .values()
            .map(|f| (f.name.clone(), analyze_function(p, layout, map, f, &rets)))
            .collect();
        let next: BTreeMap<String, Origins> =
            facts.iter().map(|(n, f)| (n.clone(), f.ret.clone())).collect();
        if next == rets {
            break;
        }
        rets = next;
    }

    let mut param_in: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    let mut memory = false;
    let tainted = |o: &Origins, params: Option<&BTreeSet<usize>>, memory: bool| {
        o.iter().any(|x| match x {
            Origin::Mmio => true,
            Origin::Memory => memory,
            Origin::Param(i) => params.is_some_and(|s| s.contains(i)),
        })
    };
    loop {
        let mut changed = false;
        for f in p.functions.values() {
            let fx = &facts[&f.name];
            let folder = ConstFolder::for_function(p, Some(layout), f);
            for (_, _, ins) in f.instrs() {
                let params = param_in.get(f.name.as_str()).cloned();
                let t = |e: &Expr| tainted(&expr_origins(&fx.origins, e), params.as_ref(), memory);
                match ins {
                    Instr::Call { func, args, .. } if func != BUILTIN_COPY => {
                        let callee = p.functions.get_key_value(func).map(|(k, _)| k.as_str());
                        for (j, a) in args.iter().enumerate() {
                            if t(a) {
                                if let Some(c) = callee {
                                    changed |= param_in.entry(c).or_default().insert(j);
                                }
                            }
                        }
                    }
                    Instr::Store {
                        addr,
                        value,
                        width,
                        hooked,
                    } => {
                        let dropped = *hooked
                            && folder.fold(addr).is_some_and(|c| map.touches(c, width.bytes()));
                        if !dropped && !memory && t(value) {
                            memory = true;
                            changed = true;
                        }
                    }
                    Instr::IndexStore { value, .. } if !memory && t(value) => {
                        memory = true;
                        changed = true;
                    }
                    _ => {}
                }
            }
        }
        if !changed {
            break;
        }
    }

    let functions = p
        .functions
        .values()
        .map(|f| {
            let fx = &facts[&f.name];
            let params = param_in.get(f.name.as_str());
            let tainted_locals = fx
                .origins
                .iter()
                .filter(|(_, o)| tainted(o, params, memory))
                .map(|(n, _)| n.clone())
                .collect();
            let summary = FunctionTaint {
                param_return_mask: (0..f.params.len())
                    .map(|i| fx.ret.contains(&Origin::Param(i)))
                    .collect(),
                return_from_mmio: tainted(&fx.ret, None, memory),
                tainted_params: params.cloned().unwrap_or_default(),
                returns_tainted: tainted(&fx.ret, params, memory),
                tainted_locals,
            };
            (f.name.clone(), summary)
        })
        .collect();
    TaintSummary {
        functions,
        memory_tainted: memory,
    }
}
