//! Co-relation analysis: which integer parameter bounds each buffer
//! parameter of a function.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::FuzzError;
use crate::fir::{BinOp, Expr, Function, Instr, ParamType, Program, Terminator, BUILTIN_COPY};

/// Element count used when no size parameter is found.
pub const FIXED_FALLBACK: u32 = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeOf {
    Param(String),
    Fixed(u32),
}

/// Elements are always 32-bit ints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ArgKind {
    Int,
    Array { size_of: SizeOf },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ArgKind,
}

impl fmt::Display for ArgSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ArgKind::Int => write!(f, "{}: Int", self.name),
            ArgKind::Array {
                size_of: SizeOf::Param(n),
            } => write!(f, "{}: Array SIZE {n}", self.name),
            ArgKind::Array {
                size_of: SizeOf::Fixed(k),
            } => write!(f, "{}: Array Fixed({k})", self.name),
        }
    }
}

/// `{p: Array SIZE n, n: Int}`
pub fn format_specs(specs: &[ArgSpec]) -> String {
    let parts: Vec<String> = specs.iter().map(ToString::to_string).collect();
    format!("{{{}}}", parts.join(", "))
}

/// Follows single-assignment `let a = b` copies back to a parameter name.
struct Aliases<'a> {
    f: &'a Function,
    defs: BTreeMap<&'a str, Vec<&'a Instr>>,
}

impl<'a> Aliases<'a> {
    fn new(f: &'a Function) -> Self {
        let mut defs: BTreeMap<&str, Vec<&Instr>> = BTreeMap::new();
        for (_, _, ins) in f.instrs() {
            for d in ins.defined_locals() {
                defs.entry(d).or_default().push(ins);
            }
        }
        Aliases { f, defs }
    }

    fn unique_def(&self, name: &str) -> Option<&'a Instr> {
        match self.defs.get(name).map(Vec::as_slice) {
            Some([one]) => Some(one),
            _ => None,
        }
    }

    fn param_of(&self, name: &str) -> Option<&'a str> {
        let mut cur = name;
        for _ in 0..=self.defs.len() {
            if let Some((_, p)) = self.f.param(cur) {
                // reassigned parameters no longer carry the caller's value
                return (!self.defs.contains_key(cur)).then_some(p.name.as_str());
            }
            match self.unique_def(cur)? {
                Instr::Let {
                    expr: Expr::Name(src),
                    ..
                } => cur = src,
                _ => return None,
            }
        }
        None
    }

    fn param_of_kind(&self, e: &Expr, ty: ParamType) -> Option<&'a str> {
        let p = self.param_of(e.as_name()?)?;
        (self.f.param(p)?.1.ty == ty).then_some(p)
    }

    /// `(i, bound)` for a guard `i <u bound` or `i <=u bound`, looking through
    /// one named comparison.
    fn guard(&self, cond: &'a Expr) -> Option<(&'a str, &'a Expr)> {
        let (op, a, b) = match cond {
            Expr::Bin(op, a, b) => (*op, a.as_ref(), b.as_ref()),
            Expr::Name(n) => match self.unique_def(n)? {
                Instr::BinOp { op, lhs, rhs, .. } => (*op, lhs, rhs),
                Instr::Let {
                    expr: Expr::Bin(op, a, b),
                    ..
                } => (*op, a.as_ref(), b.as_ref()),
                _ => return None,
            },
            Expr::Int(_) => return None,
        };
        matches!(op, BinOp::Ult | BinOp::Ule).then_some((a.as_name()?, b))
    }

    /// `i` is stepped by `i = i + k` somewhere in the function.
    fn is_induction(&self, i: &str) -> bool {
        let steps = |a: &Expr, b: &Expr| a.as_name() == Some(i) || b.as_name() == Some(i);
        self.defs.get(i).is_some_and(|ds| {
            ds.iter().any(|d| match d {
                Instr::BinOp {
                    op: BinOp::Add,
                    lhs,
                    rhs,
                    ..
                } => steps(lhs, rhs),
                Instr::Let {
                    expr: Expr::Bin(BinOp::Add, a, b),
                    ..
                } => steps(a, b),
                _ => false,
            })
        })
    }

    /// Names an index expression depends on, looking one definition deep.
    fn index_names(&self, e: &Expr) -> BTreeSet<&'a str> {
        let mut out = BTreeSet::new();
        for n in e.names() {
            if let Some((k, _)) = self.defs.get_key_value(n) {
                out.insert(*k);
                if let Some(d) = self.unique_def(n) {
                    for op in d.operands() {
                        for m in op.names() {
                            if let Some((k2, _)) = self.defs.get_key_value(m) {
                                out.insert(*k2);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn successors(f: &Function, b: usize) -> Vec<usize> {
    f.blocks[b].term.targets()
}

fn on_cycle(f: &Function, start: usize) -> bool {
    let mut seen = vec![false; f.blocks.len()];
    let mut stack = successors(f, start);
    while let Some(b) = stack.pop() {
        if b == start {
            return true;
        }
        if !std::mem::replace(&mut seen[b], true) {
            stack.extend(successors(f, b));
        }
    }
    false
}

/// Infers a spec per parameter of `fname`, in declaration order.
pub fn infer_arg_specs(p: &Program, fname: &str) -> Result<Vec<ArgSpec>, FuzzError> {
    let f = p
        .function(fname)
        .ok_or_else(|| FuzzError::UnknownFunction(fname.to_string()))?;
    if !f.params.iter().any(|prm| prm.ty == ParamType::Buffer) {
        return Err(FuzzError::NoBufferParams(fname.to_string()));
    }
    let al = Aliases::new(f);
    let mut sized: BTreeMap<&str, &str> = BTreeMap::new();

    // Bounded loops: guard `i <u n` on a cycle, `i` stepped, buffer indexed by `i`.
    let mut loop_bounds: Vec<(&str, &str)> = Vec::new();
    for (b, blk) in f.blocks.iter().enumerate() {
        let Terminator::Branch { cond, .. } = &blk.term else {
            continue;
        };
        let Some((i, bound)) = al.guard(cond) else {
            continue;
        };
        let Some(n) = al.param_of_kind(bound, ParamType::Word) else {
            continue;
        };
        if on_cycle(f, b) && al.is_induction(i) {
            loop_bounds.push((i, n));
        }
    }
    for (_, _, ins) in f.instrs() {
        let (buffer, index) = match ins {
            Instr::Index { buffer, index, .. } | Instr::IndexStore { buffer, index, .. } => {
                (buffer, index)
            }
            Instr::Call { func, args, .. } if func == BUILTIN_COPY && args.len() == 3 => {
                if let Some(n) = al.param_of_kind(&args[2], ParamType::Word) {
                    for a in &args[..2] {
                        if let Some(buf) = al.param_of_kind(a, ParamType::Buffer) {
                            sized.entry(buf).or_insert(n);
                        }
                    }
                }
                continue;
            }
            _ => continue,
        };
        let Some(buf) = al.param_of(buffer) else {
            continue;
        };
        let used = al.index_names(index);
        if let Some((_, n)) = loop_bounds.iter().find(|(i, _)| used.contains(i)) {
            sized.entry(buf).or_insert(n);
        }
    }

    Ok(f.params
        .iter()
        .map(|prm| ArgSpec {
            name: prm.name.clone(),
            kind: match prm.ty {
                ParamType::Word => ArgKind::Int,
                ParamType::Buffer => ArgKind::Array {
                    size_of: match sized.get(prm.name.as_str()) {
                        Some(n) => SizeOf::Param(n.to_string()),
                        None => SizeOf::Fixed(FIXED_FALLBACK),
                    },
                },
            },
        })
        .collect())
}
