use std::collections::BTreeMap;

use super::{Expr, Function, Instr, MemoryLayout, Program};

/// Folds expressions to constants using `const` items, global addresses and
/// locals that are assigned exactly once from a foldable value.
#[derive(Clone, Debug)]
pub struct ConstFolder<'a> {
    program: &'a Program,
    layout: Option<&'a MemoryLayout>,
    locals: BTreeMap<String, u32>,
}

impl<'a> ConstFolder<'a> {
    pub fn new(program: &'a Program, layout: Option<&'a MemoryLayout>) -> Self {
        ConstFolder {
            program,
            layout,
            locals: BTreeMap::new(),
        }
    }

    /// A folder that also knows `f`'s single-assignment constant locals.
    pub fn for_function(
        program: &'a Program,
        layout: Option<&'a MemoryLayout>,
        f: &Function,
    ) -> Self {
        let mut folder = ConstFolder::new(program, layout);
        let mut defs: BTreeMap<&str, Vec<&Instr>> = BTreeMap::new();
        for (_, _, ins) in f.instrs() {
            for d in ins.defined_locals() {
                defs.entry(d).or_default().push(ins);
            }
        }
        let single: Vec<(&str, &Instr)> = defs
            .iter()
            .filter(|(name, d)| d.len() == 1 && f.param(name).is_none())
            .map(|(name, d)| (*name, d[0]))
            .collect();
        loop {
            let mut changed = false;
            for (name, ins) in &single {
                if folder.locals.contains_key(*name) {
                    continue;
                }
                let v = match ins {
                    Instr::Let { expr, .. } => folder.fold(expr),
                    Instr::BinOp { op, lhs, rhs, .. } => folder
                        .fold(lhs)
                        .zip(folder.fold(rhs))
                        .and_then(|(a, b)| op.eval(a, b)),
                    _ => None,
                };
                if let Some(v) = v {
                    folder.locals.insert(name.to_string(), v);
                    changed = true;
                }
            }
            if !changed {
                return folder;
            }
        }
    }

    pub fn name(&self, n: &str) -> Option<u32> {
        if let Some(v) = self.locals.get(n) {
            return Some(*v);
        }
        if let Some(v) = self.program.constants.get(n) {
            return Some(*v);
        }
        self.layout.and_then(|l| l.global_address(n))
    }

    pub fn fold(&self, e: &Expr) -> Option<u32> {
        match e {
            Expr::Int(v) => Some(*v),
            Expr::Name(n) => self.name(n),
            Expr::Bin(op, a, b) => op.eval(self.fold(a)?, self.fold(b)?),
        }
    }
}
