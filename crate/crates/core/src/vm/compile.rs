//! Lowers FIR functions to a slot-indexed form: locals become frame slots,
//! constants and global addresses become immediates.

use std::collections::{BTreeMap, BTreeSet};

use crate::fir::{
    check::buffer_locals, BinOp, Expr, Function, Instr, MemoryLayout, ParamType, Program,
    Terminator, Width, BUILTIN_COPY,
};
use crate::mmio::MmioMap;
use crate::transforms::{probe_id, InstrumentedProgram};

#[derive(Clone, Debug)]
pub(crate) enum CExpr {
    Const(u32),
    Slot(usize),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum CBuf {
    Slot(usize),
    Global { addr: u32, len: u32 },
}

#[derive(Clone, Debug)]
pub(crate) enum CArg {
    Word(CExpr),
    Buf(CBuf),
}

#[derive(Clone, Debug)]
pub(crate) enum CInstr {
    Let { dst: usize, expr: CExpr },
    Move { dst: usize, src: usize },
    Load { dst: usize, addr: CExpr, width: Width, hooked: bool },
    Store { addr: CExpr, value: CExpr, width: Width, hooked: bool },
    Bin { dst: usize, op: BinOp, a: CExpr, b: CExpr },
    Call { dst: Option<usize>, func: usize, args: Vec<CArg> },
    Copy { dst: Option<usize>, to: CBuf, from: CBuf, n: CExpr },
    Index { dst: usize, buf: CBuf, index: CExpr },
    IndexStore { buf: CBuf, index: CExpr, value: CExpr },
    Alloc { dst: usize, count: CExpr },
    Asm { outputs: Vec<usize> },
    Assert { cond: CExpr },
    Input { dst: usize, width: Width },
    InputAvail { dst: usize },
    Isr { selector: CExpr },
    Yield,
}

#[derive(Clone, Debug)]
pub(crate) enum CTerm {
    Branch { cond: CExpr, then_blk: usize, else_blk: usize, weakened: bool },
    Jump(usize),
    Return(Option<CExpr>),
    Halt,
}

#[derive(Clone, Debug)]
pub(crate) struct CBlock {
    pub instrs: Vec<CInstr>,
    pub term: CTerm,
    pub probe: u16,
}

#[derive(Clone, Debug)]
pub(crate) struct CFunction {
    pub name: String,
    pub slots: usize,
    pub blocks: Vec<CBlock>,
}

#[derive(Clone, Debug)]
pub(crate) struct CTask {
    pub name: String,
    pub priority: u32,
    pub func: usize,
    pub stack_base: u32,
}

/// Immutable, shareable executable form of an instrumented program.
#[derive(Clone, Debug)]
pub struct CompiledProgram {
    pub(crate) program: Program,
    pub(crate) layout: MemoryLayout,
    pub(crate) mmio_map: MmioMap,
    pub(crate) functions: Vec<CFunction>,
    pub(crate) by_name: BTreeMap<String, usize>,
    pub(crate) vector: Vec<usize>,
    /// Entry context first, then tasks in declaration order.
    pub(crate) contexts: Vec<CTask>,
}

impl CompiledProgram {
    pub fn new(ip: &InstrumentedProgram, layout: &MemoryLayout) -> Self {
        let p = &ip.program;
        let by_name: BTreeMap<String, usize> = p
            .functions
            .keys()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        let probes: BTreeMap<(&str, usize), u16> = ip
            .block_table
            .iter()
            .map(|b| ((b.function.as_str(), b.block), b.probe))
            .collect();
        let functions = p
            .functions
            .values()
            .map(|f| compile_function(p, layout, &by_name, &probes, f))
            .collect();
        let vector = p.vector_table.iter().map(|n| by_name[n]).collect();
        let stack_of = |i: usize| layout.stacks.get(i).map_or(layout.stacks_base, |s| s.base);
        let mut contexts = vec![CTask {
            name: p.entry.clone(),
            priority: 0,
            func: by_name[&p.entry],
            stack_base: stack_of(0),
        }];
        for (i, t) in p.tasks.iter().enumerate() {
            contexts.push(CTask {
                name: t.name.clone(),
                priority: t.priority,
                func: by_name[&t.function],
                stack_base: stack_of(i + 1),
            });
        }
        CompiledProgram {
            program: p.clone(),
            layout: layout.clone(),
            mmio_map: ip.mmio_map.clone(),
            functions,
            by_name,
            vector,
            contexts,
        }
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn layout(&self) -> &MemoryLayout {
        &self.layout
    }

    pub fn mmio_map(&self) -> &MmioMap {
        &self.mmio_map
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }
}

struct Names<'a> {
    program: &'a Program,
    layout: &'a MemoryLayout,
    slots: BTreeMap<String, usize>,
}

impl Names<'_> {
    fn expr(&self, e: &Expr) -> CExpr {
        match e {
            Expr::Int(v) => CExpr::Const(*v),
            Expr::Name(n) => {
                if let Some(s) = self.slots.get(n) {
                    CExpr::Slot(*s)
                } else if let Some(v) = self.program.constants.get(n) {
                    CExpr::Const(*v)
                } else {
                    CExpr::Const(self.layout.global_address(n).unwrap_or(0))
                }
            }
            Expr::Bin(op, a, b) => CExpr::Bin(*op, Box::new(self.expr(a)), Box::new(self.expr(b))),
        }
    }

    fn buf(&self, name: &str) -> CBuf {
        match self.slots.get(name) {
            Some(s) => CBuf::Slot(*s),
            None => {
                let slot = self.layout.global(name);
                CBuf::Global {
                    addr: slot.map_or(0, |g| g.address),
                    len: slot.map_or(0, |g| g.size / 4),
                }
            }
        }
    }

    fn buf_expr(&self, e: &Expr) -> CBuf {
        match e {
            Expr::Name(n) => self.buf(n),
            _ => CBuf::Global { addr: 0, len: 0 },
        }
    }

    fn slot(&self, name: &str) -> usize {
        self.slots[name]
    }
}

fn compile_function(
    p: &Program,
    layout: &MemoryLayout,
    by_name: &BTreeMap<String, usize>,
    probes: &BTreeMap<(&str, usize), u16>,
    f: &Function,
) -> CFunction {
    let mut slots = BTreeMap::new();
    for prm in &f.params {
        let n = slots.len();
        slots.entry(prm.name.clone()).or_insert(n);
    }
    for l in f.locals() {
        let n = slots.len();
        slots.entry(l).or_insert(n);
    }
    let buffers: BTreeSet<String> = buffer_locals(f);
    let names = Names {
        program: p,
        layout,
        slots,
    };

    let blocks = f
        .blocks
        .iter()
        .enumerate()
        .map(|(b, blk)| CBlock {
            instrs: blk.instrs.iter().map(|i| compile_instr(p, &names, &buffers, by_name, i)).collect(),
            term: match &blk.term {
                Terminator::Branch {
                    cond,
                    then_blk,
                    else_blk,
                    weakened,
                } => CTerm::Branch {
                    cond: names.expr(cond),
                    then_blk: *then_blk,
                    else_blk: *else_blk,
                    weakened: *weakened,
                },
                Terminator::Jump(t) => CTerm::Jump(*t),
                Terminator::Return(e) => CTerm::Return(e.as_ref().map(|e| names.expr(e))),
                Terminator::Halt => CTerm::Halt,
            },
            probe: probes
                .get(&(f.name.as_str(), b))
                .copied()
                .unwrap_or_else(|| probe_id(&f.name, b)),
        })
        .collect();

    CFunction {
        name: f.name.clone(),
        slots: names.slots.len(),
        blocks,
    }
}

fn compile_instr(
    p: &Program,
    names: &Names<'_>,
    buffers: &BTreeSet<String>,
    by_name: &BTreeMap<String, usize>,
    ins: &Instr,
) -> CInstr {
    match ins {
        Instr::Let {
            dst,
            expr: Expr::Name(src),
        } if buffers.contains(src) => CInstr::Move {
            dst: names.slot(dst),
            src: names.slot(src),
        },
        Instr::Let { dst, expr } => CInstr::Let {
            dst: names.slot(dst),
            expr: names.expr(expr),
        },
        Instr::Load {
            dst,
            addr,
            width,
            hooked,
        } => CInstr::Load {
            dst: names.slot(dst),
            addr: names.expr(addr),
            width: *width,
            hooked: *hooked,
        },
        Instr::Store {
            addr,
            value,
            width,
            hooked,
        } => CInstr::Store {
            addr: names.expr(addr),
            value: names.expr(value),
            width: *width,
            hooked: *hooked,
        },
        Instr::BinOp { dst, op, lhs, rhs } => CInstr::Bin {
            dst: names.slot(dst),
            op: *op,
            a: names.expr(lhs),
            b: names.expr(rhs),
        },
        Instr::Call { dst, func, args } if func == BUILTIN_COPY => CInstr::Copy {
            dst: dst.as_ref().map(|d| names.slot(d)),
            to: names.buf_expr(&args[0]),
            from: names.buf_expr(&args[1]),
            n: names.expr(&args[2]),
        },
        Instr::Call { dst, func, args } => {
            let callee = &p.functions[func];
            CInstr::Call {
                dst: dst.as_ref().map(|d| names.slot(d)),
                func: by_name[func],
                args: callee
                    .params
                    .iter()
                    .zip(args)
                    .map(|(prm, a)| match prm.ty {
                        ParamType::Word => CArg::Word(names.expr(a)),
                        ParamType::Buffer => CArg::Buf(names.buf_expr(a)),
                    })
                    .collect(),
            }
        }
        Instr::Index { dst, buffer, index } => CInstr::Index {
            dst: names.slot(dst),
            buf: names.buf(buffer),
            index: names.expr(index),
        },
        Instr::IndexStore {
            buffer,
            index,
            value,
        } => CInstr::IndexStore {
            buf: names.buf(buffer),
            index: names.expr(index),
            value: names.expr(value),
        },
        Instr::Alloc { dst, count } => CInstr::Alloc {
            dst: names.slot(dst),
            count: names.expr(count),
        },
        Instr::Asm { outputs, .. } => CInstr::Asm {
            outputs: outputs.iter().map(|o| names.slot(o)).collect(),
        },
        Instr::Assert { cond } => CInstr::Assert {
            cond: names.expr(cond),
        },
        Instr::Input { dst, width } => CInstr::Input {
            dst: names.slot(dst),
            width: *width,
        },
        Instr::InputAvail { dst } => CInstr::InputAvail {
            dst: names.slot(dst),
        },
        Instr::Isr { selector } => CInstr::Isr {
            selector: names.expr(selector),
        },
        Instr::Yield => CInstr::Yield,
    }
}
