//! Firmware IR (FIR): a small block-structured language standing in for
//! the firmware sources being rehosted.
//!
//! A [`Program`] holds named constants, globals, functions made of basic
//! blocks, RTOS-style tasks, an ISR vector table and an entry function.
//! All scalars are wrapping `u32`; buffers are first-class handles that
//! carry their element count so the VM can bounds-check every access.

mod callgraph;
pub(crate) mod check;
mod fold;
mod layout;
mod lexer;
mod parser;
mod printer;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use callgraph::{call_graph, reachable_functions, CallGraph, UnknownRoot};
pub use check::{validate, SemanticError};
pub use fold::ConstFolder;
pub use layout::{
    layout_memory, GlobalSlot, LayoutOverflow, MemoryLayout, Segment, SegmentKind, StackRegion,
    DEVICE_BAND, GLOBALS_BASE, GLOBALS_CAPACITY, HEAP_BASE, HEAP_SIZE, PAGE_SIZE, STACKS_BASE,
    STACKS_CAPACITY, STACK_SIZE,
};
pub use parser::{parse_program, ParseError};

/// Name of the builtin element-wise buffer copy, `call copy(dst, src, n)`.
pub const BUILTIN_COPY: &str = "copy";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Eq,
    Ne,
    Ult,
    Ule,
    Slt,
}

impl BinOp {
    pub const ALL: [BinOp; 15] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Mod,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::Shr,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Ult,
        BinOp::Ule,
        BinOp::Slt,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::Xor => "^",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Ult => "<u",
            BinOp::Ule => "<=u",
            BinOp::Slt => "<s",
        }
    }

    /// Binding strength used by the expression parser; higher binds tighter.
    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Mul | BinOp::Div | BinOp::Mod => 9,
            BinOp::Add | BinOp::Sub => 8,
            BinOp::Shl | BinOp::Shr => 7,
            BinOp::Ult | BinOp::Ule | BinOp::Slt => 6,
            BinOp::Eq | BinOp::Ne => 5,
            BinOp::And => 4,
            BinOp::Xor => 3,
            BinOp::Or => 2,
        }
    }

    pub(crate) fn from_symbol(sym: &str) -> Option<Self> {
        BinOp::ALL.iter().copied().find(|op| op.symbol() == sym)
    }

    /// Wrapping evaluation. `None` only for division or remainder by zero.
    #[inline]
    pub fn eval(self, a: u32, b: u32) -> Option<u32> {
        Some(match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::Div => a.checked_div(b)?,
            BinOp::Mod => a.checked_rem(b)?,
            BinOp::And => a & b,
            BinOp::Or => a | b,
            BinOp::Xor => a ^ b,
            BinOp::Shl => a.wrapping_shl(b),
            BinOp::Shr => a.wrapping_shr(b),
            BinOp::Eq => (a == b) as u32,
            BinOp::Ne => (a != b) as u32,
            BinOp::Ult => (a < b) as u32,
            BinOp::Ule => (a <= b) as u32,
            BinOp::Slt => ((a as i32) < (b as i32)) as u32,
        })
    }

    pub fn is_division(self) -> bool {
        matches!(self, BinOp::Div | BinOp::Mod)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(u32),
    Name(String),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn name(n: impl Into<String>) -> Self {
        Expr::Name(n.into())
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn is_atom(&self) -> bool {
        !matches!(self, Expr::Bin(..))
    }

    /// Every name mentioned by the expression, left to right.
    pub fn names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Int(_) => {}
            Expr::Name(n) => out.push(n),
            Expr::Bin(_, a, b) => {
                a.collect_names(out);
                b.collect_names(out);
            }
        }
    }

    pub fn as_name(&self) -> Option<&str> {
        match self {
            Expr::Name(n) => Some(n),
            _ => None,
        }
    }
}

/// Access width of a raw memory operation, in bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Width {
    W1,
    W2,
    W4,
}

impl Width {
    pub fn bytes(self) -> u32 {
        match self {
            Width::W1 => 1,
            Width::W2 => 2,
            Width::W4 => 4,
        }
    }

    pub fn bits(self) -> u32 {
        self.bytes() * 8
    }

    pub fn from_bits(bits: u32) -> Option<Self> {
        match bits {
            8 => Some(Width::W1),
            16 => Some(Width::W2),
            32 => Some(Width::W4),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instr {
    Let {
        dst: String,
        expr: Expr,
    },
    /// Raw load. `hooked` marks the guarded MMIO intrinsic inserted by the
    /// MMIO redirection pass.
    Load {
        dst: String,
        addr: Expr,
        width: Width,
        hooked: bool,
    },
    Store {
        addr: Expr,
        value: Expr,
        width: Width,
        hooked: bool,
    },
    BinOp {
        dst: String,
        op: BinOp,
        lhs: Expr,
        rhs: Expr,
    },
    Call {
        dst: Option<String>,
        func: String,
        args: Vec<Expr>,
    },
    Index {
        dst: String,
        buffer: String,
        index: Expr,
    },
    IndexStore {
        buffer: String,
        index: Expr,
        value: Expr,
    },
    Alloc {
        dst: String,
        count: Expr,
    },
    Asm {
        text: String,
        outputs: Vec<String>,
    },
    Assert {
        cond: Expr,
    },
    /// Reads `width` bytes from the run's input stream (harness/dispatcher intrinsic).
    Input {
        dst: String,
        width: Width,
    },
    /// 1 while unread input remains, else 0.
    InputAvail {
        dst: String,
    },
    /// Invokes `vector_table[selector mod n]` unless the VM disabled it.
    Isr {
        selector: Expr,
    },
    /// Blocks the running task until the next scheduler tick.
    Yield,
}

impl Instr {
    /// The local written by this instruction, if any.
    pub fn defined_locals(&self) -> Vec<&str> {
        match self {
            Instr::Let { dst, .. }
            | Instr::Load { dst, .. }
            | Instr::BinOp { dst, .. }
            | Instr::Index { dst, .. }
            | Instr::Alloc { dst, .. }
            | Instr::Input { dst, .. }
            | Instr::InputAvail { dst } => vec![dst.as_str()],
            Instr::Call { dst, .. } => dst.iter().map(|d| d.as_str()).collect(),
            Instr::Asm { outputs, .. } => outputs.iter().map(|o| o.as_str()).collect(),
            Instr::Store { .. }
            | Instr::IndexStore { .. }
            | Instr::Assert { .. }
            | Instr::Isr { .. }
            | Instr::Yield => vec![],
        }
    }

    /// Expressions read by this instruction (buffer names of Index/IndexStore excluded).
    pub fn operands(&self) -> Vec<&Expr> {
        match self {
            Instr::Let { expr, .. } => vec![expr],
            Instr::Load { addr, .. } => vec![addr],
            Instr::Store { addr, value, .. } => vec![addr, value],
            Instr::BinOp { lhs, rhs, .. } => vec![lhs, rhs],
            Instr::Call { args, .. } => args.iter().collect(),
            Instr::Index { index, .. } => vec![index],
            Instr::IndexStore { index, value, .. } => vec![index, value],
            Instr::Alloc { count, .. } => vec![count],
            Instr::Assert { cond } => vec![cond],
            Instr::Isr { selector } => vec![selector],
            Instr::Asm { .. } | Instr::Input { .. } | Instr::InputAvail { .. } | Instr::Yield => {
                vec![]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Terminator {
    Branch {
        cond: Expr,
        then_blk: usize,
        else_blk: usize,
        /// Set by condition weakening: a tainted evaluation is XORed with the
        /// parity of one input byte.
        weakened: bool,
    },
    Jump(usize),
    Return(Option<Expr>),
    Halt,
}

impl Terminator {
    pub fn targets(&self) -> Vec<usize> {
        match self {
            Terminator::Branch {
                then_blk, else_blk, ..
            } => vec![*then_blk, *else_blk],
            Terminator::Jump(t) => vec![*t],
            Terminator::Return(_) | Terminator::Halt => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicBlock {
    pub instrs: Vec<Instr>,
    pub term: Terminator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamType {
    Word,
    Buffer,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: ParamType,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub blocks: Vec<BasicBlock>,
    pub is_isr: bool,
}

impl Function {
    pub fn param(&self, name: &str) -> Option<(usize, &Param)> {
        self.params.iter().enumerate().find(|(_, p)| p.name == name)
    }

    /// All instructions with their (block, index) position.
    pub fn instrs(&self) -> impl Iterator<Item = (usize, usize, &Instr)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(b, blk)| blk.instrs.iter().enumerate().map(move |(i, ins)| (b, i, ins)))
    }

    /// Locals: every name written by some instruction that is not a parameter.
    pub fn locals(&self) -> Vec<String> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for (_, _, ins) in self.instrs() {
            for d in ins.defined_locals() {
                if self.param(d).is_none() && seen.insert(d.to_string()) {
                    out.push(d.to_string());
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalDecl {
    pub name: String,
    /// Element count for array globals; scalars are `None`.
    pub len: Option<u32>,
    pub init: Option<u32>,
}

impl GlobalDecl {
    pub fn elements(&self) -> u32 {
        self.len.unwrap_or(1)
    }

    pub fn byte_size(&self) -> u64 {
        self.elements() as u64 * 4
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskDecl {
    pub name: String,
    pub priority: u32,
    pub function: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub constants: BTreeMap<String, u32>,
    pub globals: Vec<GlobalDecl>,
    pub functions: BTreeMap<String, Function>,
    pub tasks: Vec<TaskDecl>,
    pub vector_table: Vec<String>,
    pub entry: String,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.get(name)
    }

    pub fn global(&self, name: &str) -> Option<&GlobalDecl> {
        self.globals.iter().find(|g| g.name == name)
    }

    pub fn max_task_priority(&self) -> Option<u32> {
        self.tasks.iter().map(|t| t.priority).max()
    }

    /// Pretty-printed FIR source; parsing it yields a structurally equal program.
    pub fn to_source(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        printer::write_program(f, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binop_eval_wraps_and_signs() {
        assert_eq!(BinOp::Add.eval(u32::MAX, 2), Some(1));
        assert_eq!(BinOp::Sub.eval(0, 1), Some(u32::MAX));
        assert_eq!(BinOp::Slt.eval(0xFFFF_FFFF, 0), Some(1));
        assert_eq!(BinOp::Ult.eval(0xFFFF_FFFF, 0), Some(0));
        assert_eq!(BinOp::Div.eval(7, 0), None);
        assert_eq!(BinOp::Mod.eval(7, 0), None);
        assert_eq!(BinOp::Shl.eval(1, 33), Some(2));
    }
}
