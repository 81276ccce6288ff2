use std::fmt::{self, Write};

use super::{Expr, Function, Instr, ParamType, Program, Terminator, Width};

fn width_suffix(w: Width) -> u32 {
    w.bits()
}

fn write_expr(out: &mut impl Write, e: &Expr, nested: bool) -> fmt::Result {
    match e {
        Expr::Int(v) => write!(out, "{v}"),
        Expr::Name(n) => out.write_str(n),
        Expr::Bin(op, a, b) => {
            if nested {
                out.write_char('(')?;
            }
            write_expr(out, a, true)?;
            write!(out, " {} ", op.symbol())?;
            write_expr(out, b, true)?;
            if nested {
                out.write_char(')')?;
            }
            Ok(())
        }
    }
}

struct E<'a>(&'a Expr);

impl fmt::Display for E<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self.0, false)
    }
}

fn join_exprs(args: &[Expr]) -> String {
    args.iter()
        .map(|a| E(a).to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn write_instr(f: &mut fmt::Formatter<'_>, ins: &Instr) -> fmt::Result {
    let mmio = |hooked: bool| if hooked { "mmio_" } else { "" };
    match ins {
        Instr::Let { dst, expr } => write!(f, "let {dst} = {}", E(expr)),
        Instr::Load {
            dst,
            addr,
            width,
            hooked,
        } => write!(
            f,
            "{dst} = {}load{} {}",
            mmio(*hooked),
            width_suffix(*width),
            E(addr)
        ),
        Instr::Store {
            addr,
            value,
            width,
            hooked,
        } => write!(
            f,
            "{}store{} {}, {}",
            mmio(*hooked),
            width_suffix(*width),
            E(addr),
            E(value)
        ),
        Instr::BinOp { dst, op, lhs, rhs } => {
            write!(f, "{dst} = {} {} {}", E(lhs), op.symbol(), E(rhs))
        }
        Instr::Call { dst, func, args } => match dst {
            Some(d) => write!(f, "{d} = call {func}({})", join_exprs(args)),
            None => write!(f, "call {func}({})", join_exprs(args)),
        },
        Instr::Index { dst, buffer, index } => write!(f, "{dst} = {buffer}[{}]", E(index)),
        Instr::IndexStore {
            buffer,
            index,
            value,
        } => write!(f, "{buffer}[{}] = {}", E(index), E(value)),
        Instr::Alloc { dst, count } => write!(f, "{dst} = alloc {}", E(count)),
        Instr::Asm { text, outputs } => {
            write!(f, "asm {text:?}")?;
            match outputs.as_slice() {
                [] => Ok(()),
                [one] => write!(f, " -> {one}"),
                many => write!(f, " -> ({})", many.join(", ")),
            }
        }
        Instr::Assert { cond } => write!(f, "assert {}", E(cond)),
        Instr::Input { dst, width } => write!(f, "{dst} = input{}", width_suffix(*width)),
        Instr::InputAvail { dst } => write!(f, "{dst} = input_avail"),
        Instr::Isr { selector } => write!(f, "isr {}", E(selector)),
        Instr::Yield => write!(f, "yield"),
    }
}

fn write_function(f: &mut fmt::Formatter<'_>, func: &Function) -> fmt::Result {
    let params: Vec<String> = func
        .params
        .iter()
        .map(|p| match p.ty {
            ParamType::Word => p.name.clone(),
            ParamType::Buffer => format!("{}: buf", p.name),
        })
        .collect();
    writeln!(f, "fn {}({}) {{", func.name, params.join(", "))?;
    for (i, blk) in func.blocks.iter().enumerate() {
        writeln!(f, "  b{i}:")?;
        for ins in &blk.instrs {
            f.write_str("    ")?;
            write_instr(f, ins)?;
            f.write_str(";\n")?;
        }
        f.write_str("    ")?;
        match &blk.term {
            Terminator::Branch {
                cond,
                then_blk,
                else_blk,
                weakened,
            } => {
                let kw = if *weakened { "wbranch" } else { "branch" };
                write!(f, "{kw} {}, b{then_blk}, b{else_blk}", E(cond))?;
            }
            Terminator::Jump(t) => write!(f, "jump b{t}")?,
            Terminator::Return(None) => f.write_str("return")?,
            Terminator::Return(Some(e)) => write!(f, "return {}", E(e))?,
            Terminator::Halt => f.write_str("halt")?,
        }
        f.write_str(";\n")?;
    }
    f.write_str("}\n")
}

pub(crate) fn write_program(f: &mut fmt::Formatter<'_>, p: &Program) -> fmt::Result {
    for (name, v) in &p.constants {
        writeln!(f, "const {name} = {v:#x};")?;
    }
    for g in &p.globals {
        write!(f, "global {}", g.name)?;
        if let Some(n) = g.len {
            write!(f, "[{n}]")?;
        }
        if let Some(v) = g.init {
            write!(f, " = {v:#x}")?;
        }
        f.write_str(";\n")?;
    }
    for t in &p.tasks {
        writeln!(f, "task {} priority {} calls {};", t.name, t.priority, t.function)?;
    }
    if !p.vector_table.is_empty() {
        writeln!(f, "vector {{ {} }}", p.vector_table.join(", "))?;
    }
    writeln!(f, "entry {};", p.entry)?;
    for func in p.functions.values() {
        f.write_str("\n")?;
        write_function(f, func)?;
    }
    Ok(())
}
