use std::collections::BTreeSet;

use thiserror::Error;

use super::{Expr, Function, Instr, ParamType, Program, Terminator, BUILTIN_COPY};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticError {
    #[error("semantic error: duplicate definition of {what} `{name}`")]
    Duplicate { what: &'static str, name: String },
    #[error("semantic error: no `entry` item and no `main` function")]
    MissingEntry,
    #[error("semantic error: undefined function `{name}` referenced by {context}")]
    UndefinedFunction { name: String, context: String },
    #[error("semantic error: undefined name `{name}` in function `{func}`")]
    UndefinedName { func: String, name: String },
    #[error("semantic error: bad branch target b{target} in `{func}` block b{block}")]
    BadBranchTarget {
        func: String,
        block: usize,
        target: usize,
    },
    #[error("semantic error: `{func}` called with {got} arguments, expects {expected}")]
    Arity {
        func: String,
        expected: usize,
        got: usize,
    },
    #[error("semantic error: type mismatch in `{func}`: {detail}")]
    TypeMismatch { func: String, detail: String },
    #[error("semantic error: {detail}")]
    Invalid { detail: String },
}

fn mismatch(f: &Function, detail: impl Into<String>) -> SemanticError {
    SemanticError::TypeMismatch {
        func: f.name.clone(),
        detail: detail.into(),
    }
}

/// Names a function body may see, split by kind.
struct Scope<'a> {
    program: &'a Program,
    words: BTreeSet<String>,
    buffers: BTreeSet<String>,
}

impl Scope<'_> {
    fn is_array_global(&self, name: &str) -> bool {
        self.program.global(name).is_some_and(|g| g.len.is_some())
    }

    fn is_buffer(&self, name: &str) -> bool {
        self.buffers.contains(name) || self.is_array_global(name)
    }

    fn resolves_as_word(&self, name: &str) -> bool {
        self.words.contains(name)
            || self.program.constants.contains_key(name)
            || self.program.global(name).is_some()
    }
}

/// Buffer-typed locals: parameters declared `buf`, `alloc` results and
/// plain copies of other buffers.
pub(crate) fn buffer_locals(f: &Function) -> BTreeSet<String> {
    let mut bufs: BTreeSet<String> = f
        .params
        .iter()
        .filter(|p| p.ty == ParamType::Buffer)
        .map(|p| p.name.clone())
        .collect();
    loop {
        let before = bufs.len();
        for (_, _, ins) in f.instrs() {
            match ins {
                Instr::Alloc { dst, .. } => {
                    bufs.insert(dst.clone());
                }
                Instr::Let {
                    dst,
                    expr: Expr::Name(src),
                } if bufs.contains(src) => {
                    bufs.insert(dst.clone());
                }
                _ => {}
            }
        }
        if bufs.len() == before {
            return bufs;
        }
    }
}

/// Checks every structural and naming invariant of a program.
pub fn validate(p: &Program) -> Result<(), SemanticError> {
    for g in &p.globals {
        if p.constants.contains_key(&g.name) {
            return Err(SemanticError::Duplicate {
                what: "constant/global name",
                name: g.name.clone(),
            });
        }
    }
    let mut seen = BTreeSet::new();
    for g in &p.globals {
        if !seen.insert(&g.name) {
            return Err(SemanticError::Duplicate {
                what: "global",
                name: g.name.clone(),
            });
        }
    }

    let no_params = |name: &str, context: &str| -> Result<(), SemanticError> {
        match p.functions.get(name) {
            None => Err(SemanticError::UndefinedFunction {
                name: name.to_string(),
                context: context.to_string(),
            }),
            Some(f) if !f.params.is_empty() => Err(SemanticError::Invalid {
                detail: format!("{context} function `{name}` must take no parameters"),
            }),
            Some(_) => Ok(()),
        }
    };
    no_params(&p.entry, "entry")?;
    let mut task_names = BTreeSet::new();
    for t in &p.tasks {
        if !task_names.insert(&t.name) {
            return Err(SemanticError::Duplicate {
                what: "task",
                name: t.name.clone(),
            });
        }
        no_params(&t.function, &format!("task `{}`", t.name))?;
    }
    for v in &p.vector_table {
        no_params(v, "vector table")?;
    }

    for f in p.functions.values() {
        check_function(p, f)?;
    }
    Ok(())
}

fn check_function(p: &Program, f: &Function) -> Result<(), SemanticError> {
    if f.blocks.is_empty() {
        return Err(SemanticError::Invalid {
            detail: format!("function `{}` has no blocks", f.name),
        });
    }
    if f.name == BUILTIN_COPY {
        return Err(SemanticError::Duplicate {
            what: "builtin",
            name: f.name.clone(),
        });
    }

    let mut param_names = BTreeSet::new();
    for prm in &f.params {
        if !param_names.insert(prm.name.as_str()) {
            return Err(SemanticError::Duplicate {
                what: "parameter",
                name: prm.name.clone(),
            });
        }
    }

    let locals = f.locals();
    for name in param_names.iter().copied().chain(locals.iter().map(String::as_str)) {
        if p.constants.contains_key(name) || p.global(name).is_some() {
            return Err(SemanticError::Duplicate {
                what: "local shadowing a constant or global",
                name: name.to_string(),
            });
        }
    }

    let buffers = buffer_locals(f);
    let words: BTreeSet<String> = f
        .params
        .iter()
        .map(|p| p.name.clone())
        .chain(locals.iter().cloned())
        .filter(|n| !buffers.contains(n))
        .collect();
    let scope = Scope {
        program: p,
        words,
        buffers,
    };

    // Buffer locals may only be produced by alloc or buffer copies.
    for (_, _, ins) in f.instrs() {
        let ok_buffer_def = matches!(ins, Instr::Alloc { .. })
            || matches!(ins, Instr::Let { expr: Expr::Name(src), .. } if scope.is_buffer(src));
        for d in ins.defined_locals() {
            if scope.buffers.contains(d) && !ok_buffer_def {
                return Err(mismatch(f, format!("buffer `{d}` assigned a word value")));
            }
        }
    }

    let word_expr = |e: &Expr| -> Result<(), SemanticError> {
        for n in e.names() {
            if scope.is_buffer(n) && !scope.words.contains(n) {
                if scope.is_array_global(n) {
                    // An array global's name is also its base address.
                    continue;
                }
                return Err(mismatch(f, format!("buffer `{n}` used as a word")));
            }
            if !scope.resolves_as_word(n) {
                return Err(SemanticError::UndefinedName {
                    func: f.name.clone(),
                    name: n.to_string(),
                });
            }
        }
        Ok(())
    };
    let buffer_name = |n: &str| -> Result<(), SemanticError> {
        if scope.is_buffer(n) {
            Ok(())
        } else if scope.resolves_as_word(n) {
            Err(mismatch(f, format!("`{n}` is not a buffer")))
        } else {
            Err(SemanticError::UndefinedName {
                func: f.name.clone(),
                name: n.to_string(),
            })
        }
    };

    for (b, blk) in f.blocks.iter().enumerate() {
        for ins in &blk.instrs {
            match ins {
                Instr::Let {
                    expr: Expr::Name(src),
                    ..
                } if scope.is_buffer(src) && !scope.is_array_global(src) => {}
                Instr::Index { buffer, index, .. } => {
                    buffer_name(buffer)?;
                    word_expr(index)?;
                }
                Instr::IndexStore {
                    buffer,
                    index,
                    value,
                } => {
                    buffer_name(buffer)?;
                    word_expr(index)?;
                    word_expr(value)?;
                }
                Instr::Call { func, args, .. } => check_call(p, f, &scope, func, args, &word_expr)?,
                other => {
                    for e in other.operands() {
                        word_expr(e)?;
                    }
                }
            }
        }
        match &blk.term {
            Terminator::Branch { cond, .. } => word_expr(cond)?,
            Terminator::Return(Some(e)) => word_expr(e)?,
            _ => {}
        }
        for t in blk.term.targets() {
            if t >= f.blocks.len() {
                return Err(SemanticError::BadBranchTarget {
                    func: f.name.clone(),
                    block: b,
                    target: t,
                });
            }
        }
    }
    Ok(())
}

fn check_call(
    p: &Program,
    f: &Function,
    scope: &Scope<'_>,
    func: &str,
    args: &[Expr],
    word_expr: &dyn Fn(&Expr) -> Result<(), SemanticError>,
) -> Result<(), SemanticError> {
    let kinds: Vec<ParamType> = if func == BUILTIN_COPY {
        vec![ParamType::Buffer, ParamType::Buffer, ParamType::Word]
    } else {
        match p.functions.get(func) {
            Some(callee) => callee.params.iter().map(|p| p.ty).collect(),
            None => {
                return Err(SemanticError::UndefinedFunction {
                    name: func.to_string(),
                    context: format!("`{}`", f.name),
                })
            }
        }
    };
    if kinds.len() != args.len() {
        return Err(SemanticError::Arity {
            func: func.to_string(),
            expected: kinds.len(),
            got: args.len(),
        });
    }
    for (kind, arg) in kinds.iter().zip(args) {
        match kind {
            ParamType::Word => word_expr(arg)?,
            ParamType::Buffer => match arg {
                Expr::Name(n) if scope.is_buffer(n) => {}
                _ => return Err(mismatch(f, format!("argument to `{func}` must be a buffer"))),
            },
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use crate::fir::parse_program;

    use super::*;

    fn err(src: &str) -> SemanticError {
        match parse_program(src) {
            Err(crate::fir::ParseError::Semantic(e)) => e,
            other => panic!("expected semantic error, got {other:?}"),
        }
    }

    #[test]
    fn undefined_name() {
        assert!(matches!(
            err("fn main() { b0: x = y + 1; return; }"),
            SemanticError::UndefinedName { .. }
        ));
    }

    #[test]
    fn duplicate_function() {
        assert!(matches!(
            err("fn main() { b0: return; } fn main() { b0: return; }"),
            SemanticError::Duplicate { .. }
        ));
    }

    #[test]
    fn constant_global_clash() {
        assert!(matches!(
            err("const A = 1; global A; fn main() { b0: return; }"),
            SemanticError::Duplicate { .. }
        ));
    }

    #[test]
    fn buffer_used_as_word() {
        assert!(matches!(
            err("fn main() { b0: b = alloc 4; x = b + 1; return; }"),
            SemanticError::TypeMismatch { .. }
        ));
    }

    #[test]
    fn index_into_word_rejected() {
        assert!(matches!(
            err("fn main() { b0: w = 3; x = w[0]; return; }"),
            SemanticError::TypeMismatch { .. }
        ));
    }

    #[test]
    fn arity_checked() {
        assert!(matches!(
            err("fn f(a) { b0: return a; } fn main() { b0: x = call f(); return; }"),
            SemanticError::Arity { .. }
        ));
    }

    #[test]
    fn task_function_must_exist() {
        assert!(matches!(
            err("task t priority 1 calls nope; fn main() { b0: return; }"),
            SemanticError::UndefinedFunction { .. }
        ));
    }

    #[test]
    fn array_globals_index_and_address() {
        parse_program(
            "global disk[16]; fn main() { b0: x = disk[3]; disk[1] = x; y = load32 disk; return; }",
        )
        .unwrap();
    }

    #[test]
    fn copy_builtin_typed() {
        parse_program(
            "fn w(d: buf, s: buf, n) { b0: call copy(d, s, n); return; } fn main() { b0: return; }",
        )
        .unwrap();
        assert!(matches!(
            err("fn w(d: buf, n) { b0: call copy(d, n, n); return; } fn main() { b0: return; }"),
            SemanticError::TypeMismatch { .. }
        ));
    }
}
