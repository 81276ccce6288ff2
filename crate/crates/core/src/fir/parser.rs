use std::collections::BTreeMap;

use thiserror::Error;

use super::check::{validate, SemanticError};
use super::lexer::{tokenize, Tok, Token};
use super::{
    BasicBlock, BinOp, Expr, Function, GlobalDecl, Instr, Param, ParamType, Program, TaskDecl,
    Terminator, Width,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Semantic(#[from] SemanticError),
}

pub(crate) const KEYWORDS: &[&str] = &[
    "const",
    "global",
    "fn",
    "task",
    "priority",
    "calls",
    "vector",
    "entry",
    "let",
    "call",
    "alloc",
    "asm",
    "assert",
    "isr",
    "yield",
    "branch",
    "wbranch",
    "jump",
    "return",
    "halt",
    "word",
    "buf",
    "load8",
    "load16",
    "load32",
    "store8",
    "store16",
    "store32",
    "mmio_load8",
    "mmio_load16",
    "mmio_load32",
    "mmio_store8",
    "mmio_store16",
    "mmio_store32",
    "input8",
    "input16",
    "input32",
    "input_avail",
];

/// Parses FIR source text and validates the result.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let tokens = tokenize(text).map_err(|e| ParseError::Syntax {
        line: e.line,
        col: e.col,
        expected: "a valid token".into(),
        found: e.message,
    })?;
    let program = Parser { tokens, pos: 0 }.program()?;
    validate(&program)?;
    Ok(program)
}

/// `load32` → (width, hooked); `mmio_store8` → (W1, true) for prefix "store".
fn memory_op(word: &str, kind: &str) -> Option<(Width, bool)> {
    let (rest, hooked) = match word.strip_prefix("mmio_") {
        Some(r) => (r, true),
        None => (word, false),
    };
    let bits = rest.strip_prefix(kind)?.parse::<u32>().ok()?;
    Some((Width::from_bits(bits)?, hooked))
}

fn block_label(word: &str) -> Option<usize> {
    let digits = word.strip_prefix('b')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: impl Into<String>) -> PResult<T> {
        let t = &self.tokens[self.pos];
        Err(ParseError::Syntax {
            line: t.line,
            col: t.col,
            expected: expected.into(),
            found: t.tok.to_string(),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == kw)
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("`{s}`"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("`{kw}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.error("identifier"),
        }
    }

    fn int(&mut self) -> PResult<u32> {
        match self.peek() {
            Tok::Int(v) => {
                let v = *v;
                self.bump();
                Ok(v)
            }
            Tok::Sym("-") if matches!(self.peek_at(1), Tok::Int(_)) => {
                self.bump();
                let v = self.int()?;
                Ok(0u32.wrapping_sub(v))
            }
            _ => self.error("integer"),
        }
    }

    fn program(mut self) -> PResult<Program> {
        let mut constants = BTreeMap::new();
        let mut globals: Vec<GlobalDecl> = Vec::new();
        let mut functions = BTreeMap::new();
        let mut tasks = Vec::new();
        let mut vector_table = Vec::new();
        let mut entry: Option<String> = None;

        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(kw) => match kw.as_str() {
                    "const" => {
                        self.bump();
                        let name = self.ident()?;
                        self.expect_sym("=")?;
                        let v = self.int()?;
                        self.expect_sym(";")?;
                        if constants.insert(name.clone(), v).is_some() {
                            return Err(SemanticError::Duplicate {
                                what: "constant",
                                name,
                            }
                            .into());
                        }
                    }
                    "global" => {
                        self.bump();
                        let name = self.ident()?;
                        let len = if self.is_sym("[") {
                            self.bump();
                            let n = self.int()?;
                            self.expect_sym("]")?;
                            Some(n)
                        } else {
                            None
                        };
                        let init = if self.is_sym("=") {
                            self.bump();
                            Some(self.int()?)
                        } else {
                            None
                        };
                        self.expect_sym(";")?;
                        if globals.iter().any(|g| g.name == name) {
                            return Err(SemanticError::Duplicate {
                                what: "global",
                                name,
                            }
                            .into());
                        }
                        globals.push(GlobalDecl { name, len, init });
                    }
                    "fn" => {
                        let f = self.function()?;
                        if functions.contains_key(&f.name) {
                            return Err(SemanticError::Duplicate {
                                what: "function",
                                name: f.name,
                            }
                            .into());
                        }
                        functions.insert(f.name.clone(), f);
                    }
                    "task" => {
                        self.bump();
                        let name = self.ident()?;
                        self.expect_kw("priority")?;
                        let priority = self.int()?;
                        self.expect_kw("calls")?;
                        let function = self.ident()?;
                        self.expect_sym(";")?;
                        tasks.push(TaskDecl {
                            name,
                            priority,
                            function,
                        });
                    }
                    "vector" => {
                        self.bump();
                        self.expect_sym("{")?;
                        while !self.is_sym("}") {
                            vector_table.push(self.ident()?);
                            if !self.is_sym(",") {
                                break;
                            }
                            self.bump();
                        }
                        self.expect_sym("}")?;
                    }
                    "entry" => {
                        self.bump();
                        let name = self.ident()?;
                        self.expect_sym(";")?;
                        if entry.replace(name.clone()).is_some() {
                            return Err(SemanticError::Duplicate {
                                what: "entry",
                                name,
                            }
                            .into());
                        }
                    }
                    _ => return self.error("item (`const`, `global`, `fn`, `task`, `vector`, `entry`)"),
                },
                _ => return self.error("item (`const`, `global`, `fn`, `task`, `vector`, `entry`)"),
            }
        }

        let entry = match entry {
            Some(e) => e,
            None if functions.contains_key("main") => "main".to_string(),
            None => return Err(SemanticError::MissingEntry.into()),
        };
        for name in &vector_table {
            if let Some(f) = functions.get_mut(name) {
                f.is_isr = true;
            }
        }
        Ok(Program {
            constants,
            globals,
            functions,
            tasks,
            vector_table,
            entry,
        })
    }

    fn function(&mut self) -> PResult<Function> {
        self.expect_kw("fn")?;
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        while !self.is_sym(")") {
            let pname = self.ident()?;
            let ty = if self.is_sym(":") {
                self.bump();
                if self.is_kw("word") {
                    self.bump();
                    ParamType::Word
                } else if self.is_kw("buf") {
                    self.bump();
                    ParamType::Buffer
                } else {
                    return self.error("`word` or `buf`");
                }
            } else {
                ParamType::Word
            };
            params.push(Param { name: pname, ty });
            if !self.is_sym(",") {
                break;
            }
            self.bump();
        }
        self.expect_sym(")")?;
        self.expect_sym("{")?;
        let mut blocks = Vec::new();
        loop {
            if self.is_sym("}") {
                break;
            }
            let want = blocks.len();
            match self.peek() {
                Tok::Ident(w) if block_label(w) == Some(want) => {
                    self.bump();
                }
                _ => return self.error(format!("block label `b{want}`")),
            }
            self.expect_sym(":")?;
            blocks.push(self.block()?);
        }
        self.expect_sym("}")?;
        if blocks.is_empty() {
            return self.error("at least one block");
        }
        Ok(Function {
            name,
            params,
            blocks,
            is_isr: false,
        })
    }

    fn target(&mut self) -> PResult<usize> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(v as usize)
            }
            Tok::Ident(w) => match block_label(&w) {
                Some(n) => {
                    self.bump();
                    Ok(n)
                }
                None => self.error("block target"),
            },
            _ => self.error("block target"),
        }
    }

    fn block(&mut self) -> PResult<BasicBlock> {
        let mut instrs = Vec::new();
        loop {
            let word = match self.peek() {
                Tok::Ident(w) => w.clone(),
                _ => return self.error("statement or terminator"),
            };
            let term = match word.as_str() {
                "branch" | "wbranch" => {
                    self.bump();
                    let cond = self.expr()?;
                    self.expect_sym(",")?;
                    let then_blk = self.target()?;
                    self.expect_sym(",")?;
                    let else_blk = self.target()?;
                    Some(Terminator::Branch {
                        cond,
                        then_blk,
                        else_blk,
                        weakened: word == "wbranch",
                    })
                }
                "jump" => {
                    self.bump();
                    Some(Terminator::Jump(self.target()?))
                }
                "return" => {
                    self.bump();
                    if self.is_sym(";") {
                        Some(Terminator::Return(None))
                    } else {
                        Some(Terminator::Return(Some(self.expr()?)))
                    }
                }
                "halt" => {
                    self.bump();
                    Some(Terminator::Halt)
                }
                _ => None,
            };
            if let Some(term) = term {
                self.expect_sym(";")?;
                return Ok(BasicBlock { instrs, term });
            }
            instrs.push(self.statement(&word)?);
        }
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect_sym("(")?;
        let mut args = Vec::new();
        while !self.is_sym(")") {
            args.push(self.expr()?);
            if !self.is_sym(",") {
                break;
            }
            self.bump();
        }
        self.expect_sym(")")?;
        Ok(args)
    }

    fn statement(&mut self, word: &str) -> PResult<Instr> {
        let ins = if let Some((width, hooked)) = memory_op(word, "store") {
            self.bump();
            let addr = self.expr()?;
            self.expect_sym(",")?;
            let value = self.expr()?;
            Instr::Store {
                addr,
                value,
                width,
                hooked,
            }
        } else {
            match word {
                "call" => {
                    self.bump();
                    let func = self.ident()?;
                    let args = self.args()?;
                    Instr::Call {
                        dst: None,
                        func,
                        args,
                    }
                }
                "asm" => {
                    self.bump();
                    let text = match self.bump() {
                        Tok::Str(s) => s,
                        _ => {
                            self.pos -= 1;
                            return self.error("assembly string");
                        }
                    };
                    let mut outputs = Vec::new();
                    if self.is_sym("->") {
                        self.bump();
                        if self.is_sym("(") {
                            self.bump();
                            while !self.is_sym(")") {
                                outputs.push(self.ident()?);
                                if !self.is_sym(",") {
                                    break;
                                }
                                self.bump();
                            }
                            self.expect_sym(")")?;
                        } else {
                            outputs.push(self.ident()?);
                        }
                    }
                    Instr::Asm { text, outputs }
                }
                "assert" => {
                    self.bump();
                    Instr::Assert { cond: self.expr()? }
                }
                "isr" => {
                    self.bump();
                    Instr::Isr {
                        selector: self.expr()?,
                    }
                }
                "yield" => {
                    self.bump();
                    Instr::Yield
                }
                "let" => {
                    self.bump();
                    let dst = self.ident()?;
                    self.expect_sym("=")?;
                    Instr::Let {
                        dst,
                        expr: self.expr()?,
                    }
                }
                _ => {
                    let name = self.ident()?;
                    if self.is_sym("[") {
                        self.bump();
                        let index = self.expr()?;
                        self.expect_sym("]")?;
                        self.expect_sym("=")?;
                        let value = self.expr()?;
                        Instr::IndexStore {
                            buffer: name,
                            index,
                            value,
                        }
                    } else {
                        self.expect_sym("=")?;
                        self.assignment(name)?
                    }
                }
            }
        };
        self.expect_sym(";")?;
        Ok(ins)
    }

    fn assignment(&mut self, dst: String) -> PResult<Instr> {
        let word = match self.peek() {
            Tok::Ident(w) => Some(w.clone()),
            _ => None,
        };
        if let Some(word) = word {
            if let Some((width, hooked)) = memory_op(&word, "load") {
                self.bump();
                return Ok(Instr::Load {
                    dst,
                    addr: self.expr()?,
                    width,
                    hooked,
                });
            }
            if let Some(bits) = word.strip_prefix("input").and_then(|b| b.parse::<u32>().ok()) {
                if let Some(width) = Width::from_bits(bits) {
                    self.bump();
                    return Ok(Instr::Input { dst, width });
                }
            }
            match word.as_str() {
                "input_avail" => {
                    self.bump();
                    return Ok(Instr::InputAvail { dst });
                }
                "call" => {
                    self.bump();
                    let func = self.ident()?;
                    let args = self.args()?;
                    return Ok(Instr::Call {
                        dst: Some(dst),
                        func,
                        args,
                    });
                }
                "alloc" => {
                    self.bump();
                    return Ok(Instr::Alloc {
                        dst,
                        count: self.expr()?,
                    });
                }
                _ => {}
            }
            if matches!(self.peek_at(1), Tok::Sym("[")) {
                let buffer = self.ident()?;
                self.bump();
                let index = self.expr()?;
                self.expect_sym("]")?;
                return Ok(Instr::Index { dst, buffer, index });
            }
        }
        match self.expr()? {
            Expr::Bin(op, lhs, rhs) if lhs.is_atom() && rhs.is_atom() => Ok(Instr::BinOp {
                dst,
                op,
                lhs: *lhs,
                rhs: *rhs,
            }),
            e if e.is_atom() => Ok(Instr::Let { dst, expr: e }),
            _ => self.error("`let` for a compound expression"),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.expr_bp(0)
    }

    fn peek_binop(&self) -> Option<BinOp> {
        match self.peek() {
            Tok::Sym(s) => BinOp::from_symbol(s),
            _ => None,
        }
    }

    fn expr_bp(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.atom()?;
        while let Some(op) = self.peek_binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.expr_bp(prec + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(_) | Tok::Sym("-") => Ok(Expr::Int(self.int()?)),
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(_) => Ok(Expr::Name(self.ident()?)),
            _ => self.error("expression"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let p = parse_program("entry main; fn main() { b0: return; }").unwrap();
        assert_eq!(p.functions.len(), 1);
        assert!(p.vector_table.is_empty());
        assert_eq!(p.entry, "main");
    }

    #[test]
    fn bad_branch_target_is_semantic() {
        let err = parse_program("fn f() { b0: jump 7; } entry f;").unwrap_err();
        assert!(matches!(err, ParseError::Semantic(_)));
        assert!(err.to_string().contains("bad branch target"), "{err}");
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_program("fn main() {\n b0: x = ;\n return; }").unwrap_err();
        match err {
            ParseError::Syntax { line, col, .. } => assert_eq!((line, col), (2, 10)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn precedence_and_binop_forms() {
        let p = parse_program(
            "fn main() { b0: let x = 1 + 2 * 3; y = x & 4; z = y; return; }",
        )
        .unwrap();
        let f = &p.functions["main"];
        assert_eq!(
            f.blocks[0].instrs[0],
            Instr::Let {
                dst: "x".into(),
                expr: Expr::bin(
                    BinOp::Add,
                    Expr::Int(1),
                    Expr::bin(BinOp::Mul, Expr::Int(2), Expr::Int(3))
                )
            }
        );
        assert!(matches!(f.blocks[0].instrs[1], Instr::BinOp { op: BinOp::And, .. }));
        assert!(matches!(f.blocks[0].instrs[2], Instr::Let { .. }));
    }

    #[test]
    fn compound_without_let_rejected() {
        assert!(parse_program("fn main() { b0: x = 1 + 2 + 3; return; }").is_err());
    }

    #[test]
    fn negative_literal_wraps() {
        let p = parse_program("fn main() { b0: return -1; }").unwrap();
        assert_eq!(
            p.functions["main"].blocks[0].term,
            Terminator::Return(Some(Expr::Int(u32::MAX)))
        );
    }

    #[test]
    fn labels_must_be_sequential() {
        assert!(matches!(
            parse_program("fn main() { b1: return; }"),
            Err(ParseError::Syntax { .. })
        ));
    }
}
