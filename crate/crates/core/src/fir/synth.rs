//! Random well-formed programs with no device access, assembly or
//! interrupts, for differential and round-trip testing.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    BasicBlock, BinOp, Expr, Function, GlobalDecl, Instr, Param, ParamType, Program, TaskDecl,
    Terminator, Width,
};

const LOCALS: usize = 6;
const MAX_DEPTH: u32 = 2;
const MAX_TRIP: u32 = 6;

struct Emitter<'a> {
    rng: &'a mut ChaCha8Rng,
    blocks: Vec<BasicBlock>,
    cur: Vec<Instr>,
    /// Callable functions: name and arity.
    callees: Vec<(String, usize)>,
    scalars: Vec<String>,
    arrays: Vec<(String, u32)>,
    words: Vec<String>,
    counters: usize,
    heap: usize,
    yields: bool,
}

impl Emitter<'_> {
    fn close(&mut self, term: Terminator) {
        let instrs = std::mem::take(&mut self.cur);
        self.blocks.push(BasicBlock { instrs, term });
    }

    fn next_index(&self) -> usize {
        self.blocks.len() + 1
    }

    fn word(&mut self) -> String {
        self.words.choose(self.rng).unwrap().clone()
    }

    fn atom(&mut self) -> Expr {
        match self.rng.gen_range(0..6) {
            0 => Expr::Int(self.rng.gen_range(0..64)),
            1 => Expr::Int(self.rng.gen()),
            _ => Expr::name(self.word()),
        }
    }

    fn cond(&mut self) -> Expr {
        let op = *[BinOp::Eq, BinOp::Ne, BinOp::Ult, BinOp::Ule, BinOp::Slt]
            .choose(self.rng)
            .unwrap();
        let lhs = Expr::name(self.word());
        let rhs = self.atom();
        Expr::bin(op, lhs, rhs)
    }

    fn instr(&mut self) {
        let dst = self.word();
        let ins = match self.rng.gen_range(0..14) {
            0 | 1 => Instr::Let {
                dst,
                expr: self.atom(),
            },
            2..=5 => {
                let op = *BinOp::ALL.choose(self.rng).unwrap();
                let lhs = self.atom();
                // keep division faults occasional
                let rhs = if op.is_division() && self.rng.gen_bool(0.9) {
                    Expr::Int(self.rng.gen_range(1..9))
                } else {
                    self.atom()
                };
                Instr::BinOp { dst, op, lhs, rhs }
            }
            6 => match self.scalars.choose(self.rng).cloned() {
                Some(g) => Instr::Load {
                    dst,
                    addr: Expr::name(g),
                    width: *[Width::W1, Width::W2, Width::W4].choose(self.rng).unwrap(),
                    hooked: false,
                },
                None => return,
            },
            7 => match self.scalars.choose(self.rng).cloned() {
                Some(g) => Instr::Store {
                    addr: Expr::name(g),
                    value: self.atom(),
                    width: *[Width::W1, Width::W2, Width::W4].choose(self.rng).unwrap(),
                    hooked: false,
                },
                None => return,
            },
            8 | 9 => {
                let Some((a, len)) = self.arrays.choose(self.rng).cloned() else {
                    return;
                };
                let past_end = u32::from(self.rng.gen_bool(0.05));
                let index = Expr::Int(self.rng.gen_range(0..len + past_end));
                if self.rng.gen() {
                    Instr::Index { dst, buffer: a, index }
                } else {
                    Instr::IndexStore {
                        buffer: a,
                        index,
                        value: self.atom(),
                    }
                }
            }
            10 => {
                let h = format!("h{}", self.heap);
                self.heap += 1;
                let n = self.rng.gen_range(1..5);
                self.cur.push(Instr::Alloc {
                    dst: h.clone(),
                    count: Expr::Int(n),
                });
                let value = self.atom();
                self.cur.push(Instr::IndexStore {
                    buffer: h.clone(),
                    index: Expr::Int(self.rng.gen_range(0..n)),
                    value,
                });
                Instr::Index {
                    dst,
                    buffer: h,
                    index: Expr::Int(self.rng.gen_range(0..n)),
                }
            }
            11 | 12 => match self.callees.choose(self.rng).cloned() {
                Some((func, arity)) => Instr::Call {
                    dst: Some(dst),
                    func,
                    args: (0..arity).map(|_| self.atom()).collect(),
                },
                None => return,
            },
            _ if self.yields && self.rng.gen_bool(0.5) => Instr::Yield,
            _ => Instr::Assert {
                cond: Expr::bin(BinOp::Ne, Expr::name(dst), Expr::Int(self.rng.gen_range(1000..2000))),
            },
        };
        self.cur.push(ins);
    }

    fn straight(&mut self) {
        for _ in 0..self.rng.gen_range(1..5) {
            self.instr();
        }
    }

    fn region(&mut self, depth: u32) {
        match self.rng.gen_range(0..if depth < MAX_DEPTH { 4 } else { 1 }) {
            0 | 1 => self.straight(),
            2 => {
                // if / else diamond; the join index is patched once known
                let cond = self.cond();
                let then_blk = self.next_index();
                self.close(Terminator::Branch {
                    cond,
                    then_blk,
                    else_blk: usize::MAX,
                    weakened: false,
                });
                let branch_at = self.blocks.len() - 1;
                self.region(depth + 1);
                self.close(Terminator::Jump(usize::MAX));
                let then_end = self.blocks.len() - 1;
                let else_blk = self.blocks.len();
                self.region(depth + 1);
                self.close(Terminator::Jump(usize::MAX));
                let join = self.blocks.len();
                if let Terminator::Branch { else_blk: e, .. } = &mut self.blocks[branch_at].term {
                    *e = else_blk;
                }
                self.blocks[then_end].term = Terminator::Jump(join);
                self.blocks[join - 1].term = Terminator::Jump(join);
            }
            _ => {
                let ctr = format!("c{}", self.counters);
                self.counters += 1;
                let trip = self.rng.gen_range(0..=MAX_TRIP);
                self.cur.push(Instr::Let {
                    dst: ctr.clone(),
                    expr: Expr::Int(0),
                });
                let head = self.next_index();
                self.close(Terminator::Jump(head));
                let body = head + 1;
                self.close(Terminator::Branch {
                    cond: Expr::bin(BinOp::Ult, Expr::name(&ctr), Expr::Int(trip)),
                    then_blk: body,
                    else_blk: usize::MAX,
                    weakened: false,
                });
                self.region(depth + 1);
                self.cur.push(Instr::BinOp {
                    dst: ctr.clone(),
                    op: BinOp::Add,
                    lhs: Expr::name(&ctr),
                    rhs: Expr::Int(1),
                });
                self.close(Terminator::Jump(head));
                let exit = self.blocks.len();
                if let Terminator::Branch { else_blk, .. } = &mut self.blocks[head].term {
                    *else_blk = exit;
                }
            }
        }
    }
}

fn function(
    rng: &mut ChaCha8Rng,
    name: &str,
    arity: usize,
    callees: Vec<(String, usize)>,
    globals: &[GlobalDecl],
    yields: bool,
    last: Terminator,
) -> Function {
    let params: Vec<Param> = (0..arity)
        .map(|i| Param {
            name: format!("a{i}"),
            ty: ParamType::Word,
        })
        .collect();
    let mut words: Vec<String> = (0..LOCALS).map(|i| format!("v{i}")).collect();
    words.extend(params.iter().map(|p| p.name.clone()));
    let mut e = Emitter {
        rng,
        blocks: Vec::new(),
        cur: Vec::new(),
        callees,
        scalars: globals.iter().filter(|g| g.len.is_none()).map(|g| g.name.clone()).collect(),
        arrays: globals
            .iter()
            .filter_map(|g| g.len.map(|n| (g.name.clone(), n)))
            .collect(),
        words,
        counters: 0,
        heap: 0,
        yields,
    };
    for i in 0..LOCALS {
        let v = e.rng.gen_range(0..100);
        e.cur.push(Instr::Let {
            dst: format!("v{i}"),
            expr: Expr::Int(v),
        });
    }
    for _ in 0..e.rng.gen_range(1..4) {
        e.region(0);
    }
    e.close(last);
    Function {
        name: name.to_string(),
        params,
        blocks: e.blocks,
        is_isr: false,
    }
}

/// Deterministic in `seed`. The result always passes validation.
pub fn random_program(seed: u64) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut globals = Vec::new();
    for i in 0..rng.gen_range(1..4) {
        globals.push(GlobalDecl {
            name: format!("g{i}"),
            len: None,
            init: rng.gen_bool(0.5).then(|| rng.gen_range(0..1000)),
        });
    }
    for i in 0..rng.gen_range(0..3) {
        globals.push(GlobalDecl {
            name: format!("arr{i}"),
            len: Some(rng.gen_range(1..9)),
            init: None,
        });
    }

    let mut functions = BTreeMap::new();
    let n = rng.gen_range(0..4);
    let arities: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
    // f_i only calls f_j with j > i, so there is no recursion
    for i in (0..n).rev() {
        let callees = ((i + 1)..n).map(|j| (format!("f{j}"), arities[j])).collect();
        let ret = Terminator::Return(Some(Expr::name(format!("v{}", rng.gen_range(0..LOCALS)))));
        let f = function(&mut rng, &format!("f{i}"), arities[i], callees, &globals, false, ret);
        functions.insert(f.name.clone(), f);
    }
    let all: Vec<(String, usize)> = (0..n).map(|j| (format!("f{j}"), arities[j])).collect();

    let mut tasks = Vec::new();
    for t in 0..rng.gen_range(0..3) {
        let name = format!("task{t}");
        let f = function(&mut rng, &name, 0, all.clone(), &globals, true, Terminator::Return(None));
        functions.insert(name.clone(), f);
        tasks.push(TaskDecl {
            name: format!("t{t}"),
            priority: rng.gen_range(1..4),
            function: name,
        });
    }
    let last = if rng.gen_bool(0.2) {
        Terminator::Halt
    } else {
        Terminator::Return(None)
    };
    let main = function(&mut rng, "main", 0, all, &globals, false, last);
    functions.insert("main".into(), main);

    Program {
        constants: BTreeMap::new(),
        globals,
        functions,
        tasks,
        vector_table: Vec::new(),
        entry: "main".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fir::{parse_program, validate};

    #[test]
    fn valid_and_printable() {
        for seed in 0..200 {
            let p = random_program(seed);
            validate(&p).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{}", p.to_source()));
            assert_eq!(parse_program(&p.to_source()).unwrap(), p, "seed {seed}");
        }
        assert_eq!(random_program(9), random_program(9));
    }
}
