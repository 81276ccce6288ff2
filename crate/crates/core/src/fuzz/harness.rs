//! Single-call entry functions that build a target's arguments from input.

use std::collections::BTreeMap;

use super::argspec::{ArgKind, ArgSpec, SizeOf};
use super::FuzzError;
use crate::fir::{
    validate, BasicBlock, BinOp, Expr, Function, Instr, ParamType, Program, Terminator, Width,
};

pub const HARNESS_NAME: &str = "__harness";
/// Array lengths are one input byte reduced mod this, so 0..=64 elements.
pub const ARRAY_LEN_MODULUS: u32 = 65;

struct Builder {
    blocks: Vec<BasicBlock>,
    cur: Vec<Instr>,
}

impl Builder {
    fn push(&mut self, ins: Instr) {
        self.cur.push(ins);
    }

    /// Closes the current block with `term`; new instructions go to the
    /// block after it.
    fn close(&mut self, term: Terminator) {
        let instrs = std::mem::take(&mut self.cur);
        self.blocks.push(BasicBlock { instrs, term });
    }

    fn next_index(&self) -> usize {
        self.blocks.len() + 1
    }

    /// `for i in 0..count { buf[i] = input32 }`
    fn fill(&mut self, buf: &str, count: Expr) {
        let i = format!("{buf}_i");
        let v = format!("{buf}_v");
        self.push(Instr::Let {
            dst: i.clone(),
            expr: Expr::Int(0),
        });
        let head = self.next_index();
        self.close(Terminator::Jump(head));
        let body = head + 1;
        let exit = head + 2;
        self.close(Terminator::Branch {
            cond: Expr::bin(BinOp::Ult, Expr::name(&i), count),
            then_blk: body,
            else_blk: exit,
            weakened: false,
        });
        self.push(Instr::Input {
            dst: v.clone(),
            width: Width::W4,
        });
        self.push(Instr::IndexStore {
            buffer: buf.to_string(),
            index: Expr::name(&i),
            value: Expr::name(&v),
        });
        self.push(Instr::BinOp {
            dst: i.clone(),
            op: BinOp::Add,
            lhs: Expr::name(&i),
            rhs: Expr::Int(1),
        });
        self.close(Terminator::Jump(head));
    }
}

fn mismatch(fname: &str, detail: impl Into<String>) -> FuzzError {
    FuzzError::SpecMismatch {
        func: fname.to_string(),
        detail: detail.into(),
    }
}

fn check_specs(f: &Function, specs: &[ArgSpec]) -> Result<(), FuzzError> {
    if specs.len() != f.params.len() {
        return Err(mismatch(
            &f.name,
            format!("{} specs for {} parameters", specs.len(), f.params.len()),
        ));
    }
    for (prm, spec) in f.params.iter().zip(specs) {
        if prm.name != spec.name {
            return Err(mismatch(
                &f.name,
                format!("spec `{}` where parameter `{}` expected", spec.name, prm.name),
            ));
        }
        match (&spec.kind, prm.ty) {
            (ArgKind::Int, ParamType::Word) => {}
            (ArgKind::Array { size_of }, ParamType::Buffer) => {
                if let SizeOf::Param(n) = size_of {
                    let ok = specs
                        .iter()
                        .any(|s| &s.name == n && s.kind == ArgKind::Int && n != &prm.name);
                    if !ok {
                        return Err(mismatch(
                            &f.name,
                            format!("`{}` sized by `{n}`, which is not an Int parameter", prm.name),
                        ));
                    }
                }
            }
            _ => {
                return Err(mismatch(
                    &f.name,
                    format!("spec kind of `{}` does not match its type", prm.name),
                ))
            }
        }
    }
    Ok(())
}

/// Copy of `p` whose entry builds `fname`'s arguments from input, calls it
/// once and halts. Tasks are dropped so nothing else runs.
///
/// Input layout: for each array parameter in order, one length byte
/// (reduced mod 65, shared by arrays with the same size parameter) then
/// 4 bytes per element; fixed arrays skip the length byte. Then 4 bytes per
/// remaining Int parameter.
pub fn build_fn_harness(p: &Program, fname: &str, specs: &[ArgSpec]) -> Result<Program, FuzzError> {
    let f = p
        .function(fname)
        .ok_or_else(|| FuzzError::UnknownFunction(fname.to_string()))?;
    check_specs(f, specs)?;

    let local = |name: &str| format!("__h_{name}");
    let mut b = Builder {
        blocks: Vec::new(),
        cur: Vec::new(),
    };
    let mut assigned: BTreeMap<&str, String> = BTreeMap::new();

    for spec in specs {
        let ArgKind::Array { size_of } = &spec.kind else {
            continue;
        };
        let count = match size_of {
            SizeOf::Fixed(k) => Expr::Int(*k),
            SizeOf::Param(n) => {
                if !assigned.contains_key(n.as_str()) {
                    let raw = local(&format!("{n}_raw"));
                    b.push(Instr::Input {
                        dst: raw.clone(),
                        width: Width::W1,
                    });
                    b.push(Instr::BinOp {
                        dst: local(n),
                        op: BinOp::Mod,
                        lhs: Expr::name(raw),
                        rhs: Expr::Int(ARRAY_LEN_MODULUS),
                    });
                    assigned.insert(n, local(n));
                }
                Expr::name(local(n))
            }
        };
        let buf = local(&spec.name);
        b.push(Instr::Alloc {
            dst: buf.clone(),
            count: count.clone(),
        });
        b.fill(&buf, count);
        assigned.insert(&spec.name, buf);
    }
    for spec in specs {
        if spec.kind == ArgKind::Int && !assigned.contains_key(spec.name.as_str()) {
            b.push(Instr::Input {
                dst: local(&spec.name),
                width: Width::W4,
            });
            assigned.insert(&spec.name, local(&spec.name));
        }
    }
    b.push(Instr::Call {
        dst: None,
        func: fname.to_string(),
        args: specs.iter().map(|s| Expr::name(&assigned[s.name.as_str()])).collect(),
    });
    b.close(Terminator::Halt);

    let mut out = p.clone();
    out.tasks.clear();
    out.entry = HARNESS_NAME.to_string();
    out.functions.insert(
        HARNESS_NAME.to_string(),
        Function {
            name: HARNESS_NAME.to_string(),
            params: Vec::new(),
            blocks: b.blocks,
            is_isr: false,
        },
    );
    validate(&out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fir::parse_program;
    use crate::fuzz::infer_arg_specs;
    use crate::transforms::{run_pipeline, PassConfig};
    use crate::vm::{new_vm, CrashKind, InputStream, Limits, Outcome};

    const FILL: &str = "global seen_n; global seen_last;
        fn f(p: buf, n) {
          b0: store32 seen_n, n; let i = 0; jump b1;
          b1: branch i <u n, b2, b3;
          b2: v = p[i]; store32 seen_last, v; i = i + 1; jump b1;
          b3: return;
        }
        fn main() { b0: return; }";

    fn run(p: &Program, input: Vec<u8>) -> (Outcome, crate::vm::Vm) {
        let ip = run_pipeline(p, &PassConfig::none()).unwrap();
        let layout = ip.layout().unwrap();
        let mut vm = new_vm(&ip, &layout, InputStream::new(input), Limits::default());
        (vm.run().outcome, vm)
    }

    #[test]
    fn length_byte_then_elements() {
        let p = parse_program(FILL).unwrap();
        let specs = infer_arg_specs(&p, "f").unwrap();
        let h = build_fn_harness(&p, "f", &specs).unwrap();
        assert_eq!(parse_program(&h.to_source()).unwrap(), h);
        let mut input = vec![3];
        for v in [10u32, 20, 30] {
            input.extend_from_slice(&v.to_le_bytes());
        }
        let (outcome, vm) = run(&h, input);
        assert_eq!(outcome, Outcome::CleanExit);
        assert_eq!(vm.read_global("seen_n").unwrap().0, 3);
        assert_eq!(vm.read_global("seen_last").unwrap().0, 30);
        // 68 mod 65 = 3
        let (_, vm) = run(&h, vec![68]);
        assert_eq!(vm.read_global("seen_n").unwrap().0, 3);
    }

    #[test]
    fn empty_array_any_index_is_oob() {
        let p = parse_program("fn g(p: buf) { b0: x = p[0]; return; } fn main() { b0: return; }").unwrap();
        let specs = vec![ArgSpec {
            name: "p".into(),
            kind: ArgKind::Array {
                size_of: SizeOf::Fixed(0),
            },
        }];
        let h = build_fn_harness(&p, "g", &specs).unwrap();
        let (outcome, _) = run(&h, vec![]);
        let c = outcome.crash().expect("oob");
        assert_eq!((c.kind, c.buffer_len, c.index), (CrashKind::OobRead, Some(0), Some(0)));
    }

    #[test]
    fn tasks_dropped_and_mismatch_rejected() {
        let p = parse_program(&format!("task t priority 1 calls main; {FILL}")).unwrap();
        let specs = infer_arg_specs(&p, "f").unwrap();
        let h = build_fn_harness(&p, "f", &specs).unwrap();
        assert!(h.tasks.is_empty());
        assert_eq!(h.entry, HARNESS_NAME);
        let bad = vec![specs[1].clone(), specs[0].clone()];
        assert!(matches!(
            build_fn_harness(&p, "f", &bad),
            Err(FuzzError::SpecMismatch { .. })
        ));
        let self_sized = vec![
            ArgSpec {
                name: "p".into(),
                kind: ArgKind::Array {
                    size_of: SizeOf::Param("p".into()),
                },
            },
            specs[1].clone(),
        ];
        assert!(build_fn_harness(&p, "f", &self_sized).is_err());
    }
}
