use crate::fir::{BasicBlock, Expr, Function, Instr, Program, TaskDecl, Terminator, Width};

/// Name of both the injected task and its body function.
pub const DISPATCHER_NAME: &str = "__dispatcher";

fn dispatcher_body() -> Function {
    let local = |n: &str| Expr::name(n);
    Function {
        name: DISPATCHER_NAME.to_string(),
        params: Vec::new(),
        blocks: vec![
            BasicBlock {
                instrs: vec![Instr::InputAvail { dst: "more".into() }],
                term: Terminator::Branch {
                    cond: local("more"),
                    then_blk: 1,
                    else_blk: 2,
                    weakened: false,
                },
            },
            BasicBlock {
                instrs: vec![
                    Instr::Input {
                        dst: "sel".into(),
                        width: Width::W1,
                    },
                    Instr::Isr {
                        selector: local("sel"),
                    },
                    Instr::Yield,
                ],
                term: Terminator::Jump(0),
            },
            BasicBlock {
                instrs: Vec::new(),
                term: Terminator::Return(None),
            },
        ],
        is_isr: false,
    }
}

/// Adds a task that, while input remains, reads one selector byte, raises
/// the selected interrupt and yields. Its priority is one above every
/// application task. Programs without a vector table, or that already have
/// the dispatcher, are returned unchanged.
pub fn inject_dispatcher(p: &Program) -> Program {
    if p.vector_table.is_empty() || p.tasks.iter().any(|t| t.name == DISPATCHER_NAME) {
        return p.clone();
    }
    let mut out = p.clone();
    let priority = p.max_task_priority().map_or(1, |m| m.saturating_add(1));
    out.functions.insert(DISPATCHER_NAME.to_string(), dispatcher_body());
    out.tasks.push(TaskDecl {
        name: DISPATCHER_NAME.to_string(),
        priority,
        function: DISPATCHER_NAME.to_string(),
    });
    out
}
