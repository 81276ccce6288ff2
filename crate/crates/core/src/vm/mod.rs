//! Deterministic VM for instrumented programs: a priority-preemptive task
//! scheduler, bounds-checked memory with per-byte taint, MMIO intrinsics fed
//! from the input stream, and crash/hang reporting.

mod calibrate;
mod compile;
mod input;
mod memory;
mod report;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::fir::{MemoryLayout, HEAP_BASE, HEAP_SIZE};
use crate::transforms::InstrumentedProgram;

pub use calibrate::calibrate_isrs;
pub use compile::CompiledProgram;
pub use input::InputStream;
pub use report::{Coverage, CrashKind, CrashRecord, ExecutionReport, Outcome, Site};

use compile::{CArg, CBuf, CExpr, CFunction, CInstr, CTerm};
use memory::{HeapBuf, Memory};

/// Instructions between scheduler ticks.
pub const TICK_QUANTUM: u64 = 100;
/// Highest address of the null guard page.
pub const NULL_GUARD_END: u32 = 0xFFF;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub instruction_budget: u64,
    pub max_call_depth: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            instruction_budget: 2_000_000,
            max_call_depth: 256,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BufRef {
    Null,
    Heap(u32),
    Global { addr: u32, len: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Value {
    Word(u32, bool),
    Buf(BufRef),
}

const ZERO: Value = Value::Word(0, false);

#[derive(Clone, Debug)]
struct Frame {
    func: usize,
    block: usize,
    ip: usize,
    slots: Vec<Value>,
    ret: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TaskState {
    Ready,
    Delayed(u64),
    Finished,
}

#[derive(Clone, Debug)]
struct Context {
    priority: u32,
    func: usize,
    stack_base: u32,
    started: bool,
    frames: Vec<Frame>,
    state: TaskState,
    last_run: u64,
}

#[derive(Debug)]
struct Fault {
    kind: CrashKind,
    address: Option<u32>,
    buffer_len: Option<u32>,
    index: Option<u32>,
    detail: String,
}

impl Fault {
    fn new(kind: CrashKind, detail: impl Into<String>) -> Self {
        Fault {
            kind,
            address: None,
            buffer_len: None,
            index: None,
            detail: detail.into(),
        }
    }

    fn at(mut self, addr: u32) -> Self {
        self.address = Some(addr);
        self
    }

    fn bounds(mut self, len: u32, index: u32) -> Self {
        self.buffer_len = Some(len);
        self.index = Some(index);
        self
    }
}

enum Flow {
    Continue,
    Yield,
    Finished,
    Halt,
}

#[derive(Clone, Debug)]
pub struct Vm {
    prog: Arc<CompiledProgram>,
    limits: Limits,
    input: InputStream,
    memory: Memory,
    heap: Vec<HeapBuf>,
    heap_used: u64,
    contexts: Vec<Context>,
    current: Option<usize>,
    released: bool,
    tick: u64,
    since_tick: u64,
    seq: u64,
    executed: u64,
    coverage: Coverage,
    disabled: Vec<bool>,
    last_tainted_branch: Option<Site>,
}

/// Compiles `ip` and builds a fresh VM for one run.
pub fn new_vm(
    ip: &InstrumentedProgram,
    layout: &MemoryLayout,
    input: InputStream,
    limits: Limits,
) -> Vm {
    Vm::new(Arc::new(CompiledProgram::new(ip, layout)), input, limits)
}

pub fn run(vm: &mut Vm) -> ExecutionReport {
    vm.run()
}

fn eval(slots: &[Value], e: &CExpr) -> Result<(u32, bool), Fault> {
    match e {
        CExpr::Const(v) => Ok((*v, false)),
        CExpr::Slot(s) => Ok(match slots[*s] {
            Value::Word(v, t) => (v, t),
            Value::Buf(_) => (0, false),
        }),
        CExpr::Bin(op, a, b) => {
            let (x, tx) = eval(slots, a)?;
            let (y, ty) = eval(slots, b)?;
            match op.eval(x, y) {
                Some(v) => Ok((v, tx | ty)),
                None => Err(Fault::new(
                    CrashKind::DivByZero,
                    format!("{x} {} 0", op.symbol()),
                )),
            }
        }
    }
}

fn buf_of(slots: &[Value], b: &CBuf) -> BufRef {
    match b {
        CBuf::Slot(s) => match slots[*s] {
            Value::Buf(r) => r,
            Value::Word(..) => BufRef::Null,
        },
        CBuf::Global { addr, len } => BufRef::Global {
            addr: *addr,
            len: *len,
        },
    }
}

fn new_frame(f: &CFunction, func: usize, args: &[Value], ret: Option<usize>) -> Frame {
    let mut slots = vec![ZERO; f.slots];
    slots[..args.len()].copy_from_slice(args);
    Frame {
        func,
        block: 0,
        ip: 0,
        slots,
        ret,
    }
}

impl Vm {
    pub fn new(prog: Arc<CompiledProgram>, input: InputStream, limits: Limits) -> Self {
        let memory = Memory::new(&prog.program, &prog.layout);
        let contexts = prog
            .contexts
            .iter()
            .map(|t| Context {
                priority: t.priority,
                func: t.func,
                stack_base: t.stack_base,
                started: false,
                frames: Vec::new(),
                state: TaskState::Ready,
                last_run: 0,
            })
            .collect();
        let disabled = vec![false; prog.vector.len()];
        Vm {
            prog,
            limits,
            input,
            memory,
            heap: Vec::new(),
            heap_used: 0,
            contexts,
            current: None,
            released: false,
            tick: 0,
            since_tick: 0,
            seq: 0,
            executed: 0,
            coverage: Coverage::new(),
            disabled,
            last_tainted_branch: None,
        }
    }

    /// ISRs the dispatcher must skip, by function name.
    pub fn with_disabled_isrs(mut self, names: &BTreeSet<String>) -> Self {
        for (i, f) in self.prog.vector.iter().enumerate() {
            self.disabled[i] = names.contains(&self.prog.functions[*f].name);
        }
        self
    }

    pub fn disabled_isrs(&self) -> BTreeSet<String> {
        self.prog
            .vector
            .iter()
            .zip(&self.disabled)
            .filter(|(_, d)| **d)
            .map(|(f, _)| self.prog.functions[*f].name.clone())
            .collect()
    }

    /// Task names in the order the scheduler would first pick them.
    pub fn ready_queue(&self) -> Vec<String> {
        let mut order: Vec<(usize, &compile::CTask)> =
            self.prog.contexts.iter().enumerate().skip(1).collect();
        order.sort_by_key(|(i, t)| (std::cmp::Reverse(t.priority), *i));
        order.into_iter().map(|(_, t)| t.name.clone()).collect()
    }

    /// Raw bytes of the globals segment.
    pub fn globals(&self) -> &[u8] {
        self.memory.globals()
    }

    /// Little-endian word at `addr` and whether any of its bytes is tainted;
    /// `None` outside the globals, stack and heap segments.
    pub fn read_word(&self, addr: u32) -> Option<(u32, bool)> {
        self.memory
            .mapped(addr, 4)
            .then(|| self.memory.load(addr, 4))
    }

    /// First element of global `name`, with its taint.
    pub fn read_global(&self, name: &str) -> Option<(u32, bool)> {
        self.read_word(self.prog.layout.global_address(name)?)
    }

    pub fn input(&self) -> &InputStream {
        &self.input
    }

    pub fn coverage(&self) -> &Coverage {
        &self.coverage
    }

    pub fn instructions_executed(&self) -> u64 {
        self.executed
    }

    fn push_frame(&mut self, c: usize, func: usize, args: &[Value], ret: Option<usize>) {
        let f = &self.prog.functions[func];
        self.coverage.set(f.blocks[0].probe);
        let frame = new_frame(f, func, args, ret);
        self.contexts[c].frames.push(frame);
    }

    fn wake(&mut self) {
        for ctx in &mut self.contexts {
            if let TaskState::Delayed(until) = ctx.state {
                if until <= self.tick {
                    ctx.state = TaskState::Ready;
                }
            }
        }
    }

    /// Picks the highest-priority ready context, least recently scheduled
    /// first among equals. Idles forward through ticks when everything is
    /// delayed; `None` once every context has finished.
    fn schedule(&mut self) -> Option<usize> {
        loop {
            let best = self
                .contexts
                .iter()
                .enumerate()
                .filter(|(i, c)| c.state == TaskState::Ready && (self.released || *i == 0))
                .max_by_key(|(i, c)| {
                    (
                        c.priority,
                        std::cmp::Reverse(c.last_run),
                        std::cmp::Reverse(*i),
                    )
                })
                .map(|(i, _)| i);
            if let Some(i) = best {
                self.seq += 1;
                self.contexts[i].last_run = self.seq;
                if !self.contexts[i].started {
                    self.contexts[i].started = true;
                    let func = self.contexts[i].func;
                    self.push_frame(i, func, &[], None);
                }
                return Some(i);
            }
            let next = self
                .contexts
                .iter()
                .filter_map(|c| match c.state {
                    TaskState::Delayed(u) => Some(u),
                    _ => None,
                })
                .min()?;
            self.tick = self.tick.max(next);
            self.since_tick = 0;
            self.wake();
        }
    }

    fn report(&self, outcome: Outcome) -> ExecutionReport {
        let outcome = match outcome {
            Outcome::CleanExit if self.input.exhausted() => Outcome::InputExhaustedExit,
            o => o,
        };
        ExecutionReport {
            outcome,
            instructions_executed: self.executed,
            bytes_consumed: self.input.consumed(),
            input_exhausted: self.input.exhausted(),
            disabled_isrs: self.disabled_isrs(),
            last_tainted_branch: self.last_tainted_branch.clone(),
            coverage: self.coverage.clone(),
        }
    }

    fn crash_record(&self, c: usize, f: Fault) -> CrashRecord {
        let frames = &self.contexts[c].frames;
        let top = frames.last().expect("faulting context has a frame");
        CrashRecord {
            kind: f.kind,
            function: self.prog.functions[top.func].name.clone(),
            block: top.block,
            instr: top.ip,
            stack: frames
                .iter()
                .rev()
                .map(|fr| self.prog.functions[fr.func].name.clone())
                .collect(),
            address: f.address,
            buffer_len: f.buffer_len,
            index: f.index,
            detail: f.detail,
        }
    }

    /// Runs to completion, crash or budget exhaustion.
    pub fn run(&mut self) -> ExecutionReport {
        let prog = Arc::clone(&self.prog);
        let outcome = loop {
            let c = match self.current {
                Some(c) => c,
                None => match self.schedule() {
                    Some(c) => {
                        self.current = Some(c);
                        c
                    }
                    None => break Outcome::CleanExit,
                },
            };
            if self.executed >= self.limits.instruction_budget {
                break Outcome::Hang;
            }
            self.executed += 1;
            match self.step(&prog, c) {
                Err(f) => break Outcome::Crash(self.crash_record(c, f)),
                Ok(Flow::Continue) => {}
                Ok(Flow::Yield) => {
                    self.released = true;
                    self.contexts[c].state = TaskState::Delayed(self.tick + 1);
                    self.current = None;
                }
                Ok(Flow::Finished) => {
                    self.released = true;
                    self.contexts[c].state = TaskState::Finished;
                    self.current = None;
                }
                Ok(Flow::Halt) => break Outcome::CleanExit,
            }
            self.since_tick += 1;
            if self.since_tick >= TICK_QUANTUM {
                self.tick += 1;
                self.since_tick = 0;
                self.wake();
                if self.released {
                    self.current = self.schedule();
                }
            }
        };
        self.report(outcome)
    }

    /// Runs only the entry context until it returns, yields, halts, crashes
    /// or exhausts the budget. Returns the crash if there was one.
    pub(crate) fn run_entry_init(&mut self) -> Option<CrashRecord> {
        let prog = Arc::clone(&self.prog);
        self.current = self.schedule();
        let c = self.current?;
        while self.executed < self.limits.instruction_budget {
            self.executed += 1;
            match self.step(&prog, c) {
                Err(f) => return Some(self.crash_record(c, f)),
                Ok(Flow::Continue) => {}
                Ok(Flow::Yield) => {
                    self.contexts[c].state = TaskState::Delayed(self.tick + 1);
                    break;
                }
                Ok(Flow::Finished) | Ok(Flow::Halt) => {
                    self.contexts[c].state = TaskState::Finished;
                    break;
                }
            }
        }
        self.current = None;
        None
    }

    /// Calls `func` once on a private context and runs only that context.
    pub(crate) fn run_isolated(&mut self, func: usize) -> Outcome {
        let prog = Arc::clone(&self.prog);
        let stack_base = self.contexts.last().map_or(0, |c| c.stack_base);
        self.contexts.push(Context {
            priority: u32::MAX,
            func,
            stack_base,
            started: true,
            frames: Vec::new(),
            state: TaskState::Ready,
            last_run: 0,
        });
        let c = self.contexts.len() - 1;
        self.push_frame(c, func, &[], None);
        while self.executed < self.limits.instruction_budget {
            self.executed += 1;
            match self.step(&prog, c) {
                Err(f) => return Outcome::Crash(self.crash_record(c, f)),
                Ok(Flow::Continue) | Ok(Flow::Yield) => {}
                Ok(Flow::Finished) | Ok(Flow::Halt) => return Outcome::CleanExit,
            }
        }
        Outcome::Hang
    }

    fn goto(&mut self, prog: &CompiledProgram, c: usize, target: usize) {
        let frame = self.contexts[c].frames.last_mut().expect("frame");
        frame.block = target;
        frame.ip = 0;
        self.coverage.set(prog.functions[frame.func].blocks[target].probe);
    }

    fn read_elem(&self, buf: BufRef, i: u32) -> Result<Value, Fault> {
        match buf {
            BufRef::Null => Err(Fault::new(CrashKind::NullDeref, "index into null buffer").at(0)),
            BufRef::Heap(h) => {
                let b = &self.heap[h as usize];
                let len = b.elems.len() as u32;
                match b.elems.get(i as usize) {
                    Some(v) => Ok(Value::Word(*v, b.taint[i as usize])),
                    None => Err(Fault::new(CrashKind::OobRead, format!("read index {i} of {len}-element buffer"))
                        .bounds(len, i)),
                }
            }
            BufRef::Global { addr, len } => {
                if i >= len {
                    return Err(Fault::new(
                        CrashKind::OobRead,
                        format!("read index {i} of {len}-element global"),
                    )
                    .bounds(len, i)
                    .at(addr.wrapping_add(i.wrapping_mul(4))));
                }
                let (v, t) = self.memory.load(addr + 4 * i, 4);
                Ok(Value::Word(v, t))
            }
        }
    }

    fn write_elem(&mut self, buf: BufRef, i: u32, v: u32, t: bool) -> Result<(), Fault> {
        match buf {
            BufRef::Null => Err(Fault::new(CrashKind::NullDeref, "store into null buffer").at(0)),
            BufRef::Heap(h) => {
                let b = &mut self.heap[h as usize];
                let len = b.elems.len() as u32;
                if i >= len {
                    return Err(Fault::new(
                        CrashKind::OobWrite,
                        format!("write index {i} of {len}-element buffer"),
                    )
                    .bounds(len, i));
                }
                b.elems[i as usize] = v;
                b.taint[i as usize] = t;
                Ok(())
            }
            BufRef::Global { addr, len } => {
                if i >= len {
                    return Err(Fault::new(
                        CrashKind::OobWrite,
                        format!("write index {i} of {len}-element global"),
                    )
                    .bounds(len, i)
                    .at(addr.wrapping_add(i.wrapping_mul(4))));
                }
                self.memory.store(addr + 4 * i, 4, v, t);
                Ok(())
            }
        }
    }

    fn buf_len(&self, buf: BufRef) -> Option<u32> {
        match buf {
            BufRef::Null => None,
            BufRef::Heap(h) => Some(self.heap[h as usize].elems.len() as u32),
            BufRef::Global { len, .. } => Some(len),
        }
    }

    /// Classifies a raw access: `Ok(true)` for a device register handled by
    /// the MMIO intrinsic, `Ok(false)` for ordinary memory.
    fn check_access(&self, addr: u32, len: u32, hooked: bool, store: bool) -> Result<bool, Fault> {
        let what = if store { "store to" } else { "load from" };
        if addr <= NULL_GUARD_END {
            return Err(Fault::new(CrashKind::NullDeref, format!("{what} {addr:#x}")).at(addr));
        }
        if hooked && self.prog.mmio_map.touches(addr, len) {
            return Ok(true);
        }
        if self.memory.mapped(addr, len) {
            return Ok(false);
        }
        Err(Fault::new(CrashKind::UnmappedAccess, format!("{what} unmapped {addr:#x}")).at(addr))
    }

    fn set(&mut self, c: usize, dst: usize, v: Value) {
        self.contexts[c].frames.last_mut().expect("frame").slots[dst] = v;
    }

    fn step(&mut self, prog: &CompiledProgram, c: usize) -> Result<Flow, Fault> {
        let depth = self.contexts[c].frames.len();
        let (func_idx, block, ip) = {
            let fr = self.contexts[c].frames.last().expect("running context has a frame");
            (fr.func, fr.block, fr.ip)
        };
        let func = &prog.functions[func_idx];
        let blk = &func.blocks[block];

        let Some(ins) = blk.instrs.get(ip) else {
            return self.terminate(prog, c, &blk.term, &func.name, block);
        };
        let slots = &self.contexts[c].frames[depth - 1].slots;
        match ins {
            CInstr::Let { dst, expr } => {
                let (v, t) = eval(slots, expr)?;
                self.set(c, *dst, Value::Word(v, t));
            }
            CInstr::Move { dst, src } => {
                let v = slots[*src];
                self.set(c, *dst, v);
            }
            CInstr::Bin { dst, op, a, b } => {
                let (x, tx) = eval(slots, a)?;
                let (y, ty) = eval(slots, b)?;
                let v = op.eval(x, y).ok_or_else(|| {
                    Fault::new(CrashKind::DivByZero, format!("{x} {} 0", op.symbol()))
                })?;
                self.set(c, *dst, Value::Word(v, tx | ty));
            }
            CInstr::Load {
                dst,
                addr,
                width,
                hooked,
            } => {
                let (a, _) = eval(slots, addr)?;
                let len = width.bytes();
                let v = if self.check_access(a, len, *hooked, false)? {
                    Value::Word(self.input.read(*width), true)
                } else {
                    let (v, t) = self.memory.load(a, len);
                    Value::Word(v, t)
                };
                self.set(c, *dst, v);
            }
            CInstr::Store {
                addr,
                value,
                width,
                hooked,
            } => {
                let (a, _) = eval(slots, addr)?;
                let (v, t) = eval(slots, value)?;
                let len = width.bytes();
                if !self.check_access(a, len, *hooked, true)? {
                    self.memory.store(a, len, v, t);
                }
            }
            CInstr::Call { dst, func, args } => {
                if depth >= self.limits.max_call_depth {
                    let base = self.contexts[c].stack_base;
                    return Err(Fault::new(
                        CrashKind::OobWrite,
                        format!("stack overflow: call depth {depth} reaches limit"),
                    )
                    .at(base.wrapping_sub(4)));
                }
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(match a {
                        CArg::Word(e) => {
                            let (v, t) = eval(slots, e)?;
                            Value::Word(v, t)
                        }
                        CArg::Buf(b) => Value::Buf(buf_of(slots, b)),
                    });
                }
                self.contexts[c].frames[depth - 1].ip += 1;
                self.push_frame(c, *func, &vals, *dst);
                return Ok(Flow::Continue);
            }
            CInstr::Copy { dst, to, from, n } => {
                let to = buf_of(slots, to);
                let from = buf_of(slots, from);
                let (n, _) = eval(slots, n)?;
                if n > 0 {
                    let from_len = self
                        .buf_len(from)
                        .ok_or_else(|| Fault::new(CrashKind::NullDeref, "copy from null buffer").at(0))?;
                    let to_len = self
                        .buf_len(to)
                        .ok_or_else(|| Fault::new(CrashKind::NullDeref, "copy into null buffer").at(0))?;
                    let bad_read = n > from_len;
                    let bad_write = n > to_len;
                    if bad_read && (!bad_write || from_len <= to_len) {
                        return Err(Fault::new(
                            CrashKind::OobRead,
                            format!("copy of {n} elements reads past {from_len}-element source"),
                        )
                        .bounds(from_len, from_len));
                    }
                    if bad_write {
                        return Err(Fault::new(
                            CrashKind::OobWrite,
                            format!("copy of {n} elements writes past {to_len}-element destination"),
                        )
                        .bounds(to_len, to_len));
                    }
                    let mut tmp = Vec::with_capacity(n as usize);
                    for i in 0..n {
                        tmp.push(self.read_elem(from, i)?);
                    }
                    for (i, v) in tmp.into_iter().enumerate() {
                        if let Value::Word(v, t) = v {
                            self.write_elem(to, i as u32, v, t)?;
                        }
                    }
                }
                if let Some(d) = dst {
                    self.set(c, *d, ZERO);
                }
            }
            CInstr::Index { dst, buf, index } => {
                let b = buf_of(slots, buf);
                let (i, _) = eval(slots, index)?;
                let v = self.read_elem(b, i)?;
                self.set(c, *dst, v);
            }
            CInstr::IndexStore { buf, index, value } => {
                let b = buf_of(slots, buf);
                let (i, _) = eval(slots, index)?;
                let (v, t) = eval(slots, value)?;
                self.write_elem(b, i, v, t)?;
            }
            CInstr::Alloc { dst, count } => {
                let (n, _) = eval(slots, count)?;
                let bytes = n as u64 * 4;
                if self.heap_used + bytes > HEAP_SIZE as u64 {
                    return Err(Fault::new(
                        CrashKind::OobWrite,
                        format!("heap exhausted allocating {n} elements"),
                    )
                    .at(HEAP_BASE.wrapping_add(self.heap_used as u32)));
                }
                self.heap_used += bytes;
                self.heap.push(HeapBuf {
                    elems: vec![0; n as usize],
                    taint: vec![false; n as usize],
                });
                let h = (self.heap.len() - 1) as u32;
                self.set(c, *dst, Value::Buf(BufRef::Heap(h)));
            }
            CInstr::Asm { outputs } => {
                for o in outputs.clone() {
                    self.set(c, o, ZERO);
                }
            }
            CInstr::Assert { cond } => {
                let (v, _) = eval(slots, cond)?;
                if v == 0 {
                    return Err(Fault::new(CrashKind::AssertFail, "assertion failed"));
                }
            }
            CInstr::Input { dst, width } => {
                let v = self.input.read(*width);
                self.set(c, *dst, Value::Word(v, false));
            }
            CInstr::InputAvail { dst } => {
                let v = self.input.has_remaining() as u32;
                self.set(c, *dst, Value::Word(v, false));
            }
            CInstr::Isr { selector } => {
                let (sel, _) = eval(slots, selector)?;
                let n = prog.vector.len();
                if n > 0 {
                    let idx = sel as usize % n;
                    if !self.disabled[idx] {
                        if depth >= self.limits.max_call_depth {
                            return Err(Fault::new(
                                CrashKind::OobWrite,
                                "stack overflow entering interrupt handler",
                            )
                            .at(self.contexts[c].stack_base.wrapping_sub(4)));
                        }
                        self.contexts[c].frames[depth - 1].ip += 1;
                        self.push_frame(c, prog.vector[idx], &[], None);
                        return Ok(Flow::Continue);
                    }
                }
            }
            CInstr::Yield => {
                self.contexts[c].frames[depth - 1].ip += 1;
                return Ok(Flow::Yield);
            }
        }
        self.contexts[c].frames[depth - 1].ip += 1;
        Ok(Flow::Continue)
    }

    fn terminate(
        &mut self,
        prog: &CompiledProgram,
        c: usize,
        term: &CTerm,
        fname: &str,
        block: usize,
    ) -> Result<Flow, Fault> {
        let slots = &self.contexts[c].frames.last().expect("frame").slots;
        match term {
            CTerm::Branch {
                cond,
                then_blk,
                else_blk,
                weakened,
            } => {
                let (v, t) = eval(slots, cond)?;
                let mut taken = v != 0;
                if t {
                    self.last_tainted_branch = Some(Site {
                        function: fname.to_string(),
                        block,
                    });
                    if *weakened {
                        taken ^= self.input.read_u8() & 1 == 1;
                    }
                }
                self.goto(prog, c, if taken { *then_blk } else { *else_blk });
                Ok(Flow::Continue)
            }
            CTerm::Jump(t) => {
                self.goto(prog, c, *t);
                Ok(Flow::Continue)
            }
            CTerm::Return(e) => {
                let value = match e {
                    Some(e) => {
                        let (v, t) = eval(slots, e)?;
                        Value::Word(v, t)
                    }
                    None => ZERO,
                };
                let frames = &mut self.contexts[c].frames;
                let done = frames.pop().expect("frame");
                match frames.last_mut() {
                    Some(parent) => {
                        if let Some(d) = done.ret {
                            parent.slots[d] = value;
                        }
                        Ok(Flow::Continue)
                    }
                    None => Ok(Flow::Finished),
                }
            }
            CTerm::Halt => Ok(Flow::Halt),
        }
    }
}

#[cfg(test)]
mod tests;
