//! Interpreter state shared by the scheduler and the exhaustive oracle.
//!
//! Threads settle eagerly: after every visible step a thread runs its
//! private code until it is poised at the next visible operation, blocks or
//! finishes. Schedulers therefore only ever choose among poised threads.

use std::collections::VecDeque;

use super::compile::{Code, Op, SyncObj, Tag};
use crate::frontend::{AccessKind, BinOp, Expr, UnOp};
use crate::{Error, Result};

/// Hard limit on spawned threads per run.
pub const MAX_THREADS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub func: u32,
    pub pc: u32,
    pub base: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Ready,
    BlockedBarrier { barrier: u32, gen: u64 },
    BlockedCond { cond: u32 },
    Finished,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Thread {
    pub tid: usize,
    pub entry: u32,
    pub frames: Vec<Frame>,
    /// Locals of every frame followed by operands.
    pub stack: Vec<i64>,
    /// Statements executed so far.
    pub icount: u64,
    /// Statement (index into `Code::sites`) currently executing.
    pub current: u32,
    pub status: Status,
    pub output: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SyncState {
    Lock(Option<usize>),
    Cond(VecDeque<usize>),
    Barrier { count: usize, arrived: Vec<usize>, gen: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SyncOp {
    Lock,
    Unlock,
    Barrier,
    Signal,
    Broadcast,
    Wait,
    Spawn,
    Join,
}

impl SyncOp {
    pub fn as_str(self) -> &'static str {
        match self {
            SyncOp::Lock => "lock",
            SyncOp::Unlock => "unlock",
            SyncOp::Barrier => "barrier",
            SyncOp::Signal => "signal",
            SyncOp::Broadcast => "broadcast",
            SyncOp::Wait => "wait",
            SyncOp::Spawn => "spawn",
            SyncOp::Join => "join",
        }
    }

    /// The synchronization operation `op` performs, with its object: a sync
    /// declaration index, a function index for spawn, or a thread id for
    /// join (read off the operand stack).
    pub fn of(op: &Op, stack: &[i64]) -> Option<(SyncOp, i64)> {
        Some(match op {
            Op::Lock(m) => (SyncOp::Lock, *m as i64),
            Op::Unlock(m) => (SyncOp::Unlock, *m as i64),
            Op::Barrier(b) => (SyncOp::Barrier, *b as i64),
            Op::Signal(c) => (SyncOp::Signal, *c as i64),
            Op::Broadcast(c) => (SyncOp::Broadcast, *c as i64),
            Op::WaitRelease { cond, .. } => (SyncOp::Wait, *cond as i64),
            Op::Spawn { func } => (SyncOp::Spawn, *func as i64),
            Op::Join => (SyncOp::Join, *stack.last()?),
            _ => return None,
        })
    }

    pub fn object_name(self, code: &Code, object: i64) -> String {
        match self {
            SyncOp::Spawn => code.functions[object as usize].name.clone(),
            SyncOp::Join => object.to_string(),
            _ => code.sync_name(object as u32).to_string(),
        }
    }
}

/// What a visible step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Access { tag: Tag, kind: AccessKind, value: i64 },
    Sync { op: SyncOp, object: i64 },
    Print,
}

/// Remaining operation budget; running out is a resource-cap error.
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    pub left: u64,
    pub used: u64,
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Budget { left: limit, used: 0 }
    }

    #[inline]
    fn tick(&mut self) -> Result<()> {
        if self.left == 0 {
            return Err(Error::ResourceCap(format!("execution exceeded {} operations", self.used)));
        }
        self.left -= 1;
        self.used += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct State {
    pub threads: Vec<Thread>,
    pub memory: Vec<Vec<i64>>,
    pub syncs: Vec<SyncState>,
    pub nthreads: i64,
}

/// Evaluates an expression over constants and `nthreads`.
pub fn eval_const(e: &Expr, nthreads: i64) -> Result<i64> {
    Ok(match e {
        Expr::Int(v) => *v,
        Expr::NThreads => nthreads,
        Expr::Unary(op, x) => unary(*op, eval_const(x, nthreads)?),
        Expr::Binary(op, l, r) => binary(*op, eval_const(l, nthreads)?, eval_const(r, nthreads)?)
            .ok_or_else(|| Error::Runtime("division by zero in constant expression".into()))?,
        Expr::Var(v) | Expr::Index(v, _) => {
            return Err(Error::Runtime(format!("`{v}` is not a constant")));
        }
    })
}

fn unary(op: UnOp, v: i64) -> i64 {
    match op {
        UnOp::Neg => v.wrapping_neg(),
        UnOp::Not => (v == 0) as i64,
    }
}

fn binary(op: BinOp, a: i64, b: i64) -> Option<i64> {
    Some(match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::Div => {
            if b == 0 {
                return None;
            }
            a.wrapping_div(b)
        }
        BinOp::Rem => {
            if b == 0 {
                return None;
            }
            a.wrapping_rem(b)
        }
        BinOp::Lt => (a < b) as i64,
        BinOp::Le => (a <= b) as i64,
        BinOp::Gt => (a > b) as i64,
        BinOp::Ge => (a >= b) as i64,
        BinOp::Eq => (a == b) as i64,
        BinOp::Ne => (a != b) as i64,
        BinOp::And => (a != 0 && b != 0) as i64,
        BinOp::Or => (a != 0 || b != 0) as i64,
    })
}

impl State {
    /// Initial state with `main` settled.
    pub fn new(code: &Code, nthreads: usize, budget: &mut Budget) -> Result<State> {
        let nthreads = nthreads as i64;
        let memory = code.globals.iter().map(|(_, len, init)| vec![*init; *len]).collect();
        let syncs = code
            .syncs
            .iter()
            .map(|(name, k)| {
                Ok(match k {
                    SyncObj::Lock => SyncState::Lock(None),
                    SyncObj::Cond => SyncState::Cond(VecDeque::new()),
                    SyncObj::Barrier(e) => {
                        let count = eval_const(e, nthreads)?;
                        if count < 1 {
                            return Err(Error::Runtime(format!(
                                "barrier `{name}` has participant count {count}"
                            )));
                        }
                        SyncState::Barrier {
                            count: count as usize,
                            arrived: Vec::new(),
                            gen: 0,
                        }
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut s = State {
            threads: Vec::new(),
            memory,
            syncs,
            nthreads,
        };
        s.add_thread(code, code.main, &[], budget)?;
        Ok(s)
    }

    fn add_thread(&mut self, code: &Code, func: u32, args: &[i64], budget: &mut Budget) -> Result<usize> {
        let tid = self.threads.len();
        if tid >= MAX_THREADS {
            return Err(Error::ResourceCap(format!("more than {MAX_THREADS} threads")));
        }
        let f = &code.functions[func as usize];
        let mut stack = args.to_vec();
        stack.resize(f.nlocals as usize, 0);
        self.threads.push(Thread {
            tid,
            entry: func,
            frames: vec![Frame { func, pc: 0, base: 0 }],
            stack,
            icount: 0,
            current: 0,
            status: Status::Ready,
            output: Vec::new(),
        });
        self.settle(code, tid, budget)?;
        Ok(tid)
    }

    pub fn all_finished(&self) -> bool {
        self.threads.iter().all(|t| t.status == Status::Finished)
    }

    /// The operation a ready thread is poised at.
    pub fn poised<'c>(&self, code: &'c Code, tid: usize) -> Option<&'c Op> {
        let t = &self.threads[tid];
        if t.status != Status::Ready {
            return None;
        }
        let fr = t.frames.last()?;
        code.functions[fr.func as usize].ops.get(fr.pc as usize)
    }

    pub fn enabled(&self, code: &Code, tid: usize) -> bool {
        match self.poised(code, tid) {
            None => false,
            Some(Op::Lock(m)) => matches!(self.syncs[*m as usize], SyncState::Lock(None)),
            Some(Op::Join) => {
                let target = *self.threads[tid].stack.last().expect("join operand");
                match usize::try_from(target).ok().and_then(|t| self.threads.get(t)) {
                    Some(t) => t.status == Status::Finished,
                    // invalid targets fail when stepped
                    None => true,
                }
            }
            Some(_) => true,
        }
    }

    /// Location `(global, index)` and kind of the access `tid` is poised at.
    pub fn poised_access(&self, code: &Code, tid: usize) -> Option<(Tag, AccessKind, u32, i64)> {
        let stack = &self.threads[tid].stack;
        let top = |k: usize| stack[stack.len() - 1 - k];
        Some(match *self.poised(code, tid)? {
            Op::LoadG { var, tag } => (tag, AccessKind::Read, var, 0),
            Op::StoreG { var, tag } => (tag, AccessKind::Write, var, 0),
            Op::LoadA { var, tag } => (tag, AccessKind::Read, var, top(0)),
            Op::StoreA { var, tag, value_first } => (tag, AccessKind::Write, var, top(if value_first { 0 } else { 1 })),
            _ => return None,
        })
    }

    pub fn site_of(&self, code: &Code, tid: usize) -> String {
        code.sites
            .get(self.threads[tid].current as usize)
            .map_or_else(|| code.functions[self.threads[tid].entry as usize].name.clone(), |s| s.to_string())
    }

    fn err(&self, code: &Code, tid: usize, msg: impl std::fmt::Display) -> Error {
        Error::Runtime(format!("thread {tid} at {}: {msg}", self.site_of(code, tid)))
    }

    /// Why a thread that is not finished cannot move.
    pub fn blocked_on(&self, code: &Code, tid: usize) -> String {
        let t = &self.threads[tid];
        match t.status {
            Status::Finished => "finished".into(),
            Status::BlockedBarrier { barrier, .. } => format!("barrier {}", code.sync_name(barrier)),
            Status::BlockedCond { cond } => format!("condition {}", code.sync_name(cond)),
            Status::Ready => match self.poised(code, tid) {
                Some(Op::Lock(m)) => match self.syncs[*m as usize] {
                    SyncState::Lock(Some(o)) => format!("lock {} held by thread {o}", code.sync_name(*m)),
                    _ => format!("lock {}", code.sync_name(*m)),
                },
                Some(Op::Join) => format!("join of thread {}", t.stack.last().copied().unwrap_or(-1)),
                _ => "runnable".into(),
            },
        }
    }

    pub fn deadlock_error(&self, code: &Code) -> Error {
        let info: Vec<String> = self
            .threads
            .iter()
            .filter(|t| t.status != Status::Finished)
            .map(|t| format!("thread {} at {} blocked on {}", t.tid, self.site_of(code, t.tid), self.blocked_on(code, t.tid)))
            .collect();
        Error::Runtime(format!("deadlock: {}", info.join("; ")))
    }

    fn location(&self, code: &Code, tid: usize, var: u32, index: i64) -> Result<usize> {
        let len = self.memory[var as usize].len();
        if index < 0 || index as usize >= len {
            return Err(self.err(
                code,
                tid,
                format!("index {index} out of bounds for `{}` of length {len}", code.global_name(var)),
            ));
        }
        Ok(index as usize)
    }

    /// Runs `tid`'s private code until it is poised at a visible operation,
    /// blocked or finished.
    pub fn settle(&mut self, code: &Code, tid: usize, budget: &mut Budget) -> Result<()> {
        loop {
            let t = &mut self.threads[tid];
            if t.status != Status::Ready {
                return Ok(());
            }
            let fr = t.frames.last_mut().expect("ready thread has a frame");
            let f = &code.functions[fr.func as usize];
            let op = f.ops[fr.pc as usize];
            if op.visible() {
                return Ok(());
            }
            budget.tick()?;
            fr.pc += 1;
            let base = fr.base as usize;
            match op {
                Op::Stmt(s) => {
                    t.icount += 1;
                    t.current = s;
                }
                Op::Push(v) => t.stack.push(v),
                Op::NThreads => t.stack.push(self.nthreads),
                Op::Load(i) => t.stack.push(t.stack[base + i as usize]),
                Op::Store(i) => {
                    let v = t.stack.pop().expect("operand");
                    t.stack[base + i as usize] = v;
                }
                Op::Un(u) => {
                    let v = t.stack.pop().expect("operand");
                    t.stack.push(unary(u, v));
                }
                Op::Bin(b) => {
                    let r = t.stack.pop().expect("operand");
                    let l = t.stack.pop().expect("operand");
                    match binary(b, l, r) {
                        Some(v) => t.stack.push(v),
                        None => return Err(self.err(code, tid, "division by zero")),
                    }
                }
                Op::Truth => {
                    let v = t.stack.pop().expect("operand");
                    t.stack.push((v != 0) as i64);
                }
                Op::Jump(to) => fr.pc = to,
                Op::JumpIfZero(to) => {
                    if t.stack.pop().expect("operand") == 0 {
                        fr.pc = to;
                    }
                }
                Op::JumpIfNonZero(to) => {
                    if t.stack.pop().expect("operand") != 0 {
                        fr.pc = to;
                    }
                }
                Op::Call { func, argc } => {
                    let g = &code.functions[func as usize];
                    let base = t.stack.len() - argc as usize;
                    t.stack.resize(base + g.nlocals as usize, 0);
                    t.frames.push(Frame {
                        func,
                        pc: 0,
                        base: base as u32,
                    });
                }
                Op::Ret { value } => {
                    let v = if value { t.stack.pop() } else { None };
                    let done = t.frames.pop().expect("frame");
                    t.stack.truncate(done.base as usize);
                    if t.frames.is_empty() {
                        t.status = Status::Finished;
                        t.stack.clear();
                    } else if let Some(v) = v {
                        t.stack.push(v);
                    }
                }
                Op::Pop => {
                    t.stack.pop();
                }
                _ => unreachable!("visible op {op:?} in private code"),
            }
        }
    }

    /// Performs the visible operation `tid` is poised at (the caller checks
    /// `enabled`) and settles every thread the step made runnable.
    pub fn step(&mut self, code: &Code, tid: usize, budget: &mut Budget) -> Result<Event> {
        budget.tick()?;
        let op = *self.poised(code, tid).expect("step of a poised thread");
        self.threads[tid].frames.last_mut().expect("frame").pc += 1;
        let pop = |s: &mut State| s.threads[tid].stack.pop().expect("operand");
        let event = match op {
            Op::LoadG { var, tag } => {
                let value = self.memory[var as usize][0];
                self.threads[tid].stack.push(value);
                Event::Access { tag, kind: AccessKind::Read, value }
            }
            Op::LoadA { var, tag } => {
                let i = pop(self);
                let i = self.location(code, tid, var, i)?;
                let value = self.memory[var as usize][i];
                self.threads[tid].stack.push(value);
                Event::Access { tag, kind: AccessKind::Read, value }
            }
            Op::StoreG { var, tag } => {
                let value = pop(self);
                self.memory[var as usize][0] = value;
                Event::Access { tag, kind: AccessKind::Write, value }
            }
            Op::StoreA { var, tag, value_first } => {
                let (i, value) = if value_first {
                    let i = pop(self);
                    (i, pop(self))
                } else {
                    let v = pop(self);
                    (pop(self), v)
                };
                let i = self.location(code, tid, var, i)?;
                self.memory[var as usize][i] = value;
                Event::Access { tag, kind: AccessKind::Write, value }
            }
            Op::Spawn { func } => {
                let arg = pop(self);
                let child = self.add_thread(code, func, &[arg], budget)?;
                self.threads[tid].stack.push(child as i64);
                Event::Sync {
                    op: SyncOp::Spawn,
                    object: func as i64,
                }
            }
            Op::Join => {
                let target = pop(self);
                let ok = usize::try_from(target).is_ok_and(|t| t < self.threads.len() && t != tid);
                if !ok {
                    return Err(self.err(code, tid, format!("join of unknown thread {target}")));
                }
                Event::Sync {
                    op: SyncOp::Join,
                    object: target,
                }
            }
            Op::Lock(m) => {
                self.syncs[m as usize] = SyncState::Lock(Some(tid));
                Event::Sync {
                    op: SyncOp::Lock,
                    object: m as i64,
                }
            }
            Op::Unlock(m) => {
                if self.syncs[m as usize] != SyncState::Lock(Some(tid)) {
                    return Err(self.err(code, tid, format!("unlock of `{}` which it does not hold", code.sync_name(m))));
                }
                self.syncs[m as usize] = SyncState::Lock(None);
                Event::Sync {
                    op: SyncOp::Unlock,
                    object: m as i64,
                }
            }
            Op::Barrier(b) => {
                let SyncState::Barrier { count, arrived, gen } = &mut self.syncs[b as usize] else {
                    unreachable!("barrier op on non-barrier")
                };
                arrived.push(tid);
                if arrived.len() >= *count {
                    let released = std::mem::take(arrived);
                    *gen += 1;
                    for &r in &released {
                        self.threads[r].status = Status::Ready;
                    }
                    for &r in &released {
                        if r != tid {
                            self.settle(code, r, budget)?;
                        }
                    }
                } else {
                    self.threads[tid].status = Status::BlockedBarrier { barrier: b, gen: *gen };
                }
                Event::Sync {
                    op: SyncOp::Barrier,
                    object: b as i64,
                }
            }
            Op::Signal(c) | Op::Broadcast(c) => {
                let SyncState::Cond(waiters) = &mut self.syncs[c as usize] else {
                    unreachable!("signal on non-condition")
                };
                let woken: Vec<usize> = if matches!(op, Op::Signal(_)) {
                    waiters.pop_front().into_iter().collect()
                } else {
                    waiters.drain(..).collect()
                };
                for w in woken {
                    // poised at the re-acquiring lock
                    self.threads[w].status = Status::Ready;
                }
                Event::Sync {
                    op: if matches!(op, Op::Signal(_)) { SyncOp::Signal } else { SyncOp::Broadcast },
                    object: c as i64,
                }
            }
            Op::WaitRelease { cond, mutex } => {
                if self.syncs[mutex as usize] != SyncState::Lock(Some(tid)) {
                    return Err(self.err(
                        code,
                        tid,
                        format!("wait on `{}` without holding `{}`", code.sync_name(cond), code.sync_name(mutex)),
                    ));
                }
                self.syncs[mutex as usize] = SyncState::Lock(None);
                let SyncState::Cond(waiters) = &mut self.syncs[cond as usize] else {
                    unreachable!("wait on non-condition")
                };
                waiters.push_back(tid);
                self.threads[tid].status = Status::BlockedCond { cond };
                Event::Sync {
                    op: SyncOp::Wait,
                    object: cond as i64,
                }
            }
            Op::Print => {
                let v = pop(self);
                self.threads[tid].output.push(v);
                Event::Print
            }
            other => unreachable!("private op {other:?} stepped"),
        };
        self.settle(code, tid, budget)?;
        Ok(event)
    }
}
