//! Lowers a program to stack code. Shared accesses are emitted in exactly
//! the order `frontend::access` numbers them, so each carries its slot.

use std::collections::BTreeMap;

use crate::frontend::{AccessKind, BinOp, Expr, LValue, LocalInit, Program, SiteId, Stmt, StmtKind, SyncKind, UnOp};
use crate::instrument::SiteTable;
use crate::{Error, Result};

/// Identity of one static shared access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag {
    /// Index into `Code::sites`.
    pub stmt: u32,
    pub slot: u32,
    /// Site-table row when the access is traced.
    pub trace: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    /// Statement start; bumps the thread's instruction count.
    Stmt(u32),
    Push(i64),
    NThreads,
    Load(u32),
    Store(u32),
    LoadG { var: u32, tag: Tag },
    /// Pops the index.
    LoadA { var: u32, tag: Tag },
    /// Pops the value.
    StoreG { var: u32, tag: Tag },
    /// Pops value and index; `value_first` means the value was pushed
    /// before the index.
    StoreA { var: u32, tag: Tag, value_first: bool },
    Un(UnOp),
    Bin(BinOp),
    /// Normalizes the top of stack to 0/1.
    Truth,
    Jump(u32),
    JumpIfZero(u32),
    JumpIfNonZero(u32),
    Call { func: u32, argc: u32 },
    Ret { value: bool },
    Pop,
    /// Pops the id argument, pushes the new thread id.
    Spawn { func: u32 },
    /// Pops a thread id.
    Join,
    Lock(u32),
    Unlock(u32),
    Barrier(u32),
    Signal(u32),
    Broadcast(u32),
    /// First half of `wait(c, m)`: release `m` and sleep on `c`; the
    /// following `Lock(m)` re-acquires.
    WaitRelease { cond: u32, mutex: u32 },
    Print,
}

impl Op {
    /// Operations at which another thread may be scheduled.
    pub fn visible(&self) -> bool {
        matches!(
            self,
            Op::LoadG { .. }
                | Op::LoadA { .. }
                | Op::StoreG { .. }
                | Op::StoreA { .. }
                | Op::Spawn { .. }
                | Op::Join
                | Op::Lock(_)
                | Op::Unlock(_)
                | Op::Barrier(_)
                | Op::Signal(_)
                | Op::Broadcast(_)
                | Op::WaitRelease { .. }
                | Op::Print
        )
    }

    pub fn tag(&self) -> Option<Tag> {
        match self {
            Op::LoadG { tag, .. } | Op::LoadA { tag, .. } | Op::StoreG { tag, .. } | Op::StoreA { tag, .. } => {
                Some(*tag)
            }
            _ => None,
        }
    }

    pub fn access_kind(&self) -> Option<AccessKind> {
        match self {
            Op::LoadG { .. } | Op::LoadA { .. } => Some(AccessKind::Read),
            Op::StoreG { .. } | Op::StoreA { .. } => Some(AccessKind::Write),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FnCode {
    pub name: String,
    pub nparams: u32,
    pub nlocals: u32,
    pub ops: Vec<Op>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyncObj {
    Lock,
    Cond,
    Barrier(Expr),
}

#[derive(Debug, Clone)]
pub struct Code {
    pub functions: Vec<FnCode>,
    pub sites: Vec<SiteId>,
    pub globals: Vec<(String, usize, i64)>,
    pub syncs: Vec<(String, SyncObj)>,
    pub main: u32,
    /// Whether threads other than main can spawn, which makes thread ids
    /// schedule dependent and spawns worth logging.
    pub log_spawns: bool,
}

impl Code {
    pub fn global_name(&self, v: u32) -> &str {
        &self.globals[v as usize].0
    }

    pub fn sync_name(&self, s: u32) -> &str {
        &self.syncs[s as usize].0
    }
}

/// Compiles `p`. Trace annotations are resolved against `table`; a program
/// with annotations but no table, or with annotations the table does not
/// describe, is rejected as stale.
pub fn compile(p: &Program, table: Option<&SiteTable>) -> Result<Code> {
    let fn_index: BTreeMap<&str, u32> = p
        .functions
        .iter()
        .enumerate()
        .map(|(i, f)| (f.name.as_str(), i as u32))
        .collect();
    let globals: Vec<(String, usize, i64)> = p.globals.iter().map(|g| (g.name.clone(), g.cells(), g.init)).collect();
    let global_index: BTreeMap<&str, u32> = p
        .globals
        .iter()
        .enumerate()
        .map(|(i, g)| (g.name.as_str(), i as u32))
        .collect();
    let syncs: Vec<(String, SyncObj)> = p
        .syncs
        .iter()
        .map(|s| {
            let k = match &s.kind {
                SyncKind::Lock => SyncObj::Lock,
                SyncKind::Cond => SyncObj::Cond,
                SyncKind::Barrier(e) => SyncObj::Barrier(e.clone()),
            };
            (s.name.clone(), k)
        })
        .collect();
    let sync_index: BTreeMap<&str, u32> = p
        .syncs
        .iter()
        .enumerate()
        .map(|(i, s)| (s.name.as_str(), i as u32))
        .collect();
    let returns: BTreeMap<&str, bool> = p.functions.iter().map(|f| (f.name.as_str(), f.returns_value)).collect();
    let mut sites = Vec::new();
    let mut functions = Vec::new();
    let mut matched = vec![false; table.map_or(0, |t| t.rows.len())];
    for f in &p.functions {
        let mut c = FnCompiler {
            fn_index: &fn_index,
            global_index: &global_index,
            sync_index: &sync_index,
            table,
            matched: &mut matched,
            sites: &mut sites,
            locals: BTreeMap::new(),
            ops: Vec::new(),
            stmt: 0,
            slot: 0,
            traces: Vec::new(),
            returns: &returns,
            returns_value: f.returns_value,
        };
        for prm in &f.params {
            let n = c.locals.len() as u32;
            c.locals.insert(prm.clone(), n);
        }
        for l in f.locals() {
            let n = c.locals.len() as u32;
            c.locals.entry(l).or_insert(n);
        }
        c.body(&f.body)?;
        if f.returns_value {
            c.ops.push(Op::Push(0));
        }
        c.ops.push(Op::Ret { value: f.returns_value });
        functions.push(FnCode {
            name: f.name.clone(),
            nparams: f.params.len() as u32,
            nlocals: c.locals.len() as u32,
            ops: c.ops,
        });
    }
    if let Some(t) = table {
        if let Some(k) = matched.iter().position(|m| !m) {
            let r = &t.rows[k];
            return Err(Error::Stale(format!(
                "site table row {k} ({} slot {}) has no matching @trace annotation",
                r.site, r.slot
            )));
        }
    }
    let main = fn_index[p.main.as_str()];
    let log_spawns = helper_threads_spawn(p);
    Ok(Code {
        functions,
        sites,
        globals,
        syncs,
        main,
        log_spawns,
    })
}

/// True when some spawned thread can itself reach a `spawn`.
fn helper_threads_spawn(p: &Program) -> bool {
    let mut spawns: BTreeMap<&str, bool> = BTreeMap::new();
    let mut calls: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for f in &p.functions {
        let mut own = false;
        let mut callees = Vec::new();
        f.walk(&mut |s| match &s.kind {
            StmtKind::Spawn { .. } | StmtKind::Local { init: Some(LocalInit::Spawn { .. }), .. } => own = true,
            StmtKind::Call { func, .. } | StmtKind::Local { init: Some(LocalInit::Call { func, .. }), .. } => {
                callees.push(func.clone())
            }
            _ => {}
        });
        spawns.insert(&f.name, own);
        calls.insert(&f.name, callees);
    }
    loop {
        let mut changed = false;
        for (f, cs) in &calls {
            if !spawns[f] && cs.iter().any(|c| spawns[c.as_str()]) {
                spawns.insert(f, true);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    p.thread_entries().iter().any(|e| e != &p.main && spawns[e.as_str()])
}

struct FnCompiler<'a> {
    fn_index: &'a BTreeMap<&'a str, u32>,
    global_index: &'a BTreeMap<&'a str, u32>,
    sync_index: &'a BTreeMap<&'a str, u32>,
    table: Option<&'a SiteTable>,
    matched: &'a mut Vec<bool>,
    sites: &'a mut Vec<SiteId>,
    locals: BTreeMap<String, u32>,
    ops: Vec<Op>,
    stmt: u32,
    slot: u32,
    /// (row, slot) pairs annotated on the current statement.
    traces: Vec<(u32, u32)>,
    returns: &'a BTreeMap<&'a str, bool>,
    returns_value: bool,
}

impl FnCompiler<'_> {
    fn here(&self) -> u32 {
        self.ops.len() as u32
    }

    fn patch(&mut self, at: u32, to: u32) {
        match &mut self.ops[at as usize] {
            Op::Jump(t) | Op::JumpIfZero(t) | Op::JumpIfNonZero(t) => *t = to,
            other => unreachable!("patching {other:?}"),
        }
    }

    fn sync(&self, name: &str) -> u32 {
        self.sync_index[name]
    }

    fn begin(&mut self, s: &Stmt) -> Result<()> {
        self.stmt = self.sites.len() as u32;
        self.sites.push(s.site.clone());
        self.slot = 0;
        self.traces.clear();
        for &k in &s.traces {
            let Some(t) = self.table else {
                return Err(Error::Stale(format!(
                    "{} carries @trace({k}) but no site table was given",
                    s.site
                )));
            };
            match t.row(k) {
                Some(r) if r.site == s.site => self.traces.push((k, r.slot)),
                _ => {
                    return Err(Error::Stale(format!(
                        "@trace({k}) at {} does not match the site table",
                        s.site
                    )))
                }
            }
        }
        self.ops.push(Op::Stmt(self.stmt));
        Ok(())
    }

    fn tag(&mut self, name: &str, kind: AccessKind) -> Result<Tag> {
        let slot = self.slot;
        self.slot += 1;
        let trace = self.traces.iter().find(|(_, s)| *s == slot).map(|(k, _)| *k);
        if let (Some(k), Some(t)) = (trace, self.table) {
            let r = &t.rows[k as usize];
            if r.lvalue != name || r.kind != kind {
                return Err(Error::Stale(format!(
                    "@trace({k}) expects a {} of `{}` at slot {slot}",
                    r.kind, r.lvalue
                )));
            }
            self.matched[k as usize] = true;
        }
        Ok(Tag {
            stmt: self.stmt,
            slot,
            trace,
        })
    }

    fn body(&mut self, b: &[Stmt]) -> Result<()> {
        b.iter().try_for_each(|s| self.stmt_code(s))
    }

    fn expr(&mut self, e: &Expr) -> Result<()> {
        match e {
            Expr::Int(v) => self.ops.push(Op::Push(*v)),
            Expr::NThreads => self.ops.push(Op::NThreads),
            Expr::Var(v) => {
                if let Some(&g) = self.global_index.get(v.as_str()) {
                    let tag = self.tag(v, AccessKind::Read)?;
                    self.ops.push(Op::LoadG { var: g, tag });
                } else {
                    self.ops.push(Op::Load(self.locals[v]));
                }
            }
            Expr::Index(a, sub) => {
                self.expr(sub)?;
                let g = self.global_index[a.as_str()];
                let tag = self.tag(a, AccessKind::Read)?;
                self.ops.push(Op::LoadA { var: g, tag });
            }
            Expr::Unary(op, x) => {
                self.expr(x)?;
                self.ops.push(Op::Un(*op));
            }
            Expr::Binary(BinOp::And, l, r) => {
                self.expr(l)?;
                let skip = self.here();
                self.ops.push(Op::JumpIfZero(0));
                self.expr(r)?;
                self.ops.push(Op::Truth);
                let done = self.here();
                self.ops.push(Op::Jump(0));
                let f = self.here();
                self.ops.push(Op::Push(0));
                let end = self.here();
                self.patch(skip, f);
                self.patch(done, end);
            }
            Expr::Binary(BinOp::Or, l, r) => {
                self.expr(l)?;
                let skip = self.here();
                self.ops.push(Op::JumpIfNonZero(0));
                self.expr(r)?;
                self.ops.push(Op::Truth);
                let done = self.here();
                self.ops.push(Op::Jump(0));
                let t = self.here();
                self.ops.push(Op::Push(1));
                let end = self.here();
                self.patch(skip, t);
                self.patch(done, end);
            }
            Expr::Binary(op, l, r) => {
                self.expr(l)?;
                self.expr(r)?;
                self.ops.push(Op::Bin(*op));
            }
        }
        Ok(())
    }

    /// Stores the top of stack into `lv`. `value_first`: the value is
    /// already on the stack and the subscript is evaluated now.
    fn store(&mut self, lv: &LValue, value_first: bool) -> Result<()> {
        match (self.global_index.get(lv.name.as_str()).copied(), &lv.index) {
            (Some(g), None) => {
                let tag = self.tag(&lv.name, AccessKind::Write)?;
                self.ops.push(Op::StoreG { var: g, tag });
            }
            (Some(g), Some(i)) => {
                if value_first {
                    self.expr(i)?;
                }
                let tag = self.tag(&lv.name, AccessKind::Write)?;
                self.ops.push(Op::StoreA { var: g, tag, value_first });
            }
            (None, _) => self.ops.push(Op::Store(self.locals[&lv.name])),
        }
        Ok(())
    }

    fn call(&mut self, func: &str, args: &[Expr]) -> Result<()> {
        for a in args {
            self.expr(a)?;
        }
        self.ops.push(Op::Call {
            func: self.fn_index[func],
            argc: args.len() as u32,
        });
        Ok(())
    }

    fn stmt_code(&mut self, s: &Stmt) -> Result<()> {
        self.begin(s)?;
        match &s.kind {
            StmtKind::Local { name, init } => match init {
                None => {}
                Some(LocalInit::Expr(e)) => {
                    self.expr(e)?;
                    self.ops.push(Op::Store(self.locals[name]));
                }
                Some(LocalInit::Call { func, args }) => {
                    self.call(func, args)?;
                    self.ops.push(Op::Store(self.locals[name]));
                }
                Some(LocalInit::Spawn { func, arg }) => {
                    self.expr(arg)?;
                    self.ops.push(Op::Spawn { func: self.fn_index[func.as_str()] });
                    self.ops.push(Op::Store(self.locals[name]));
                }
            },
            StmtKind::Assign { target, value } => {
                if let Some(i) = &target.index {
                    if self.global_index.contains_key(target.name.as_str()) {
                        self.expr(i)?;
                    }
                }
                self.expr(value)?;
                self.store(target, false)?;
            }
            StmtKind::Call { target, func, args } => {
                self.call(func, args)?;
                match target {
                    Some(t) => self.store(t, true)?,
                    None if self.returns[func.as_str()] => self.ops.push(Op::Pop),
                    None => {}
                }
            }
            StmtKind::Spawn { target, func, arg } => {
                self.expr(arg)?;
                self.ops.push(Op::Spawn { func: self.fn_index[func.as_str()] });
                match target {
                    Some(t) => self.store(t, true)?,
                    None => self.ops.push(Op::Pop),
                }
            }
            StmtKind::Join(e) => {
                self.expr(e)?;
                self.ops.push(Op::Join);
            }
            StmtKind::Lock(m) => self.ops.push(Op::Lock(self.sync(m))),
            StmtKind::Unlock(m) => self.ops.push(Op::Unlock(self.sync(m))),
            StmtKind::Barrier(b) => self.ops.push(Op::Barrier(self.sync(b))),
            StmtKind::Signal(c) => self.ops.push(Op::Signal(self.sync(c))),
            StmtKind::Broadcast(c) => self.ops.push(Op::Broadcast(self.sync(c))),
            StmtKind::Wait { cond, mutex } => {
                let (c, m) = (self.sync(cond), self.sync(mutex));
                self.ops.push(Op::WaitRelease { cond: c, mutex: m });
                self.ops.push(Op::Lock(m));
            }
            StmtKind::Print(e) => {
                self.expr(e)?;
                self.ops.push(Op::Print);
            }
            StmtKind::Return(e) => {
                match e {
                    Some(e) => self.expr(e)?,
                    None if self.returns_value => self.ops.push(Op::Push(0)),
                    None => {}
                }
                self.ops.push(Op::Ret { value: self.returns_value });
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                self.expr(cond)?;
                let j = self.here();
                self.ops.push(Op::JumpIfZero(0));
                self.body(then_body)?;
                let out = self.here();
                self.ops.push(Op::Jump(0));
                let e = self.here();
                self.patch(j, e);
                self.body(else_body)?;
                let end = self.here();
                self.patch(out, end);
            }
            StmtKind::While { cond, body } => {
                let top = self.here() - 1;
                self.expr(cond)?;
                let j = self.here();
                self.ops.push(Op::JumpIfZero(0));
                self.body(body)?;
                self.ops.push(Op::Jump(top));
                let end = self.here();
                self.patch(j, end);
            }
            StmtKind::For {
                init,
                cond,
                update,
                body,
            } => {
                // The marker just emitted belongs to the condition; the init
                // runs once before it.
                let marker = self.ops.pop().expect("marker");
                let (stmt, traces) = (self.stmt, self.traces.clone());
                if let Some(i) = init {
                    self.stmt_code(i)?;
                }
                self.stmt = stmt;
                self.traces = traces;
                self.slot = 0;
                let top = self.here();
                self.ops.push(marker);
                let mut exit = None;
                if let Some(c) = cond {
                    self.expr(c)?;
                    exit = Some(self.here());
                    self.ops.push(Op::JumpIfZero(0));
                }
                self.body(body)?;
                if let Some(u) = update {
                    self.stmt_code(u)?;
                }
                self.ops.push(Op::Jump(top));
                if let Some(x) = exit {
                    let end = self.here();
                    self.patch(x, end);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_program, shared_accesses};

    /// Accesses emitted per statement must follow the analysis numbering.
    #[test]
    fn slots_follow_analysis_order() {
        let src = "int x;\nint a[4];\nlock m;\n\
                   int g(int k) { return a[k] + x; }\n\
                   void main() { int t; a[x] = a[x + 1] + x; t = g(x); a[t] = g(a[0]);\n\
                   if (x > 0 && a[1] < 3) { x = 1; }\n\
                   for (t = x; t < a[2]; t = t + x) { print(a[t]); }\n\
                   while (x < 2) { x = x + 1; } }";
        let p = parse_program(src).unwrap();
        let code = compile(&p, None).unwrap();
        let mut emitted: BTreeMap<SiteId, Vec<(u32, AccessKind)>> = BTreeMap::new();
        for f in &code.functions {
            for op in &f.ops {
                if let (Some(t), Some(k)) = (op.tag(), op.access_kind()) {
                    emitted.entry(code.sites[t.stmt as usize].clone()).or_default().push((t.slot, k));
                }
            }
        }
        for f in &p.functions {
            f.walk(&mut |s| {
                let want: Vec<(u32, AccessKind)> = shared_accesses(&p, s).iter().map(|a| (a.slot, a.kind)).collect();
                let got = emitted.get(&s.site).cloned().unwrap_or_default();
                assert_eq!(got, want, "{}", s.site);
            });
        }
    }
}
