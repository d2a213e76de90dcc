//! Semantic checks that turn a parsed syntax tree into a valid `Program`.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;
use super::callgraph::CallGraph;
use super::ParseError;

pub(super) fn validate(p: &Program) -> Result<(), ParseError> {
    let mut top: BTreeMap<&str, u32> = BTreeMap::new();
    let decls = p
        .globals
        .iter()
        .map(|g| (g.name.as_str(), g.line))
        .chain(p.syncs.iter().map(|s| (s.name.as_str(), s.line)))
        .chain(p.functions.iter().map(|f| (f.name.as_str(), f.line)));
    for (name, line) in decls {
        if top.insert(name, line).is_some() {
            return Err(sem(line, format!("`{name}` is declared twice")));
        }
    }
    let Some(main) = p.function(&p.main) else {
        return Err(ParseError::Undeclared {
            name: p.main.clone(),
            line: 1,
        });
    };
    if !main.params.is_empty() || main.returns_value {
        return Err(sem(main.line, "`main` must be `void main()`"));
    }
    for s in &p.syncs {
        if let SyncKind::Barrier(count) = &s.kind {
            let mut bad = None;
            count.visit_names(&mut |n| bad = bad.clone().or(Some(n.to_string())));
            if let Some(n) = bad {
                return Err(sem(
                    s.line,
                    format!("barrier count may only use constants and `nthreads`, found `{n}`"),
                ));
            }
        }
    }
    for f in &p.functions {
        FnChecker::new(p, f)?.check()?;
    }
    // Recursion check: the call graph must be acyclic.
    let cg = CallGraph::build(p);
    if let Some(cycle) = cg.find_cycle() {
        return Err(ParseError::Recursion { cycle });
    }
    Ok(())
}

fn sem(line: u32, msg: impl Into<String>) -> ParseError {
    ParseError::Semantic {
        line,
        msg: msg.into(),
    }
}

struct FnChecker<'a> {
    p: &'a Program,
    f: &'a Function,
    /// Locals and parameters declared so far (function scope).
    scope: BTreeSet<String>,
    ordinals: BTreeSet<u32>,
}

impl<'a> FnChecker<'a> {
    fn new(p: &'a Program, f: &'a Function) -> Result<Self, ParseError> {
        let mut scope = BTreeSet::new();
        for param in &f.params {
            if p.global(param).is_some() || p.sync(param).is_some() {
                return Err(sem(
                    f.line,
                    format!("parameter `{param}` shadows a global declaration"),
                ));
            }
            if !scope.insert(param.clone()) {
                return Err(sem(f.line, format!("parameter `{param}` declared twice")));
            }
        }
        Ok(Self {
            p,
            f,
            scope,
            ordinals: BTreeSet::new(),
        })
    }

    fn check(mut self) -> Result<(), ParseError> {
        let body = &self.f.body;
        self.block(body)
    }

    fn block(&mut self, body: &'a [Stmt]) -> Result<(), ParseError> {
        for (i, s) in body.iter().enumerate() {
            if matches!(s.kind, StmtKind::Return(_)) && i + 1 < body.len() {
                return Err(sem(
                    body[i + 1].site.line,
                    "unreachable statement after `return`",
                ));
            }
            self.stmt(s)?;
        }
        Ok(())
    }

    fn claim_site(&mut self, s: &Stmt) -> Result<(), ParseError> {
        if !self.ordinals.insert(s.site.ordinal) {
            return Err(sem(
                s.site.line,
                format!("duplicate statement ordinal {} in `{}`", s.site.ordinal, self.f.name),
            ));
        }
        Ok(())
    }

    fn stmt(&mut self, s: &'a Stmt) -> Result<(), ParseError> {
        let line = s.site.line;
        if let StmtKind::For { init: Some(i), .. } = &s.kind {
            self.stmt(i)?;
        }
        self.claim_site(s)?;
        match &s.kind {
            StmtKind::Local { name, init } => {
                if self.p.global(name).is_some()
                    || self.p.sync(name).is_some()
                    || self.p.function(name).is_some()
                {
                    return Err(sem(line, format!("local `{name}` shadows a global declaration")));
                }
                match init {
                    None => {}
                    Some(LocalInit::Expr(e)) => self.expr(e, line)?,
                    Some(LocalInit::Call { func, args }) => self.call(func, args, true, line)?,
                    Some(LocalInit::Spawn { func, arg }) => self.spawn(func, arg, line)?,
                }
                // Re-declaring a local (e.g. two `for (int i = ...)` loops)
                // re-initializes the same function-scoped variable.
                if self.f.params.contains(name) {
                    return Err(sem(line, format!("local `{name}` shadows a parameter")));
                }
                self.scope.insert(name.clone());
            }
            StmtKind::Assign { target, value } => {
                self.lvalue(target, line)?;
                self.expr(value, line)?;
            }
            StmtKind::Call { target, func, args } => {
                self.call(func, args, target.is_some(), line)?;
                if let Some(t) = target {
                    self.lvalue(t, line)?;
                }
            }
            StmtKind::Spawn { target, func, arg } => {
                self.spawn(func, arg, line)?;
                if let Some(t) = target {
                    self.lvalue(t, line)?;
                }
            }
            StmtKind::Join(e) | StmtKind::Print(e) => self.expr(e, line)?,
            StmtKind::Lock(m) | StmtKind::Unlock(m) => self.sync(m, "lock", line)?,
            StmtKind::Barrier(b) => self.sync(b, "barrier", line)?,
            StmtKind::Signal(c) | StmtKind::Broadcast(c) => self.sync(c, "cond", line)?,
            StmtKind::Wait { cond, mutex } => {
                self.sync(cond, "cond", line)?;
                self.sync(mutex, "lock", line)?;
            }
            StmtKind::Return(e) => match (e, self.f.returns_value) {
                (Some(e), true) => self.expr(e, line)?,
                (None, false) => {}
                (Some(_), false) => {
                    return Err(sem(line, format!("void function `{}` returns a value", self.f.name)))
                }
                (None, true) => {
                    return Err(sem(line, format!("`{}` must return a value", self.f.name)))
                }
            },
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                self.expr(cond, line)?;
                self.block(then_body)?;
                self.block(else_body)?;
            }
            StmtKind::While { cond, body } => {
                self.expr(cond, line)?;
                self.block(body)?;
            }
            StmtKind::For {
                cond, update, body, ..
            } => {
                if let Some(c) = cond {
                    self.expr(c, line)?;
                }
                if let Some(u) = update {
                    self.stmt(u)?;
                }
                self.block(body)?;
            }
        }
        Ok(())
    }

    fn sync(&self, name: &str, want: &str, line: u32) -> Result<(), ParseError> {
        let Some(d) = self.p.sync(name) else {
            return Err(ParseError::Undeclared {
                name: name.to_string(),
                line,
            });
        };
        let ok = matches!(
            (&d.kind, want),
            (SyncKind::Lock, "lock") | (SyncKind::Cond, "cond") | (SyncKind::Barrier(_), "barrier")
        );
        if !ok {
            return Err(sem(line, format!("`{name}` is not a {want}")));
        }
        Ok(())
    }

    fn call(&self, func: &str, args: &[Expr], wants_value: bool, line: u32) -> Result<(), ParseError> {
        let Some(g) = self.p.function(func) else {
            return Err(ParseError::Undeclared {
                name: func.to_string(),
                line,
            });
        };
        if func == self.p.main {
            return Err(sem(line, "`main` cannot be called"));
        }
        if g.params.len() != args.len() {
            return Err(sem(
                line,
                format!("`{func}` takes {} arguments, {} given", g.params.len(), args.len()),
            ));
        }
        if wants_value && !g.returns_value {
            return Err(sem(line, format!("`{func}` does not return a value")));
        }
        args.iter().try_for_each(|a| self.expr(a, line))
    }

    fn spawn(&self, func: &str, arg: &Expr, line: u32) -> Result<(), ParseError> {
        let Some(g) = self.p.function(func) else {
            return Err(ParseError::Undeclared {
                name: func.to_string(),
                line,
            });
        };
        if func == self.p.main {
            return Err(sem(line, "`main` cannot be spawned"));
        }
        if g.params.len() != 1 || g.returns_value {
            return Err(sem(
                line,
                format!("thread entry `{func}` must be `void {func}(int id)`"),
            ));
        }
        self.expr(arg, line)
    }

    fn lvalue(&self, lv: &LValue, line: u32) -> Result<(), ParseError> {
        self.access(&lv.name, lv.index.is_some(), line)?;
        if let Some(i) = &lv.index {
            self.expr(i, line)?;
        }
        Ok(())
    }

    fn access(&self, name: &str, indexed: bool, line: u32) -> Result<(), ParseError> {
        if self.scope.contains(name) {
            if indexed {
                return Err(ParseError::IndexOnScalar {
                    name: name.to_string(),
                    line,
                });
            }
            return Ok(());
        }
        match self.p.global(name) {
            Some(g) if g.is_array() && !indexed => {
                Err(sem(line, format!("array `{name}` used without a subscript")))
            }
            Some(g) if !g.is_array() && indexed => Err(ParseError::IndexOnScalar {
                name: name.to_string(),
                line,
            }),
            Some(_) => Ok(()),
            None => Err(ParseError::Undeclared {
                name: name.to_string(),
                line,
            }),
        }
    }

    fn expr(&self, e: &Expr, line: u32) -> Result<(), ParseError> {
        match e {
            Expr::Int(_) | Expr::NThreads => Ok(()),
            Expr::Var(v) => self.access(v, false, line),
            Expr::Index(a, sub) => {
                self.access(a, true, line)?;
                self.expr(sub, line)
            }
            Expr::Unary(_, x) => self.expr(x, line),
            Expr::Binary(_, l, r) => {
                self.expr(l, line)?;
                self.expr(r, line)
            }
        }
    }
}
