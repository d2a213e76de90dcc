//! Shared-memory accesses of a statement in evaluation order.
//!
//! The analysis, the instrumenter and the interpreter all agree on this
//! order, so an access is identified by its statement site plus its `slot`,
//! the position among the statement's shared accesses:
//!
//! * expressions evaluate left to right; `a[e]` reads `e` before `a`;
//! * an assignment evaluates the target subscript, then the right-hand side,
//!   then writes;
//! * a call or spawn evaluates its arguments, performs the call, then
//!   evaluates the target subscript and writes the result;
//! * `if`/`while`/`for` statements contribute their condition.

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedAccess {
    pub lvalue: String,
    pub kind: AccessKind,
    /// Subscript for array elements.
    pub subscript: Option<Expr>,
    pub slot: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalStep {
    Access(SharedAccess),
    /// Control transfers into `callee`; later steps run after it returns.
    Call(String),
}

pub fn eval_steps(p: &Program, s: &Stmt) -> Vec<EvalStep> {
    let mut c = Collector {
        p,
        steps: Vec::new(),
        slot: 0,
    };
    c.stmt(s);
    c.steps
}

/// Only the accesses of `eval_steps`.
pub fn shared_accesses(p: &Program, s: &Stmt) -> Vec<SharedAccess> {
    eval_steps(p, s)
        .into_iter()
        .filter_map(|e| match e {
            EvalStep::Access(a) => Some(a),
            EvalStep::Call(_) => None,
        })
        .collect()
}

struct Collector<'a> {
    p: &'a Program,
    steps: Vec<EvalStep>,
    slot: u32,
}

impl Collector<'_> {
    fn push(&mut self, lvalue: &str, kind: AccessKind, subscript: Option<Expr>) {
        if !self.p.is_global(lvalue) {
            return;
        }
        self.steps.push(EvalStep::Access(SharedAccess {
            lvalue: lvalue.to_string(),
            kind,
            subscript,
            slot: self.slot,
        }));
        self.slot += 1;
    }

    fn expr(&mut self, e: &Expr) {
        match e {
            Expr::Int(_) | Expr::NThreads => {}
            Expr::Var(v) => self.push(v, AccessKind::Read, None),
            Expr::Index(a, sub) => {
                self.expr(sub);
                self.push(a, AccessKind::Read, Some((**sub).clone()));
            }
            Expr::Unary(_, x) => self.expr(x),
            Expr::Binary(_, l, r) => {
                self.expr(l);
                self.expr(r);
            }
        }
    }

    fn write(&mut self, lv: &LValue) {
        self.push(&lv.name, AccessKind::Write, lv.index.clone());
    }

    fn target(&mut self, t: &Option<LValue>) {
        if let Some(lv) = t {
            if let Some(i) = &lv.index {
                self.expr(i);
            }
            self.write(lv);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Local { init, .. } => match init {
                None => {}
                Some(LocalInit::Expr(e)) | Some(LocalInit::Spawn { arg: e, .. }) => self.expr(e),
                Some(LocalInit::Call { func, args }) => {
                    args.iter().for_each(|a| self.expr(a));
                    self.steps.push(EvalStep::Call(func.clone()));
                }
            },
            StmtKind::Assign { target, value } => {
                if let Some(i) = &target.index {
                    self.expr(i);
                }
                self.expr(value);
                self.write(target);
            }
            StmtKind::Call { target, func, args } => {
                args.iter().for_each(|a| self.expr(a));
                self.steps.push(EvalStep::Call(func.clone()));
                self.target(target);
            }
            StmtKind::Spawn { target, arg, .. } => {
                self.expr(arg);
                self.target(target);
            }
            StmtKind::Join(e) | StmtKind::Print(e) | StmtKind::Return(Some(e)) => self.expr(e),
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => self.expr(cond),
            StmtKind::For { cond: Some(c), .. } => self.expr(c),
            StmtKind::For { cond: None, .. }
            | StmtKind::Return(None)
            | StmtKind::Lock(_)
            | StmtKind::Unlock(_)
            | StmtKind::Barrier(_)
            | StmtKind::Signal(_)
            | StmtKind::Broadcast(_)
            | StmtKind::Wait { .. } => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    fn steps_of(src: &str) -> Vec<(String, AccessKind)> {
        let p = parse_program(src).unwrap();
        let f = p.function("main").unwrap();
        shared_accesses(&p, f.body.last().unwrap())
            .into_iter()
            .map(|a| (a.lvalue, a.kind))
            .collect()
    }

    #[test]
    fn increment_reads_then_writes() {
        let s = steps_of("int x; void main(){ x = x + 1; }");
        assert_eq!(
            s,
            vec![("x".into(), AccessKind::Read), ("x".into(), AccessKind::Write)]
        );
    }

    #[test]
    fn subscript_before_array_and_target_first() {
        let s = steps_of("int a[4]; int i; int y; void main(){ a[i] = y + a[i]; }");
        let names: Vec<&str> = s.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, vec!["i", "y", "i", "a", "a"]);
        assert_eq!(s[4].1, AccessKind::Write);
    }

    #[test]
    fn locals_are_private() {
        let s = steps_of("int x; void main(){ int t = 3; t = t + x; }");
        assert_eq!(s, vec![("x".into(), AccessKind::Read)]);
    }

    #[test]
    fn call_result_written_after_call() {
        let p = parse_program("int x; int f(){ return x; } void main(){ x = f(); }").unwrap();
        let f = p.function("main").unwrap();
        let steps = eval_steps(&p, &f.body[0]);
        assert!(matches!(steps[0], EvalStep::Call(_)));
        assert!(matches!(&steps[1], EvalStep::Access(a) if a.kind == AccessKind::Write && a.slot == 0));
    }
}
