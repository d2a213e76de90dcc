//! Canonical pretty-printer. `parse(print(p))` reproduces `p` up to source
//! lines, and printing is a fixpoint after one round.

use std::fmt::Write;

use super::ast::*;

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for g in &p.globals {
        let _ = write!(out, "int {}", g.name);
        for d in &g.dims {
            let _ = write!(out, "[{d}]");
        }
        if g.init != 0 {
            let _ = write!(out, " = {}", g.init);
        }
        out.push_str(";\n");
    }
    for s in &p.syncs {
        match &s.kind {
            SyncKind::Lock => {
                let _ = writeln!(out, "lock {};", s.name);
            }
            SyncKind::Cond => {
                let _ = writeln!(out, "cond {};", s.name);
            }
            SyncKind::Barrier(c) => {
                let _ = writeln!(out, "barrier {}({});", s.name, print_expr(c));
            }
        }
    }
    for f in &p.functions {
        out.push('\n');
        let ret = if f.returns_value { "int" } else { "void" };
        let params: Vec<String> = f.params.iter().map(|p| format!("int {p}")).collect();
        let _ = writeln!(out, "{ret} {}({}) {{", f.name, params.join(", "));
        let mut pr = Printer {
            out: &mut out,
            next: 0,
        };
        pr.block(&f.body, 1);
        out.push_str("}\n");
    }
    out
}

struct Printer<'a> {
    out: &'a mut String,
    /// Mirrors the parser's sequential ordinal counter.
    next: u32,
}

impl Printer<'_> {
    fn indent(&mut self, depth: usize) {
        for _ in 0..depth {
            self.out.push_str("    ");
        }
    }

    /// Annotation prefix for a statement whose site is allocated now.
    fn annot(&mut self, s: &Stmt) -> String {
        let mut a = String::new();
        if s.site.ordinal == self.next {
            self.next += 1;
        } else {
            let _ = write!(a, "@site({}) ", s.site.ordinal);
        }
        for t in &s.traces {
            let _ = write!(a, "@trace({t}) ");
        }
        a
    }

    fn block(&mut self, body: &[Stmt], depth: usize) {
        for s in body {
            self.stmt(s, depth);
        }
    }

    fn stmt(&mut self, s: &Stmt, depth: usize) {
        self.indent(depth);
        match &s.kind {
            StmtKind::If { .. } => self.if_chain(s, depth),
            StmtKind::While { cond, body } => {
                let a = self.annot(s);
                let _ = writeln!(self.out, "{a}while ({}) {{", print_expr(cond));
                self.block(body, depth + 1);
                self.indent(depth);
                self.out.push_str("}\n");
            }
            StmtKind::For {
                init,
                cond,
                update,
                body,
            } => {
                // Parser order: init site, then condition, then update.
                let init_text = match init {
                    Some(i) => {
                        let a = self.annot(i);
                        format!("{a}{}", print_simple(i))
                    }
                    None => String::new(),
                };
                let a = self.annot(s);
                let cond_text = cond.as_ref().map(print_expr).unwrap_or_default();
                let update_text = match update {
                    Some(u) => {
                        let a = self.annot(u);
                        format!("{a}{}", print_simple(u))
                    }
                    None => String::new(),
                };
                let _ = writeln!(
                    self.out,
                    "{a}for ({init_text}; {cond_text}; {update_text}) {{"
                );
                self.block(body, depth + 1);
                self.indent(depth);
                self.out.push_str("}\n");
            }
            _ => {
                let a = self.annot(s);
                let _ = writeln!(self.out, "{a}{};", print_simple(s));
            }
        }
    }

    fn if_chain(&mut self, s: &Stmt, depth: usize) {
        let StmtKind::If {
            cond,
            then_body,
            else_body,
        } = &s.kind
        else {
            unreachable!("if_chain on non-if");
        };
        let a = self.annot(s);
        let _ = writeln!(self.out, "{a}if ({}) {{", print_expr(cond));
        self.block(then_body, depth + 1);
        self.indent(depth);
        if else_body.is_empty() {
            self.out.push_str("}\n");
        } else if else_body.len() == 1 && matches!(else_body[0].kind, StmtKind::If { .. }) {
            self.out.push_str("} else ");
            self.if_chain(&else_body[0], depth);
        } else {
            self.out.push_str("} else {\n");
            self.block(else_body, depth + 1);
            self.indent(depth);
            self.out.push_str("}\n");
        }
    }
}

fn lvalue(lv: &LValue) -> String {
    match &lv.index {
        None => lv.name.clone(),
        Some(i) => format!("{}[{}]", lv.name, print_expr(i)),
    }
}

fn args(a: &[Expr]) -> String {
    a.iter().map(print_expr).collect::<Vec<_>>().join(", ")
}

/// Text of a non-compound statement, without annotations or `;`.
pub fn print_simple(s: &Stmt) -> String {
    match &s.kind {
        StmtKind::Local { name, init } => match init {
            None => format!("int {name}"),
            Some(LocalInit::Expr(e)) => format!("int {name} = {}", print_expr(e)),
            Some(LocalInit::Call { func, args: a }) => {
                format!("int {name} = {func}({})", args(a))
            }
            Some(LocalInit::Spawn { func, arg }) => {
                format!("int {name} = spawn {func}({})", print_expr(arg))
            }
        },
        StmtKind::Assign { target, value } => {
            format!("{} = {}", lvalue(target), print_expr(value))
        }
        StmtKind::Call { target, func, args: a } => match target {
            Some(t) => format!("{} = {func}({})", lvalue(t), args(a)),
            None => format!("{func}({})", args(a)),
        },
        StmtKind::Spawn { target, func, arg } => match target {
            Some(t) => format!("{} = spawn {func}({})", lvalue(t), print_expr(arg)),
            None => format!("spawn {func}({})", print_expr(arg)),
        },
        StmtKind::Join(e) => format!("join({})", print_expr(e)),
        StmtKind::Lock(m) => format!("lock({m})"),
        StmtKind::Unlock(m) => format!("unlock({m})"),
        StmtKind::Barrier(b) => format!("barrier({b})"),
        StmtKind::Signal(c) => format!("signal({c})"),
        StmtKind::Broadcast(c) => format!("broadcast({c})"),
        StmtKind::Wait { cond, mutex } => format!("wait({cond}, {mutex})"),
        StmtKind::Return(None) => "return".to_string(),
        StmtKind::Return(Some(e)) => format!("return {}", print_expr(e)),
        StmtKind::Print(e) => format!("print({})", print_expr(e)),
        StmtKind::If { .. } | StmtKind::While { .. } | StmtKind::For { .. } => {
            unreachable!("compound statement printed as simple")
        }
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    expr_into(e, 0, &mut s);
    s
}

fn expr_into(e: &Expr, min_prec: u8, out: &mut String) {
    match e {
        Expr::Int(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Var(v) => out.push_str(v),
        Expr::NThreads => out.push_str("nthreads"),
        Expr::Index(a, sub) => {
            out.push_str(a);
            out.push('[');
            expr_into(sub, 0, out);
            out.push(']');
        }
        Expr::Unary(op, inner) => {
            out.push(match op {
                UnOp::Neg => '-',
                UnOp::Not => '!',
            });
            // Unary binds tighter than any binary operator.
            let wrap = matches!(**inner, Expr::Binary(..))
                || (*op == UnOp::Neg && matches!(**inner, Expr::Int(_) | Expr::Unary(UnOp::Neg, _)));
            if wrap {
                out.push('(');
                expr_into(inner, 0, out);
                out.push(')');
            } else {
                expr_into(inner, 0, out);
            }
        }
        Expr::Binary(op, l, r) => {
            let prec = op.precedence();
            let wrap = prec < min_prec;
            if wrap {
                out.push('(');
            }
            expr_into(l, prec, out);
            let _ = write!(out, " {} ", op.symbol());
            // Left-associative: the right operand needs strictly tighter binding.
            expr_into(r, prec + 1, out);
            if wrap {
                out.push(')');
            }
        }
    }
}
