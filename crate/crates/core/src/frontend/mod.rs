//! MTC front end: parsing, validation, control-flow and call graphs,
//! dominators and induction-variable substitution.

pub mod access;
pub mod ast;
pub mod callgraph;
pub mod cfg;
pub mod dominators;
pub mod ivs;
mod lexer;
mod parser;
pub mod printer;
mod validate;

use std::fmt::Write;

use thiserror::Error;

pub use access::{eval_steps, shared_accesses, EvalStep, SharedAccess};
pub use ast::*;
pub use callgraph::{CallEdge, CallGraph};
pub use cfg::{Cfg, CfgNode, NodeOp};
pub use dominators::{compute_dominators, DominatorMap};
pub use ivs::induction_variable_substitution;
pub use printer::{print_expr, print_program};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: expected {expected}, found {found}")]
    Syntax {
        line: u32,
        col: u32,
        expected: String,
        found: String,
    },
    #[error("line {line}: undeclared identifier `{name}`")]
    Undeclared { name: String, line: u32 },
    #[error("recursive call cycle: {}", cycle.join(" -> "))]
    Recursion { cycle: Vec<String> },
    #[error("line {line}: `{name}` is not an array and cannot be indexed")]
    IndexOnScalar { name: String, line: u32 },
    #[error("line {line}: {msg}")]
    Semantic { line: u32, msg: String },
}

/// Parses and validates MTC (or iMTC) source.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let p = parser::parse(src)?;
    validate::validate(&p)?;
    for f in &p.functions {
        let cfg = Cfg::build(f);
        let live = cfg.reachable();
        if let Some(n) = (0..cfg.nodes.len()).find(|&n| !live[n] && cfg.nodes[n].site.is_some()) {
            let line = cfg.nodes[n].site.as_ref().map_or(f.line, |s| s.line);
            return Err(ParseError::Semantic {
                line,
                msg: format!("unreachable statement in `{}`", f.name),
            });
        }
    }
    Ok(p)
}

pub fn build_call_graph(p: &Program) -> CallGraph {
    CallGraph::build(p)
}

/// Deterministic tree rendering of the syntax tree with statement sites.
pub fn dump_ast(p: &Program) -> String {
    fn stmts(out: &mut String, body: &[Stmt], depth: usize) {
        for s in body {
            stmt(out, s, depth);
        }
    }
    fn head(out: &mut String, s: &Stmt, depth: usize, text: &str) {
        let pad = "  ".repeat(depth);
        let traces = if s.traces.is_empty() {
            String::new()
        } else {
            format!(" traces={:?}", s.traces)
        };
        let _ = writeln!(out, "{pad}s{} line {}{traces}: {text}", s.site.ordinal, s.site.line);
    }
    fn stmt(out: &mut String, s: &Stmt, depth: usize) {
        match &s.kind {
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                head(out, s, depth, &format!("if {}", print_expr(cond)));
                stmts(out, then_body, depth + 1);
                if !else_body.is_empty() {
                    let _ = writeln!(out, "{}else", "  ".repeat(depth));
                    stmts(out, else_body, depth + 1);
                }
            }
            StmtKind::While { cond, body } => {
                head(out, s, depth, &format!("while {}", print_expr(cond)));
                stmts(out, body, depth + 1);
            }
            StmtKind::For {
                init,
                cond,
                update,
                body,
            } => {
                let c = cond.as_ref().map_or("<none>".to_string(), print_expr);
                head(out, s, depth, &format!("for {c}"));
                if let Some(i) = init {
                    let _ = writeln!(out, "{}init:", "  ".repeat(depth + 1));
                    stmt(out, i, depth + 2);
                }
                if let Some(u) = update {
                    let _ = writeln!(out, "{}update:", "  ".repeat(depth + 1));
                    stmt(out, u, depth + 2);
                }
                stmts(out, body, depth + 1);
            }
            _ => head(out, s, depth, &printer::print_simple(s)),
        }
    }

    let mut out = String::new();
    for g in &p.globals {
        let _ = writeln!(out, "global {} dims={:?} init={}", g.name, g.dims, g.init);
    }
    for s in &p.syncs {
        let kind = match &s.kind {
            SyncKind::Lock => "lock".to_string(),
            SyncKind::Cond => "cond".to_string(),
            SyncKind::Barrier(c) => format!("barrier({})", print_expr(c)),
        };
        let _ = writeln!(out, "sync {} {kind}", s.name);
    }
    for t in p.thread_creations() {
        let _ = writeln!(
            out,
            "thread {} creates {}({}) at s{}",
            t.creator,
            t.entry,
            print_expr(&t.id_arg),
            t.site.ordinal
        );
    }
    for f in &p.functions {
        let ret = if f.returns_value { "int" } else { "void" };
        let _ = writeln!(out, "function {ret} {}({})", f.name, f.params.join(", "));
        stmts(&mut out, &f.body, 1);
    }
    out
}

pub fn dump_cfg(p: &Program) -> String {
    p.functions.iter().map(|f| Cfg::build(f).render()).collect()
}

pub fn dump_dominators(p: &Program) -> String {
    p.functions
        .iter()
        .map(|f| compute_dominators(f).render())
        .collect()
}

pub fn dump_callgraph(p: &Program) -> String {
    CallGraph::build(p).render()
}
