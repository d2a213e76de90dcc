//! Induction-variable substitution for array subscripts.
//!
//! Recognized shape, inside one statement list:
//!
//! ```text
//! v = e0;                 // sole other assignment of v; e0 is loop-stable
//! ...
//! for (i = lo; cond; i = i + 1) {
//!     ... a[.. v ..] ...  // rewritten to e0 + c*(i - lo)
//!     v = v + c;          // top level of the body, c loop-stable
//!     ... a[.. v ..] ...  // rewritten to e0 + c*(i - lo + 1)
//! }
//! ```
//!
//! Only subscripts are rewritten; the rewrite is meant for analysis and does
//! not change what the program computes.

use super::ast::*;

pub fn induction_variable_substitution(f: &Function) -> Function {
    let mut out = f.clone();
    let body = std::mem::take(&mut out.body);
    out.body = rewrite_list(f, body);
    out
}

fn rewrite_list(f: &Function, mut body: Vec<Stmt>) -> Vec<Stmt> {
    for k in 0..body.len() {
        if matches!(body[k].kind, StmtKind::For { .. }) {
            let (before, rest) = body.split_at_mut(k);
            rewrite_loop(f, before, &mut rest[0]);
        }
    }
    for s in &mut body {
        match &mut s.kind {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                *then_body = rewrite_list(f, std::mem::take(then_body));
                *else_body = rewrite_list(f, std::mem::take(else_body));
            }
            StmtKind::While { body, .. } | StmtKind::For { body, .. } => {
                *body = rewrite_list(f, std::mem::take(body));
            }
            _ => {}
        }
    }
    body
}

/// Names an expression may mention and still be invariant over the whole
/// function: parameters that are never assigned.
fn stable(f: &Function, e: &Expr) -> bool {
    let mut ok = true;
    match e {
        Expr::Index(..) => return false,
        Expr::Unary(_, x) => return stable(f, x),
        Expr::Binary(_, l, r) => return stable(f, l) && stable(f, r),
        _ => {}
    }
    e.visit_names(&mut |n| {
        ok &= f.params.iter().any(|p| p == n) && f.assignment_count(n) == 0;
    });
    ok
}

fn counter_of(f: &Function, s: &Stmt) -> Option<(String, Expr)> {
    let StmtKind::For {
        init: Some(init),
        update: Some(update),
        body,
        ..
    } = &s.kind
    else {
        return None;
    };
    let (i, lo) = match &init.kind {
        StmtKind::Assign {
            target: LValue { name, index: None },
            value,
        } => (name, value),
        StmtKind::Local {
            name,
            init: Some(LocalInit::Expr(value)),
        } => (name, value),
        _ => return None,
    };
    if !f.params.contains(i) && !f.locals().contains(i) {
        return None;
    }
    let step_ok = matches!(
        &update.kind,
        StmtKind::Assign { target: LValue { name, index: None }, value: Expr::Binary(BinOp::Add, l, r) }
            if name == i && **l == Expr::Var(i.clone()) && **r == Expr::Int(1)
    );
    if !step_ok {
        return None;
    }
    let mut assigned_in_body = Vec::new();
    for b in body {
        b.walk(&mut |s| assigned_in_body.extend(s.assigned_name().map(str::to_string)));
    }
    if assigned_in_body.contains(i) {
        return None;
    }
    let mut lo_ok = true;
    lo.visit_names(&mut |n| {
        lo_ok &= (f.params.iter().any(|p| p == n) || f.locals().iter().any(|l| l == n))
            && !assigned_in_body.iter().any(|a| a == n)
            && n != i;
    });
    lo_ok &= !matches!(lo, Expr::Index(..));
    lo_ok.then(|| (i.clone(), lo.clone()))
}

fn rewrite_loop(f: &Function, before: &[Stmt], lp: &mut Stmt) {
    let Some((counter, lo)) = counter_of(f, lp) else {
        return;
    };
    let StmtKind::For { body, .. } = &mut lp.kind else {
        return;
    };
    let mut inductions = Vec::new();
    for (j, s) in body.iter().enumerate() {
        let StmtKind::Assign {
            target: LValue { name: v, index: None },
            value: Expr::Binary(op @ (BinOp::Add | BinOp::Sub), l, c),
        } = &s.kind
        else {
            continue;
        };
        if **l != Expr::Var(v.clone()) || v == &counter || c.mentions(v) || !stable(f, c) {
            continue;
        }
        if f.params.contains(v) || f.assignment_count(v) != 2 {
            continue;
        }
        let init = before.iter().find_map(|b| match &b.kind {
            StmtKind::Local {
                name,
                init: Some(LocalInit::Expr(e)),
            } if name == v => Some(e.clone()),
            StmtKind::Assign {
                target: LValue { name, index: None },
                value,
            } if name == v => Some(value.clone()),
            _ => None,
        });
        let Some(e0) = init.filter(|e| stable(f, e)) else {
            continue;
        };
        let c = if *op == BinOp::Sub {
            match **c {
                Expr::Int(k) => Expr::Int(-k),
                _ => Expr::Unary(UnOp::Neg, c.clone()),
            }
        } else {
            (**c).clone()
        };
        inductions.push((j, v.clone(), e0, c));
    }
    for (j, v, e0, c) in inductions {
        for (t, s) in body.iter_mut().enumerate() {
            if t == j {
                continue;
            }
            let closed = closed_form(&e0, &c, &counter, &lo, t > j);
            s.walk_mut(&mut |st| {
                st.exprs_mut(&mut |e| *e = in_subscripts(e, &v, &closed));
                if let Some(LValue { index: Some(i), .. }) = st.target_mut() {
                    *i = i.map_vars(&mut |n| (n == v).then(|| closed.clone()));
                }
            });
        }
    }
}

/// `e0 + c*(i - lo [+ 1])`, with trivial terms folded away.
fn closed_form(e0: &Expr, c: &Expr, i: &str, lo: &Expr, after: bool) -> Expr {
    let mut iters = Expr::var(i);
    if *lo != Expr::Int(0) {
        iters = Expr::bin(BinOp::Sub, iters, lo.clone());
    }
    if after {
        iters = Expr::bin(BinOp::Add, iters, Expr::Int(1));
    }
    let scaled = match c {
        Expr::Int(1) => iters,
        _ => Expr::bin(BinOp::Mul, c.clone(), iters),
    };
    Expr::bin(BinOp::Add, scaled, e0.clone())
}

fn in_subscripts(e: &Expr, v: &str, closed: &Expr) -> Expr {
    match e {
        Expr::Index(a, sub) => {
            let sub = sub.map_vars(&mut |n| (n == v).then(|| closed.clone()));
            Expr::Index(a.clone(), Box::new(in_subscripts(&sub, v, closed)))
        }
        Expr::Unary(op, x) => Expr::Unary(*op, Box::new(in_subscripts(x, v, closed))),
        Expr::Binary(op, l, r) => Expr::Binary(
            *op,
            Box::new(in_subscripts(l, v, closed)),
            Box::new(in_subscripts(r, v, closed)),
        ),
        _ => e.clone(),
    }
}
