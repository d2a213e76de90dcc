//! Symbolic range constraints for array-access statements.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::affine::Affine;
use crate::frontend::{
    build_call_graph, compute_dominators, BinOp, DominatorMap, Expr, Function, LocalInit, Program,
    SiteId, Stmt, StmtKind, UnOp,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Ge => ">=",
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ne => "!=",
        }
    }

    /// Whether `value rel 0` holds.
    pub fn holds(self, value: i128) -> bool {
        match self {
            Relation::Ge => value >= 0,
            Relation::Le => value <= 0,
            Relation::Eq => value == 0,
            Relation::Ne => value != 0,
        }
    }
}

/// `variable relation bound`. Before call-path substitution `variable` is a
/// single local name; substituting an actual argument for a formal can turn
/// it into a general affine term.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RangeConstraint {
    pub variable: Affine,
    pub relation: Relation,
    pub bound: Affine,
}

impl RangeConstraint {
    pub fn new(variable: impl Into<String>, relation: Relation, bound: Affine) -> Self {
        RangeConstraint {
            variable: Affine::var(variable),
            relation,
            bound,
        }
    }

    /// `variable - bound`, to be compared against zero.
    pub fn difference(&self) -> Option<Affine> {
        self.variable.checked_sub(&self.bound)
    }

    pub fn vars(&self) -> BTreeSet<String> {
        self.variable.vars().chain(self.bound.vars()).cloned().collect()
    }

    pub fn map(&self, f: &mut impl FnMut(&Affine) -> Affine) -> RangeConstraint {
        RangeConstraint {
            variable: f(&self.variable),
            relation: self.relation,
            bound: f(&self.bound),
        }
    }

    pub fn holds(&self, env: &BTreeMap<String, i64>) -> Option<bool> {
        let d = self.variable.eval(env)? - self.bound.eval(env)?;
        Some(self.relation.holds(d))
    }
}

impl fmt::Display for RangeConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.variable, self.relation.symbol(), self.bound)
    }
}

/// Per-function facts shared by the local analysis.
struct Facts<'a> {
    f: &'a Function,
    names: BTreeSet<String>,
    doms: DominatorMap,
}

impl<'a> Facts<'a> {
    fn new(f: &'a Function) -> Self {
        let mut names: BTreeSet<String> = f.params.iter().cloned().collect();
        names.extend(f.locals());
        Facts {
            f,
            names,
            doms: compute_dominators(f),
        }
    }

    fn is_local(&self, n: &str) -> bool {
        self.names.contains(n)
    }

    /// Affine form over this function's own (non-global) names only.
    fn local_affine(&self, e: &Expr) -> Option<Affine> {
        Affine::from_expr(e, &mut |n| {
            (n == "nthreads" || self.is_local(n)).then(|| Affine::var(n))
        })
    }

    /// Affine form whose names are local and untouched inside `region`.
    fn frozen_affine(&self, e: &Expr, region: &[&Stmt], except: Option<&str>) -> Option<Affine> {
        let a = self.local_affine(e)?;
        let ok = a
            .vars()
            .all(|v| v == "nthreads" || (Some(v.as_str()) != except && !assigned_in(region, v)));
        ok.then_some(a)
    }
}

fn assigned_in(region: &[&Stmt], name: &str) -> bool {
    let mut hit = false;
    for s in region {
        s.walk(&mut |t| hit |= t.assigned_name() == Some(name));
    }
    hit
}

/// Local range constraints for every statement of `f`, keyed by site.
/// Statements without constraints map to an empty list.
pub fn intraprocedural_range_analysis(f: &Function) -> BTreeMap<SiteId, Vec<RangeConstraint>> {
    let facts = Facts::new(f);
    let mut out = BTreeMap::new();
    walk_list(&facts, &f.body, &mut Vec::new(), &mut out);
    let defs = single_definitions(&facts);
    for (site, cs) in out.iter_mut() {
        for (v, (def_site, e)) in &defs {
            if def_site != site && facts.doms.dominates(def_site, site) {
                cs.push(RangeConstraint::new(v.clone(), Relation::Eq, e.clone()));
            }
        }
        cs.sort();
        cs.dedup();
    }
    out
}

fn walk_list(
    facts: &Facts,
    body: &[Stmt],
    ctx: &mut Vec<RangeConstraint>,
    out: &mut BTreeMap<SiteId, Vec<RangeConstraint>>,
) {
    for s in body {
        walk_stmt(facts, s, ctx, out);
    }
}

fn walk_stmt(
    facts: &Facts,
    s: &Stmt,
    ctx: &mut Vec<RangeConstraint>,
    out: &mut BTreeMap<SiteId, Vec<RangeConstraint>>,
) {
    out.insert(s.site.clone(), ctx.clone());
    let mark = ctx.len();
    match &s.kind {
        StmtKind::If {
            cond,
            then_body,
            else_body,
        } => {
            let region: Vec<&Stmt> = then_body.iter().collect();
            ctx.extend(cond_constraints(facts, cond, false, &region));
            walk_list(facts, then_body, ctx, out);
            ctx.truncate(mark);
            let region: Vec<&Stmt> = else_body.iter().collect();
            ctx.extend(cond_constraints(facts, cond, true, &region));
            walk_list(facts, else_body, ctx, out);
            ctx.truncate(mark);
        }
        StmtKind::While { cond, body } => {
            let region: Vec<&Stmt> = body.iter().collect();
            ctx.extend(cond_constraints(facts, cond, false, &region));
            walk_list(facts, body, ctx, out);
            ctx.truncate(mark);
        }
        StmtKind::For {
            init, update, body, ..
        } => {
            if let Some(i) = init {
                walk_stmt(facts, i, ctx, out);
            }
            ctx.extend(counter_constraints(facts, s));
            if let Some(u) = update {
                walk_stmt(facts, u, ctx, out);
            }
            walk_list(facts, body, ctx, out);
            ctx.truncate(mark);
        }
        _ => {}
    }
}

fn comparison(op: BinOp, negate: bool) -> Option<BinOp> {
    let op = if !negate {
        op
    } else {
        match op {
            BinOp::Lt => BinOp::Ge,
            BinOp::Le => BinOp::Gt,
            BinOp::Gt => BinOp::Le,
            BinOp::Ge => BinOp::Lt,
            BinOp::Eq => BinOp::Ne,
            BinOp::Ne => BinOp::Eq,
            _ => return None,
        }
    };
    op.is_comparison().then_some(op)
}

fn flip(op: BinOp) -> BinOp {
    match op {
        BinOp::Lt => BinOp::Gt,
        BinOp::Le => BinOp::Ge,
        BinOp::Gt => BinOp::Lt,
        BinOp::Ge => BinOp::Le,
        other => other,
    }
}

/// `v op bound` as a constraint with an integer-normalized relation.
fn relate(v: &str, op: BinOp, bound: Affine) -> Option<RangeConstraint> {
    let (rel, b) = match op {
        BinOp::Lt => (Relation::Le, bound.checked_add(&Affine::constant(-1))?),
        BinOp::Le => (Relation::Le, bound),
        BinOp::Gt => (Relation::Ge, bound.checked_add(&Affine::constant(1))?),
        BinOp::Ge => (Relation::Ge, bound),
        BinOp::Eq => (Relation::Eq, bound),
        BinOp::Ne => (Relation::Ne, bound),
        _ => return None,
    };
    Some(RangeConstraint::new(v, rel, b))
}

/// Constraints implied by `cond` (or its negation) that stay true throughout
/// `region`.
fn cond_constraints(facts: &Facts, cond: &Expr, negate: bool, region: &[&Stmt]) -> Vec<RangeConstraint> {
    match cond {
        Expr::Unary(UnOp::Not, x) => cond_constraints(facts, x, !negate, region),
        Expr::Binary(BinOp::And, l, r) if !negate => {
            let mut v = cond_constraints(facts, l, false, region);
            v.extend(cond_constraints(facts, r, false, region));
            v
        }
        Expr::Binary(BinOp::Or, l, r) if negate => {
            let mut v = cond_constraints(facts, l, true, region);
            v.extend(cond_constraints(facts, r, true, region));
            v
        }
        Expr::Binary(op, l, r) => {
            let Some(op) = comparison(*op, negate) else {
                return Vec::new();
            };
            let (Some(la), Some(ra)) = (
                facts.frozen_affine(l, region, None),
                facts.frozen_affine(r, region, None),
            ) else {
                return Vec::new();
            };
            if let Some(v) = la.as_var().filter(|v| *v != "nthreads") {
                relate(v, op, ra).into_iter().collect()
            } else if let Some(v) = ra.as_var().filter(|v| *v != "nthreads") {
                relate(v, flip(op), la).into_iter().collect()
            } else {
                Vec::new()
            }
        }
        _ => Vec::new(),
    }
}

/// Bounds on the counter of a counted `for` loop, valid in its body and
/// update.
fn counter_constraints(facts: &Facts, s: &Stmt) -> Vec<RangeConstraint> {
    let StmtKind::For {
        init: Some(init),
        cond,
        update: Some(update),
        body,
    } = &s.kind
    else {
        return Vec::new();
    };
    let (i, lo) = match &init.kind {
        StmtKind::Assign { target, value } if target.index.is_none() => (&target.name, value),
        StmtKind::Local {
            name,
            init: Some(LocalInit::Expr(e)),
        } => (name, e),
        _ => return Vec::new(),
    };
    if !facts.is_local(i) {
        return Vec::new();
    }
    let step = match &update.kind {
        StmtKind::Assign { target, value } if target.name == *i && target.index.is_none() => {
            match value {
                Expr::Binary(BinOp::Add, a, b) => match (&**a, &**b) {
                    (Expr::Var(v), Expr::Int(c)) | (Expr::Int(c), Expr::Var(v)) if v == i => *c,
                    _ => 0,
                },
                Expr::Binary(BinOp::Sub, a, b) => match (&**a, &**b) {
                    (Expr::Var(v), Expr::Int(c)) if v == i => c.checked_neg().unwrap_or(0),
                    _ => 0,
                },
                _ => 0,
            }
        }
        _ => 0,
    };
    if step == 0 {
        return Vec::new();
    }
    let mut region: Vec<&Stmt> = body.iter().collect();
    if assigned_in(&region, i) {
        return Vec::new();
    }
    region.push(update);
    let mut out = Vec::new();
    let start = facts.frozen_affine(lo, &region, Some(i));
    let limit = cond.as_ref().and_then(|c| match c {
        Expr::Binary(op, l, r) if op.is_comparison() => {
            let (op, other) = match (&**l, &**r) {
                (Expr::Var(v), other) if v == i => (*op, other),
                (other, Expr::Var(v)) if v == i => (flip(*op), other),
                _ => return None,
            };
            let b = facts.frozen_affine(other, &region, Some(i))?;
            Some((op, b))
        }
        _ => None,
    });
    if step > 0 {
        if let Some(lo) = start {
            out.push(RangeConstraint::new(i.clone(), Relation::Ge, lo));
        }
        if let Some((op @ (BinOp::Lt | BinOp::Le), b)) = limit {
            out.extend(relate(i, op, b));
        }
    } else {
        if let Some(hi) = start {
            out.push(RangeConstraint::new(i.clone(), Relation::Le, hi));
        }
        if let Some((op @ (BinOp::Gt | BinOp::Ge), b)) = limit {
            out.extend(relate(i, op, b));
        }
    }
    out
}

/// Locals with exactly one definition whose right-hand side is affine in
/// names that never change: unassigned parameters, `nthreads`, and other
/// such locals defined earlier.
fn single_definitions(facts: &Facts) -> BTreeMap<String, (SiteId, Affine)> {
    let f = facts.f;
    let mut candidates: BTreeMap<String, (SiteId, &Expr)> = BTreeMap::new();
    f.walk(&mut |s| {
        let def = match &s.kind {
            StmtKind::Assign { target, value } if target.index.is_none() => Some((&target.name, value)),
            StmtKind::Local {
                name,
                init: Some(LocalInit::Expr(e)),
            } => Some((name, e)),
            _ => None,
        };
        if let Some((v, e)) = def {
            if !f.params.contains(v) && f.assignment_count(v) == 1 {
                candidates.insert(v.clone(), (s.site.clone(), e));
            }
        }
    });
    let mut done: BTreeMap<String, (SiteId, Affine)> = BTreeMap::new();
    loop {
        let mut progress = false;
        for (v, (site, e)) in &candidates {
            if done.contains_key(v) {
                continue;
            }
            let Some(a) = facts.local_affine(e) else {
                continue;
            };
            let stable = a.vars().all(|n| {
                n == "nthreads"
                    || (f.params.contains(n) && f.assignment_count(n) == 0)
                    || done
                        .get(n)
                        .is_some_and(|(d, _)| facts.doms.dominates(d, site) && d != site)
            });
            if stable {
                done.insert(v.clone(), (site.clone(), a));
                progress = true;
            }
        }
        if !progress {
            return done;
        }
    }
}

/// How a function's names read in terms of thread-level symbols along one
/// call path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scope {
    pub function: String,
    /// Formal parameter to actual argument, already resolved; `None` when
    /// the actual is not affine (the formal then stays an opaque name).
    pub formals: BTreeMap<String, Option<Affine>>,
    pub locals: BTreeSet<String>,
}

impl Scope {
    fn for_function(f: &Function, formals: BTreeMap<String, Option<Affine>>) -> Self {
        let mut locals: BTreeSet<String> = f.locals().into_iter().collect();
        for p in &f.params {
            locals.remove(p);
        }
        Scope {
            function: f.name.clone(),
            formals,
            locals,
        }
    }

    fn name(&self, n: &str) -> Affine {
        if n == "nthreads" {
            return Affine::var(n);
        }
        match self.formals.get(n) {
            Some(Some(a)) => a.clone(),
            Some(None) => Affine::var(format!("{}.{n}", self.function)),
            None if self.locals.contains(n) => Affine::var(format!("{}.{n}", self.function)),
            None => Affine::var(n),
        }
    }

    /// Resolves an expression of this function.
    pub fn resolve(&self, e: &Expr) -> Option<Affine> {
        Affine::from_expr(e, &mut |n| Some(self.name(n)))
    }

    pub fn resolve_affine(&self, a: &Affine) -> Affine {
        let mut out = Affine::constant(a.constant);
        for (v, c) in &a.terms {
            out = out.add(&self.name(v).scale(*c));
        }
        out
    }

    pub fn resolve_constraint(&self, c: &RangeConstraint) -> RangeConstraint {
        c.map(&mut |a| self.resolve_affine(a))
    }
}

/// One call path from a thread entry down to a statement, with the
/// constraints that hold there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathConstraints {
    pub entry: String,
    /// Call sites from the entry down to the statement's function.
    pub calls: Vec<SiteId>,
    pub scope: Scope,
    pub constraints: Vec<RangeConstraint>,
}

pub type LocalConstraints = BTreeMap<String, BTreeMap<SiteId, Vec<RangeConstraint>>>;

pub fn local_constraints(p: &Program) -> LocalConstraints {
    p.functions
        .iter()
        .map(|f| (f.name.clone(), intraprocedural_range_analysis(f)))
        .collect()
}

/// Qualified name of an entry's thread-id formal, e.g. `worker.id`.
pub fn entry_id_name(p: &Program, entry: &str) -> Option<String> {
    let f = p.function(entry)?;
    (entry != p.main && f.params.len() == 1).then(|| format!("{entry}.{}", f.params[0]))
}

/// Global constraint sets per (thread entry, statement), one per call path.
pub fn interprocedural_range_analysis(
    p: &Program,
    locals: &LocalConstraints,
) -> BTreeMap<(String, SiteId), Vec<PathConstraints>> {
    let cg = build_call_graph(p);
    let mut out: BTreeMap<(String, SiteId), Vec<PathConstraints>> = BTreeMap::new();
    for entry in p.thread_entries() {
        let Some(ef) = p.function(&entry) else { continue };
        let mut formals = BTreeMap::new();
        let mut base = Vec::new();
        if let Some(id) = entry_id_name(p, &entry) {
            formals.insert(ef.params[0].clone(), Some(Affine::var(&id)));
            base = id_constraints(p, locals, &entry, &id);
        }
        let scope = Scope::for_function(ef, formals);
        descend(p, &cg, locals, &entry, Vec::new(), scope, base, &mut out);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn descend(
    p: &Program,
    cg: &crate::frontend::CallGraph,
    locals: &LocalConstraints,
    entry: &str,
    calls: Vec<SiteId>,
    scope: Scope,
    inherited: Vec<RangeConstraint>,
    out: &mut BTreeMap<(String, SiteId), Vec<PathConstraints>>,
) {
    let empty = BTreeMap::new();
    let here = locals.get(&scope.function).unwrap_or(&empty);
    for (site, cs) in here {
        let mut constraints = inherited.clone();
        constraints.extend(cs.iter().map(|c| scope.resolve_constraint(c)));
        constraints.sort();
        constraints.dedup();
        out.entry((entry.to_string(), site.clone()))
            .or_default()
            .push(PathConstraints {
                entry: entry.to_string(),
                calls: calls.clone(),
                scope: scope.clone(),
                constraints,
            });
    }
    for edge in cg.callees(&scope.function) {
        let Some(callee) = p.function(&edge.callee) else { continue };
        let formals = callee
            .params
            .iter()
            .zip(&edge.args)
            .map(|(f, a)| (f.clone(), scope.resolve(a)))
            .collect();
        let mut next = inherited.clone();
        if let Some(cs) = here.get(&edge.site) {
            next.extend(cs.iter().map(|c| scope.resolve_constraint(c)));
        }
        let mut path = calls.clone();
        path.push(edge.site.clone());
        let child = Scope::for_function(callee, formals);
        descend(p, cg, locals, entry, path, child, next, out);
    }
}

/// Bounds on an entry's id formal derived from its spawn sites.
fn id_constraints(p: &Program, locals: &LocalConstraints, entry: &str, id: &str) -> Vec<RangeConstraint> {
    let spawns: Vec<_> = p
        .thread_creations()
        .into_iter()
        .filter(|t| t.entry == entry)
        .collect();
    if spawns.is_empty() {
        return Vec::new();
    }
    let mut lo: Option<i128> = None;
    let mut hi: Option<i128> = None;
    let mut all_lo = true;
    let mut all_hi = true;
    for t in &spawns {
        let Some(f) = p.function(&t.creator) else {
            return Vec::new();
        };
        let facts = Facts::new(f);
        let cs = locals
            .get(&t.creator)
            .and_then(|m| m.get(&t.site))
            .cloned()
            .unwrap_or_default();
        let (l, h) = match facts.local_affine(&t.id_arg) {
            Some(a) => constant_interval(&a, &cs),
            None => (None, None),
        };
        match l {
            Some(l) => lo = Some(lo.map_or(l, |x| x.min(l))),
            None => all_lo = false,
        }
        match h {
            Some(h) => hi = Some(hi.map_or(h, |x| x.max(h))),
            None => all_hi = false,
        }
    }
    let mut out = Vec::new();
    if all_lo {
        if let Some(l) = lo.and_then(|l| i64::try_from(l).ok()) {
            out.push(RangeConstraint::new(id, Relation::Ge, Affine::constant(l)));
        }
    }
    if all_hi {
        if let Some(h) = hi.and_then(|h| i64::try_from(h).ok()) {
            out.push(RangeConstraint::new(id, Relation::Le, Affine::constant(h)));
        }
    }
    out
}

/// Interval of `a` using only constant single-variable bounds from `cs`.
fn constant_interval(a: &Affine, cs: &[RangeConstraint]) -> (Option<i128>, Option<i128>) {
    let mut lo = Some(a.constant as i128);
    let mut hi = Some(a.constant as i128);
    for (v, c) in &a.terms {
        let (mut vl, mut vh) = (None::<i128>, None::<i128>);
        for k in cs {
            if k.variable.as_var() != Some(v) || !k.bound.is_constant() {
                continue;
            }
            let b = k.bound.constant as i128;
            match k.relation {
                Relation::Ge => vl = Some(vl.map_or(b, |x| x.max(b))),
                Relation::Le => vh = Some(vh.map_or(b, |x| x.min(b))),
                Relation::Eq => {
                    vl = Some(b);
                    vh = Some(b);
                }
                Relation::Ne => {}
            }
        }
        let c = *c as i128;
        let (tl, th) = if c > 0 {
            (vl.map(|x| x * c), vh.map(|x| x * c))
        } else {
            (vh.map(|x| x * c), vl.map(|x| x * c))
        };
        lo = lo.zip(tl).map(|(x, y)| x + y);
        hi = hi.zip(th).map(|(x, y)| x + y);
    }
    (lo, hi)
}

/// Whether `entry` can run as several dynamic instances that always receive
/// distinct id arguments: every spawn happens in main, and either two or
/// more spawns sit outside loops with pairwise distinct constant arguments,
/// or there is a
/// single spawn whose only enclosing loop is a counted `for` and whose
/// argument is a non-constant affine function of that counter.
pub fn ids_distinct(p: &Program, entry: &str) -> bool {
    let spawns: Vec<_> = p
        .thread_creations()
        .into_iter()
        .filter(|t| t.entry == entry)
        .collect();
    if spawns.is_empty() || spawns.iter().any(|t| t.creator != p.main) {
        return false;
    }
    let Some(main) = p.function(&p.main) else {
        return false;
    };
    let facts = Facts::new(main);
    let loops: Vec<Vec<&Stmt>> = spawns.iter().map(|t| enclosing_loops(main, &t.site)).collect();
    if loops.iter().all(|l| l.is_empty()) {
        // one instance only: its accesses never meet another instance
        if spawns.len() < 2 {
            return false;
        }
        let mut seen = BTreeSet::new();
        return spawns.iter().all(|t| match facts.local_affine(&t.id_arg) {
            Some(a) if a.is_constant() => seen.insert(a.constant),
            _ => false,
        });
    }
    if spawns.len() != 1 || loops[0].len() != 1 {
        return false;
    }
    let l = loops[0][0];
    let counter = counter_constraints(&facts, l);
    let Some(i) = counter.first().and_then(|c| c.variable.as_var().map(str::to_string)) else {
        return false;
    };
    match facts.local_affine(&spawns[0].id_arg) {
        Some(a) => a.coef(&i) != 0 && a.vars().all(|v| *v == i),
        None => false,
    }
}

fn enclosing_loops<'a>(f: &'a Function, site: &SiteId) -> Vec<&'a Stmt> {
    fn go<'a>(body: &'a [Stmt], site: &SiteId, stack: &mut Vec<&'a Stmt>) -> Option<Vec<&'a Stmt>> {
        for s in body {
            if &s.site == site {
                return Some(stack.clone());
            }
            let is_loop = matches!(s.kind, StmtKind::While { .. } | StmtKind::For { .. });
            if is_loop {
                stack.push(s);
            }
            let found = match &s.kind {
                StmtKind::If {
                    then_body,
                    else_body,
                    ..
                } => go(then_body, site, stack).or_else(|| go(else_body, site, stack)),
                StmtKind::While { body, .. } => go(body, site, stack),
                StmtKind::For {
                    init, update, body, ..
                } => {
                    if init.as_ref().is_some_and(|i| &i.site == site)
                        || update.as_ref().is_some_and(|u| &u.site == site)
                    {
                        Some(stack.clone())
                    } else {
                        go(body, site, stack)
                    }
                }
                _ => None,
            };
            if is_loop {
                stack.pop();
            }
            if found.is_some() {
                return found;
            }
        }
        None
    }
    go(&f.body, site, &mut Vec::new()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    fn strings(cs: &[RangeConstraint]) -> Vec<String> {
        cs.iter().map(|c| c.to_string()).collect()
    }

    fn site_of(f: &Function, ordinal: u32) -> SiteId {
        f.sites().into_iter().find(|s| s.ordinal == ordinal).unwrap()
    }

    #[test]
    fn for_loop_bounds() {
        let p = parse_program(
            "int a[10];\nvoid main() { int i; for (i = 0; i < 10; i = i + 1) { a[i] = 1; } }",
        )
        .unwrap();
        let f = p.function("main").unwrap();
        let m = intraprocedural_range_analysis(f);
        let body = f.sites().into_iter().last().unwrap();
        assert_eq!(strings(&m[&body]), vec!["i >= 0", "i <= 9"]);
    }

    #[test]
    fn decreasing_loop_and_conditions() {
        let p = parse_program(
            "int a[10];\nvoid main() { int i; int k; k = 3;\n for (i = 9; i >= 0; i = i - 1) { if (i != k && i < 8) { a[i] = 1; } else { a[i] = 2; } } }",
        )
        .unwrap();
        let f = p.function("main").unwrap();
        let m = intraprocedural_range_analysis(f);
        let sites = f.sites();
        let then_site = &sites[sites.len() - 2];
        let else_site = &sites[sites.len() - 1];
        assert_eq!(
            strings(&m[then_site]),
            vec!["i >= 0", "i <= 7", "i <= 9", "i != k", "k = 3"]
        );
        // the else branch of a conjunction yields nothing from the condition
        assert_eq!(strings(&m[else_site]), vec!["i >= 0", "i <= 9", "k = 3"]);
    }

    #[test]
    fn opaque_while_gives_nothing() {
        let p = parse_program(
            "int a[10];\nint p() { return a[0]; }\nvoid main() { int i; int c; i = 0; c = p(); while (c) { a[i] = 1; i = i + 1; c = p(); } }",
        )
        .unwrap();
        let f = p.function("main").unwrap();
        let m = intraprocedural_range_analysis(f);
        let w = f
            .sites()
            .into_iter()
            .find(|s| matches!(f.find_stmt(s).unwrap().kind, StmtKind::Assign { ref target, .. } if target.index.is_some()))
            .unwrap();
        assert!(m[&w].iter().all(|c| !c.vars().contains("i")));
    }

    #[test]
    fn assigned_bound_is_dropped() {
        let p = parse_program(
            "int a[10];\nvoid main() { int i; int n; n = 5; for (i = 0; i < n; i = i + 1) { a[i] = 1; n = n - 1; } }",
        )
        .unwrap();
        let f = p.function("main").unwrap();
        let m = intraprocedural_range_analysis(f);
        let s = site_of(f, f.max_ordinal() - 1);
        assert_eq!(strings(&m[&s]), vec!["i >= 0"]);
    }

    #[test]
    fn formals_substituted_per_call_path() {
        let src = "int a[100];\n\
                   void worker(int myid) { int step; step = myid; a[step] = 1; }\n\
                   void t(int id) { worker(5); worker(7); }\n\
                   void main() { spawn t(0); }";
        let p = parse_program(src).unwrap();
        let locals = local_constraints(&p);
        let g = interprocedural_range_analysis(&p, &locals);
        let w = p.function("worker").unwrap();
        let write = site_of(w, 2);
        let sets: Vec<Vec<String>> = g[&("t".to_string(), write)]
            .iter()
            .map(|pc| strings(&pc.constraints))
            .collect();
        assert_eq!(
            sets,
            vec![
                vec!["t.id >= 0", "t.id <= 0", "worker.step = 5"],
                vec!["t.id >= 0", "t.id <= 0", "worker.step = 7"]
            ]
        );
    }

    #[test]
    fn spawn_loop_ids() {
        let src = "int a[100];\n\
                   void w(int id) { a[id] = 1; }\n\
                   void main() { int t; for (t = 0; t < nthreads; t = t + 1) { spawn w(t); } }";
        let p = parse_program(src).unwrap();
        assert!(ids_distinct(&p, "w"));
        let locals = local_constraints(&p);
        let g = interprocedural_range_analysis(&p, &locals);
        let site = p.function("w").unwrap().sites()[0].clone();
        assert_eq!(strings(&g[&("w".to_string(), site)][0].constraints), vec!["w.id >= 0"]);

        let twice = "int a[100];\nvoid w(int id) { a[id] = 1; }\nvoid main() { spawn w(0); spawn w(0); }";
        assert!(!ids_distinct(&parse_program(twice).unwrap(), "w"));
        let pair = "int a[100];\nvoid w(int id) { a[id] = 1; }\nvoid main() { spawn w(0); spawn w(1); }";
        assert!(ids_distinct(&parse_program(pair).unwrap(), "w"));
        let nested = "int a[100];\nvoid w(int id) { a[id] = 1; }\nvoid main() { int r; int t; for (r = 0; r < 2; r = r + 1) { for (t = 0; t < 2; t = t + 1) { spawn w(t); } } }";
        assert!(!ids_distinct(&parse_program(nested).unwrap(), "w"));
    }
}
