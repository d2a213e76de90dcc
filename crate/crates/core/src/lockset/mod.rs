//! Relative-lockset race detection.
//!
//! Each function is summarized once, callees first, by a forward dataflow
//! over its CFG. Two lattices run side by side: the must-lockset `(L+, L-)`
//! that decides warnings, and a may-held set used only when inserting locks.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{
    eval_steps, print_expr, AccessKind, CallGraph, Cfg, EvalStep, Expr, Function, NodeOp, Program,
    SiteId, Stmt, StmtKind,
};

pub use report::{AccessKey, Counts, RaceReport, Warning, WarningAccess};

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelativeLockset {
    pub positive: BTreeSet<String>,
    pub negative: BTreeSet<String>,
}

impl RelativeLockset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn acquire(&mut self, m: &str) {
        self.positive.insert(m.to_string());
        self.negative.remove(m);
    }

    pub fn release(&mut self, m: &str) {
        self.negative.insert(m.to_string());
        self.positive.remove(m);
    }

    /// The lockset after running code whose net effect is `effect`:
    /// `L+ = (L+ \ E-) ∪ E+`, `L- = (L- ∪ E-) \ E+`.
    pub fn then(&self, effect: &RelativeLockset) -> RelativeLockset {
        let positive = self
            .positive
            .difference(&effect.negative)
            .chain(effect.positive.iter())
            .cloned()
            .collect();
        let negative = self
            .negative
            .union(&effect.negative)
            .filter(|m| !effect.positive.contains(*m))
            .cloned()
            .collect();
        RelativeLockset { positive, negative }
    }

    /// Must-join: held on all paths, released on some path.
    pub fn join(&self, other: &RelativeLockset) -> RelativeLockset {
        RelativeLockset {
            positive: self.positive.intersection(&other.positive).cloned().collect(),
            negative: self.negative.union(&other.negative).cloned().collect(),
        }
    }

    /// May-join: possibly held on some path, released on all paths.
    pub fn join_may(&self, other: &RelativeLockset) -> RelativeLockset {
        RelativeLockset {
            positive: self.positive.union(&other.positive).cloned().collect(),
            negative: self.negative.intersection(&other.negative).cloned().collect(),
        }
    }

    pub fn is_disjoint(&self) -> bool {
        self.positive.is_disjoint(&self.negative)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
struct Flow {
    must: RelativeLockset,
    may: RelativeLockset,
}

impl Flow {
    fn then(&self, must: &RelativeLockset, may: &RelativeLockset) -> Flow {
        Flow {
            must: self.must.then(must),
            may: self.may.then(may),
        }
    }

    fn join(&self, o: &Flow) -> Flow {
        Flow {
            must: self.must.join(&o.must),
            may: self.may.join_may(&o.may),
        }
    }

    fn acquire(&mut self, m: &str) {
        self.must.acquire(m);
        self.may.acquire(m);
    }

    fn release(&mut self, m: &str) {
        self.must.release(m);
        self.may.release(m);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardedAccess {
    pub lvalue: String,
    pub kind: AccessKind,
    /// Must-lockset relative to the summarized function's entry.
    pub lockset: RelativeLockset,
    /// May-held locks, in the same relative form.
    pub may: RelativeLockset,
    pub site: SiteId,
    pub slot: u32,
    pub subscript: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardedSpawn {
    pub site: SiteId,
    pub entry: String,
    pub lockset: RelativeLockset,
}

#[derive(Debug, Clone, Default)]
pub struct FunctionSummary {
    pub name: String,
    pub exit_lockset: RelativeLockset,
    pub exit_may: RelativeLockset,
    pub accesses: Vec<GuardedAccess>,
    pub spawns: Vec<GuardedSpawn>,
}

struct Collect<'a> {
    accesses: &'a mut Vec<GuardedAccess>,
    spawns: &'a mut Vec<GuardedSpawn>,
    seen: BTreeSet<(SiteId, u32, RelativeLockset, RelativeLockset)>,
}

impl Collect<'_> {
    fn access(&mut self, a: GuardedAccess) {
        if self
            .seen
            .insert((a.site.clone(), a.slot, a.lockset.clone(), a.may.clone()))
        {
            self.accesses.push(a);
        }
    }

    fn spawn(&mut self, s: GuardedSpawn) {
        if !self.spawns.contains(&s) {
            self.spawns.push(s);
        }
    }
}

/// Runs one statement (or branch condition) from `flow`, reporting accesses
/// and spawns to `sink` when given, and returns the outgoing flow.
fn step(
    p: &Program,
    stmt: &Stmt,
    branch: bool,
    mut flow: Flow,
    summaries: &BTreeMap<String, FunctionSummary>,
    mut sink: Option<&mut Collect<'_>>,
) -> Flow {
    for e in eval_steps(p, stmt) {
        match e {
            EvalStep::Access(a) => {
                if let Some(c) = sink.as_deref_mut() {
                    c.access(GuardedAccess {
                        lvalue: a.lvalue,
                        kind: a.kind,
                        lockset: flow.must.clone(),
                        may: flow.may.clone(),
                        site: stmt.site.clone(),
                        slot: a.slot,
                        subscript: a.subscript,
                    });
                }
            }
            EvalStep::Call(g) => {
                let gs = &summaries[&g];
                if let Some(c) = sink.as_deref_mut() {
                    for ga in &gs.accesses {
                        c.access(GuardedAccess {
                            lockset: flow.must.then(&ga.lockset),
                            may: flow.may.then(&ga.may),
                            ..ga.clone()
                        });
                    }
                    for sp in &gs.spawns {
                        c.spawn(GuardedSpawn {
                            lockset: flow.must.then(&sp.lockset),
                            ..sp.clone()
                        });
                    }
                }
                flow = flow.then(&gs.exit_lockset, &gs.exit_may);
            }
        }
    }
    if branch {
        return flow;
    }
    match &stmt.kind {
        StmtKind::Lock(m) => flow.acquire(m),
        StmtKind::Unlock(m) => flow.release(m),
        StmtKind::Wait { mutex, .. } => {
            flow.release(mutex);
            flow.acquire(mutex);
        }
        StmtKind::Spawn { func, .. }
        | StmtKind::Local {
            init: Some(crate::frontend::LocalInit::Spawn { func, .. }),
            ..
        } => {
            if let Some(c) = sink {
                c.spawn(GuardedSpawn {
                    site: stmt.site.clone(),
                    entry: func.clone(),
                    lockset: flow.must.clone(),
                });
            }
        }
        _ => {}
    }
    flow
}

fn node_stmt(op: &NodeOp) -> Option<(&Stmt, bool)> {
    match op {
        NodeOp::Simple(s) => Some((s, false)),
        _ => None,
    }
}

/// Summarizes `f` given summaries of all its callees.
pub fn analyze_function(
    p: &Program,
    f: &Function,
    callee_summaries: &BTreeMap<String, FunctionSummary>,
) -> FunctionSummary {
    let cfg = Cfg::build(f);
    // Branch nodes need the owning statement to find their condition's
    // accesses; index the function's statements by site.
    let mut by_site: BTreeMap<SiteId, &Stmt> = BTreeMap::new();
    f.walk(&mut |s| {
        by_site.insert(s.site.clone(), s);
    });
    let run = |n: usize, flow: Flow, sink: Option<&mut Collect<'_>>| -> Flow {
        let node = &cfg.nodes[n];
        if let Some((s, b)) = node_stmt(&node.op) {
            return step(p, s, b, flow, callee_summaries, sink);
        }
        if let (NodeOp::Branch(_), Some(site)) = (&node.op, &node.site) {
            return step(p, by_site[site], true, flow, callee_summaries, sink);
        }
        flow
    };

    let order = cfg.reverse_postorder();
    let mut input: Vec<Option<Flow>> = vec![None; cfg.nodes.len()];
    let mut output: Vec<Option<Flow>> = vec![None; cfg.nodes.len()];
    input[cfg.entry] = Some(Flow::default());
    let mut changed = true;
    while changed {
        changed = false;
        for &n in &order {
            let inn = if n == cfg.entry {
                Some(Flow::default())
            } else {
                cfg.preds[n]
                    .iter()
                    .filter_map(|&q| output[q].as_ref())
                    .fold(None, |acc: Option<Flow>, o| {
                        Some(match acc {
                            None => o.clone(),
                            Some(a) => a.join(o),
                        })
                    })
            };
            let Some(inn) = inn else { continue };
            let out = run(n, inn.clone(), None);
            if output[n].as_ref() != Some(&out) {
                output[n] = Some(out);
                changed = true;
            }
            input[n] = Some(inn);
        }
    }

    let mut summary = FunctionSummary {
        name: f.name.clone(),
        ..Default::default()
    };
    {
        let mut sink = Collect {
            accesses: &mut summary.accesses,
            spawns: &mut summary.spawns,
            seen: BTreeSet::new(),
        };
        for &n in &order {
            if let Some(inn) = &input[n] {
                run(n, inn.clone(), Some(&mut sink));
            }
        }
    }
    // A function whose exit is unreachable never returns; its effect on a
    // caller is irrelevant and taken as the identity.
    if let Some(exit) = &input[cfg.exit] {
        summary.exit_lockset = exit.must.clone();
        summary.exit_may = exit.may.clone();
    }
    summary
}

/// Summaries of every function, computed bottom-up over the call graph.
pub fn summarize_program(p: &Program) -> BTreeMap<String, FunctionSummary> {
    let cg = CallGraph::build(p);
    let mut summaries = BTreeMap::new();
    for name in cg.topological_order() {
        let f = p.function(&name).expect("call graph node");
        let s = analyze_function(p, f, &summaries);
        summaries.insert(name, s);
    }
    summaries
}

/// Accesses of each thread entry with absolute locksets (the relative
/// lockset from an empty start at the entry).
pub fn resolve_thread_accesses(
    p: &Program,
    summaries: &BTreeMap<String, FunctionSummary>,
) -> BTreeMap<String, Vec<GuardedAccess>> {
    p.thread_entries()
        .into_iter()
        .map(|e| {
            let acc = summaries[&e].accesses.clone();
            (e, acc)
        })
        .collect()
}

/// Rejects programs that spawn a thread while holding a lock.
pub fn check_spawns(p: &Program, summaries: &BTreeMap<String, FunctionSummary>) -> Result<()> {
    for e in p.thread_entries() {
        for sp in &summaries[&e].spawns {
            if !sp.lockset.positive.is_empty() {
                return Err(Error::Analysis(format!(
                    "thread `{}` is spawned at {} while holding {:?} (from entry `{e}`)",
                    sp.entry, sp.site, sp.lockset.positive
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct Instance {
    key: AccessKey,
    kind: AccessKind,
    contexts: BTreeSet<BTreeSet<String>>,
    may_held: BTreeSet<String>,
    subscript: Option<String>,
}

/// Intersects absolute locksets across every pair of thread entries
/// (self pairs included for spawned entries; `main` runs once).
pub fn generate_race_warnings(
    p: &Program,
    resolved: &BTreeMap<String, Vec<GuardedAccess>>,
) -> RaceReport {
    // lvalue -> entry -> key -> instance
    let mut by_lvalue: BTreeMap<String, BTreeMap<AccessKey, Instance>> = BTreeMap::new();
    for (entry, accs) in resolved {
        for a in accs {
            let key = AccessKey {
                entry: entry.clone(),
                site: a.site.clone(),
                slot: a.slot,
            };
            let inst = by_lvalue
                .entry(a.lvalue.clone())
                .or_default()
                .entry(key.clone())
                .or_insert_with(|| Instance {
                    key,
                    kind: a.kind,
                    contexts: BTreeSet::new(),
                    may_held: BTreeSet::new(),
                    subscript: a.subscript.as_ref().map(print_expr),
                });
            inst.contexts.insert(a.lockset.positive.clone());
            inst.may_held.extend(a.may.positive.iter().cloned());
        }
    }

    let mut warnings = Vec::new();
    for (lvalue, insts) in by_lvalue {
        let list: Vec<&Instance> = insts.values().collect();
        let mut pairs = Vec::new();
        for (i, a) in list.iter().enumerate() {
            for b in &list[i..] {
                let same_entry = a.key.entry == b.key.entry;
                if same_entry && a.key.entry == p.main {
                    continue;
                }
                if a.kind == AccessKind::Read && b.kind == AccessKind::Read {
                    continue;
                }
                let unguarded = a
                    .contexts
                    .iter()
                    .any(|c1| b.contexts.iter().any(|c2| c1.is_disjoint(c2)));
                if unguarded {
                    pairs.push((a.key.clone(), b.key.clone()));
                }
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let accesses = list
            .iter()
            .map(|i| WarningAccess {
                key: i.key.clone(),
                kind: i.kind,
                locksets: i.contexts.iter().map(|c| c.iter().cloned().collect()).collect(),
                may_held: i.may_held.iter().cloned().collect(),
                subscript: i.subscript.clone(),
            })
            .collect();
        warnings.push(Warning {
            lvalue,
            accesses,
            entry_pairs: Vec::new(),
            pairs,
        });
    }
    let mut report = RaceReport {
        digest: crate::program_digest(p),
        warnings,
        counts: Counts::default(),
    };
    report.normalize();
    report
}

/// Full static analysis of a validated program.
pub fn analyze(p: &Program) -> Result<RaceReport> {
    let summaries = summarize_program(p);
    check_spawns(p, &summaries)?;
    let resolved = resolve_thread_accesses(p, &summaries);
    Ok(generate_race_warnings(p, &resolved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    fn ls(pos: &[&str], neg: &[&str]) -> RelativeLockset {
        RelativeLockset {
            positive: pos.iter().map(|s| s.to_string()).collect(),
            negative: neg.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn single_guarded_write() {
        let p = parse_program("int x; lock m; void main(){ lock(m); x = 1; unlock(m); }").unwrap();
        let s = analyze_function(&p, p.function("main").unwrap(), &BTreeMap::new());
        assert_eq!(s.accesses.len(), 1);
        assert_eq!(s.accesses[0].kind, AccessKind::Write);
        assert_eq!(s.accesses[0].lockset, ls(&["m"], &[]));
        assert_eq!(s.exit_lockset, ls(&[], &["m"]));
    }

    #[test]
    fn must_join_intersects() {
        let p = parse_program(
            "int x; int c; lock m; void main(){ if (c) { lock(m); } x = 1; }",
        )
        .unwrap();
        let s = analyze_function(&p, p.function("main").unwrap(), &BTreeMap::new());
        let w = s.accesses.iter().find(|a| a.lvalue == "x").unwrap();
        assert!(!w.lockset.positive.contains("m"));
        assert!(w.may.positive.contains("m"));
    }

    #[test]
    fn composition_rule() {
        let caller = ls(&["a", "b"], &["c"]);
        let callee = ls(&["c"], &["a"]);
        assert_eq!(caller.then(&callee), ls(&["b", "c"], &["a"]));
    }

    #[test]
    fn spawning_under_lock_is_rejected() {
        let p = parse_program("lock m; void w(int id){} void main(){ lock(m); spawn w(1); unlock(m); }")
            .unwrap();
        assert!(matches!(analyze(&p), Err(Error::Analysis(_))));
    }
}
