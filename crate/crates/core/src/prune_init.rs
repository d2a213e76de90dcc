//! Initialization pruning.
//!
//! Pre-spawn pruning drops a (main, T) pair when main's access is made
//! directly by `main` at a statement that dominates every spawn of `T` and
//! can never run again once `T` exists. Possible-initialization locking wraps
//! the single unlocked access of a warning in a lock all other accesses share.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::frontend::{compute_dominators, Cfg, DominatorMap, Program, SiteId, Stmt, StmtKind};
use crate::lockset::{analyze, AccessKey, RaceReport, Warning};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum Action {
    DropPair { pair: (AccessKey, AccessKey) },
    InsertLock { site: SiteId, lock: String },
    Keep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Justification {
    PreSpawnDominator,
    PossibleInit,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneDecision {
    /// Warnings are identified by their lvalue.
    pub warning: String,
    #[serde(flatten)]
    pub action: Action,
    pub justification: Justification,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn all_dominators(p: &Program) -> BTreeMap<String, DominatorMap> {
    p.functions
        .iter()
        .map(|f| (f.name.clone(), compute_dominators(f)))
        .collect()
}

/// Sites of the loops enclosing each statement of `body`, innermost last.
fn enclosing_loops(body: &[Stmt]) -> BTreeMap<SiteId, Vec<SiteId>> {
    fn go(body: &[Stmt], stack: &mut Vec<SiteId>, out: &mut BTreeMap<SiteId, Vec<SiteId>>) {
        for s in body {
            out.insert(s.site.clone(), stack.clone());
            match &s.kind {
                StmtKind::If {
                    then_body,
                    else_body,
                    ..
                } => {
                    go(then_body, stack, out);
                    go(else_body, stack, out);
                }
                StmtKind::While { body, .. } => {
                    stack.push(s.site.clone());
                    go(body, stack, out);
                    stack.pop();
                }
                StmtKind::For {
                    init, update, body, ..
                } => {
                    if let Some(i) = init {
                        out.insert(i.site.clone(), stack.clone());
                    }
                    stack.push(s.site.clone());
                    if let Some(u) = update {
                        out.insert(u.site.clone(), stack.clone());
                    }
                    go(body, stack, out);
                    stack.pop();
                }
                _ => {}
            }
        }
    }
    let mut out = BTreeMap::new();
    go(body, &mut Vec::new(), &mut out);
    out
}

fn contains_site(s: &Stmt, site: &SiteId) -> bool {
    let mut found = false;
    s.walk(&mut |t| found |= &t.site == site);
    found
}

/// Whether `main`'s access at `site` precedes every creation of `entry`.
struct PreSpawn<'a> {
    p: &'a Program,
    dom: &'a DominatorMap,
    cfg: Cfg,
    loops: BTreeMap<SiteId, Vec<SiteId>>,
    spawns: BTreeMap<String, Option<Vec<SiteId>>>,
}

impl<'a> PreSpawn<'a> {
    fn new(p: &'a Program, doms: &'a BTreeMap<String, DominatorMap>) -> Self {
        let main = p.function(&p.main).expect("validated program has main");
        let mut spawns: BTreeMap<String, Option<Vec<SiteId>>> = BTreeMap::new();
        for t in p.thread_creations() {
            let e = spawns.entry(t.entry.clone()).or_insert_with(|| Some(Vec::new()));
            match e {
                Some(v) if t.creator == p.main => v.push(t.site),
                _ => *e = None,
            }
        }
        Self {
            p,
            dom: &doms[&p.main],
            cfg: Cfg::build(main),
            loops: enclosing_loops(&main.body),
            spawns,
        }
    }

    fn precedes(&self, site: &SiteId, entry: &str) -> bool {
        if site.function != self.p.main {
            return false;
        }
        let Some(Some(spawns)) = self.spawns.get(entry) else {
            return false;
        };
        if spawns.is_empty() || spawns.contains(site) {
            return false;
        }
        let Some(node) = self.cfg.node_of(site) else {
            return false;
        };
        // Never re-executed once any creation of `entry` has happened.
        for s in spawns {
            match self.cfg.node_of(s) {
                Some(sn) if !self.cfg.reaches(sn, node) => {}
                _ => return false,
            }
        }
        let main = self.p.function(&self.p.main).expect("main");
        let mut candidates = vec![site.clone()];
        if let Some(ls) = self.loops.get(site) {
            candidates.extend(ls.iter().rev().cloned());
        }
        candidates.into_iter().any(|d| {
            let loop_has_spawn = d != *site
                && main
                    .find_stmt(&d)
                    .is_some_and(|l| spawns.iter().any(|s| contains_site(l, s)));
            !loop_has_spawn && spawns.iter().all(|s| self.dom.dominates(&d, s))
        })
    }
}

/// Drops (main, T) pairs whose main-side access precedes every creation of T.
pub fn prune_precreation_accesses(
    p: &Program,
    report: &RaceReport,
    doms: &BTreeMap<String, DominatorMap>,
) -> (RaceReport, Vec<PruneDecision>) {
    let ps = PreSpawn::new(p, doms);
    let mut ledger = Vec::new();
    let mut out = report.clone();
    out.retain_pairs(|w, a, b| {
        let drop = [(a, b), (b, a)].iter().any(|(x, y)| {
            x.entry == p.main && y.entry != p.main && ps.precedes(&x.site, &y.entry)
        });
        if drop {
            ledger.push(PruneDecision {
                warning: w.lvalue.clone(),
                action: Action::DropPair {
                    pair: (a.clone(), b.clone()),
                },
                justification: Justification::PreSpawnDominator,
                note: None,
            });
        }
        !drop
    });
    (out, ledger)
}

/// Statement kinds that can be wrapped in `lock(m); s; unlock(m);`.
fn wrappable(s: &Stmt) -> bool {
    matches!(
        s.kind,
        StmtKind::Assign { .. }
            | StmtKind::Print(_)
            | StmtKind::Local {
                init: None | Some(crate::frontend::LocalInit::Expr(_)),
                ..
            }
    )
}

/// Inserts `lock(m)` / `unlock(m)` around the statement at `site`, which must
/// sit directly in some statement list. New statements take fresh ordinals.
fn wrap(p: &mut Program, site: &SiteId, lock: &str) -> bool {
    fn in_list(list: &mut Vec<Stmt>, site: &SiteId, mk: &mut dyn FnMut(bool) -> Stmt) -> bool {
        if let Some(i) = list.iter().position(|s| &s.site == site) {
            let (acquire, release) = (mk(true), mk(false));
            list.insert(i + 1, release);
            list.insert(i, acquire);
            return true;
        }
        for s in list.iter_mut() {
            let hit = match &mut s.kind {
                StmtKind::If {
                    then_body,
                    else_body,
                    ..
                } => in_list(then_body, site, mk) || in_list(else_body, site, mk),
                StmtKind::While { body, .. } | StmtKind::For { body, .. } => in_list(body, site, mk),
                _ => false,
            };
            if hit {
                return true;
            }
        }
        false
    }
    let Some(f) = p.function_mut(&site.function) else {
        return false;
    };
    let mut next = f.max_ordinal();
    let line = site.line;
    let fname = f.name.clone();
    let mut mk = |acquire: bool| {
        next += 1;
        Stmt {
            site: SiteId::new(fname.clone(), next, line),
            traces: Vec::new(),
            kind: if acquire {
                StmtKind::Lock(lock.to_string())
            } else {
                StmtKind::Unlock(lock.to_string())
            },
        }
    };
    in_list(&mut f.body, site, &mut mk)
}

struct Plan {
    site: SiteId,
    lock: String,
    warning: String,
    note: Option<String>,
}

fn plan_warning(p: &Program, w: &Warning) -> Result<Plan, Option<String>> {
    let unlocked: Vec<_> = w.accesses.iter().filter(|a| a.unlocked()).collect();
    let [u] = unlocked.as_slice() else {
        return Err(None);
    };
    let mut common: Option<BTreeSet<String>> = None;
    for a in w.accesses.iter().filter(|a| a.key != u.key) {
        for l in &a.locksets {
            let l: BTreeSet<String> = l.iter().cloned().collect();
            common = Some(match common {
                None => l,
                Some(c) => c.intersection(&l).cloned().collect(),
            });
        }
    }
    let Some(common) = common else {
        return Err(None);
    };
    let Some(lock) = common.iter().next().cloned() else {
        return Err(Some("locked accesses share no common lock".into()));
    };
    let stmt = p
        .find_stmt(&u.key.site)
        .ok_or_else(|| Some(format!("site {} not found", u.key.site)))?;
    if !wrappable(stmt) || is_loop_header_part(p, &u.key.site) {
        return Err(Some(format!(
            "access at {} cannot be wrapped as a statement",
            u.key.site
        )));
    }
    if u.may_held.contains(&lock) {
        return Err(Some(format!("`{lock}` may already be held at {}", u.key.site)));
    }
    let note = (!u.may_held.is_empty()).then(|| {
        format!(
            "possible lock-order hazard: {:?} may be held at {} when `{lock}` is acquired",
            u.may_held, u.key.site
        )
    });
    Ok(Plan {
        site: u.key.site.clone(),
        lock,
        warning: w.lvalue.clone(),
        note,
    })
}

fn is_loop_header_part(p: &Program, site: &SiteId) -> bool {
    let Some(f) = p.function(&site.function) else {
        return false;
    };
    let mut hit = false;
    f.walk(&mut |s| {
        if let StmtKind::For { init, update, .. } = &s.kind {
            hit |= init.as_ref().is_some_and(|i| &i.site == site)
                || update.as_ref().is_some_and(|u| &u.site == site);
        }
    });
    hit
}

/// Locks possible initializations until no warning qualifies, re-running the
/// lockset analysis and pre-spawn pruning after every rewrite.
pub fn lock_possible_initializations(
    p: &Program,
    report: &RaceReport,
) -> Result<(Program, RaceReport, Vec<PruneDecision>)> {
    let mut prog = p.clone();
    let mut rep = report.clone();
    let mut ledger = Vec::new();
    let mut kept: BTreeMap<String, Option<String>> = BTreeMap::new();
    loop {
        kept.clear();
        let mut plans: Vec<Plan> = Vec::new();
        for w in &rep.warnings {
            match plan_warning(&prog, w) {
                Ok(plan) if !plans.iter().any(|q| q.site == plan.site) => plans.push(plan),
                Ok(_) => {}
                Err(note) => {
                    kept.insert(w.lvalue.clone(), note);
                }
            }
        }
        if plans.is_empty() {
            break;
        }
        for plan in plans {
            if wrap(&mut prog, &plan.site, &plan.lock) {
                kept.remove(&plan.warning);
                ledger.push(PruneDecision {
                    warning: plan.warning,
                    action: Action::InsertLock {
                        site: plan.site,
                        lock: plan.lock,
                    },
                    justification: Justification::PossibleInit,
                    note: plan.note,
                });
            }
        }
        let raw = analyze(&prog)?;
        rep = prune_precreation_accesses(&prog, &raw, &all_dominators(&prog)).0;
    }
    for (warning, note) in kept {
        if rep.warnings.iter().any(|w| w.lvalue == warning) {
            ledger.push(PruneDecision {
                warning,
                action: Action::Keep,
                justification: Justification::None,
                note,
            });
        }
    }
    Ok((prog, rep, ledger))
}

/// Both initialization pruning steps in order.
pub fn prune_init(
    p: &Program,
    report: &RaceReport,
) -> Result<(Program, RaceReport, Vec<PruneDecision>)> {
    let (pre, mut ledger) = prune_precreation_accesses(p, report, &all_dominators(p));
    let (prog, rep, more) = lock_possible_initializations(p, &pre)?;
    ledger.extend(more);
    Ok((prog, rep, ledger))
}
