//! Array cross-range pruning: a warning pair on an array is dropped when no
//! element can be touched by both accesses from different threads.

pub mod affine;
pub mod csp;
pub mod range;
pub mod solver;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use affine::Affine;
pub use csp::{build_cross_range_csp, CrossRangeCsp, CspSide};
pub use range::{
    entry_id_name, ids_distinct, interprocedural_range_analysis, intraprocedural_range_analysis,
    local_constraints, PathConstraints, RangeConstraint, Relation, Scope,
};
pub use solver::{check_witness, solve_csp, solve_csp_with_stats, CspVerdict, SolverOptions};

use crate::frontend::{induction_variable_substitution, shared_accesses, Program, SiteId};
use crate::lockset::{AccessKey, RaceReport};

/// Verdict for one combination of call paths of a pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathVerdict {
    pub paths: (Vec<SiteId>, Vec<SiteId>),
    pub csp: Option<String>,
    #[serde(flatten)]
    pub verdict: CspVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub lvalue: String,
    pub pair: (AccessKey, AccessKey),
    pub dropped: bool,
    pub verdicts: Vec<PathVerdict>,
}

/// The program with induction-variable substitution applied to every
/// function.
pub fn substituted(p: &Program) -> Program {
    let mut q = p.clone();
    q.functions = p.functions.iter().map(induction_variable_substitution).collect();
    q
}

/// Everything the pruner needs about a program, computed once.
pub struct ArrayFacts {
    program: Program,
    global: BTreeMap<(String, SiteId), Vec<PathConstraints>>,
}

impl ArrayFacts {
    pub fn new(p: &Program) -> Self {
        let program = substituted(p);
        let locals = local_constraints(&program);
        let global = interprocedural_range_analysis(&program, &locals);
        ArrayFacts { program, global }
    }

    pub fn contexts(&self, entry: &str, site: &SiteId) -> &[PathConstraints] {
        self.global
            .get(&(entry.to_string(), site.clone()))
            .map_or(&[], Vec::as_slice)
    }

    fn subscript(&self, key: &AccessKey) -> Option<crate::frontend::Expr> {
        let stmt = self.program.find_stmt(&key.site)?;
        shared_accesses(&self.program, stmt)
            .into_iter()
            .find(|a| a.slot == key.slot)?
            .subscript
    }

    /// Verdicts for every path combination of one pair; the pair may be
    /// dropped only if the list is non-empty and all are UNSAT.
    pub fn check_pair(&self, a: &AccessKey, b: &AccessKey, opts: &SolverOptions) -> Vec<PathVerdict> {
        let p = &self.program;
        let distinct = (a.entry == b.entry && ids_distinct(p, &a.entry))
            .then(|| entry_id_name(p, &a.entry))
            .flatten();
        let (sa, sb) = (self.subscript(a), self.subscript(b));
        let mut out = Vec::new();
        for ca in self.contexts(&a.entry, &a.site) {
            for cb in self.contexts(&b.entry, &b.site) {
                let paths = (ca.calls.clone(), cb.calls.clone());
                let resolved = (
                    sa.as_ref().and_then(|e| ca.scope.resolve(e)),
                    sb.as_ref().and_then(|e| cb.scope.resolve(e)),
                );
                let (Some(xa), Some(xb)) = resolved else {
                    out.push(PathVerdict {
                        paths,
                        csp: None,
                        verdict: CspVerdict::Unknown {
                            reason: "non-affine subscript".into(),
                        },
                    });
                    continue;
                };
                let csp = build_cross_range_csp(
                    &CspSide {
                        subscript: xa,
                        constraints: ca.constraints.clone(),
                    },
                    &CspSide {
                        subscript: xb,
                        constraints: cb.constraints.clone(),
                    },
                    distinct.as_deref(),
                );
                out.push(PathVerdict {
                    paths,
                    csp: Some(csp.to_string()),
                    verdict: solve_csp(&csp, opts),
                });
            }
        }
        out
    }
}

/// Drops array warning pairs whose cross-range question is UNSAT on every
/// path combination. The ledger has one entry per array pair examined.
pub fn prune_array_warnings(
    p: &Program,
    report: &RaceReport,
    opts: &SolverOptions,
) -> (RaceReport, Vec<LedgerEntry>) {
    let facts = ArrayFacts::new(p);
    let mut ledger = Vec::new();
    for w in &report.warnings {
        if !p.global(&w.lvalue).is_some_and(|g| g.is_array()) {
            continue;
        }
        for (a, b) in &w.pairs {
            let verdicts = facts.check_pair(a, b, opts);
            let dropped = !verdicts.is_empty() && verdicts.iter().all(|v| v.verdict.is_unsat());
            ledger.push(LedgerEntry {
                lvalue: w.lvalue.clone(),
                pair: (a.clone(), b.clone()),
                dropped,
                verdicts,
            });
        }
    }
    let drop: std::collections::BTreeSet<(AccessKey, AccessKey)> = ledger
        .iter()
        .filter(|e| e.dropped)
        .map(|e| e.pair.clone())
        .collect();
    let mut out = report.clone();
    out.retain_pairs(|_, a, b| !drop.contains(&(a.clone(), b.clone())));
    (out, ledger)
}
