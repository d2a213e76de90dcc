use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use super::ast::{Function, SiteId};
use super::cfg::Cfg;

/// Immediate dominators over CFG nodes (Cooper, Harvey and Kennedy's
/// iterative scheme). Unreachable nodes map to `None`.
pub fn immediate_dominators(cfg: &Cfg) -> Vec<Option<usize>> {
    let rpo = cfg.reverse_postorder();
    let mut order = vec![usize::MAX; cfg.nodes.len()];
    for (i, &n) in rpo.iter().enumerate() {
        order[n] = i;
    }
    let mut idom: Vec<Option<usize>> = vec![None; cfg.nodes.len()];
    idom[cfg.entry] = Some(cfg.entry);
    let intersect = |idom: &[Option<usize>], mut a: usize, mut b: usize| {
        while a != b {
            while order[a] > order[b] {
                a = idom[a].expect("processed");
            }
            while order[b] > order[a] {
                b = idom[b].expect("processed");
            }
        }
        a
    };
    let mut changed = true;
    while changed {
        changed = false;
        for &n in rpo.iter().skip(1) {
            let mut new = None;
            for &p in &cfg.preds[n] {
                if idom[p].is_none() {
                    continue;
                }
                new = Some(match new {
                    None => p,
                    Some(cur) => intersect(&idom, p, cur),
                });
            }
            if new.is_some() && idom[n] != new {
                idom[n] = new;
                changed = true;
            }
        }
    }
    idom
}

/// For every statement, the set of statements dominating it (itself included).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DominatorMap {
    pub function: String,
    pub dominators: BTreeMap<SiteId, BTreeSet<SiteId>>,
}

impl DominatorMap {
    pub fn dominates(&self, d: &SiteId, a: &SiteId) -> bool {
        self.dominators.get(a).is_some_and(|s| s.contains(d))
    }

    pub fn of(&self, a: &SiteId) -> Option<&BTreeSet<SiteId>> {
        self.dominators.get(a)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "function {}", self.function);
        for (s, doms) in &self.dominators {
            let ds: Vec<String> = doms.iter().map(|d| format!("s{}", d.ordinal)).collect();
            let _ = writeln!(out, "  s{}: {{{}}}", s.ordinal, ds.join(", "));
        }
        out
    }
}

pub fn compute_dominators(f: &Function) -> DominatorMap {
    dominators_of_cfg(&Cfg::build(f))
}

pub fn dominators_of_cfg(cfg: &Cfg) -> DominatorMap {
    let idom = immediate_dominators(cfg);
    let mut dominators = BTreeMap::new();
    for (n, node) in cfg.nodes.iter().enumerate() {
        let Some(site) = &node.site else { continue };
        if idom[n].is_none() {
            continue;
        }
        let mut set = BTreeSet::new();
        let mut cur = n;
        loop {
            if let Some(s) = &cfg.nodes[cur].site {
                set.insert(s.clone());
            }
            let up = idom[cur].expect("reachable");
            if up == cur {
                break;
            }
            cur = up;
        }
        dominators.insert(site.clone(), set);
    }
    DominatorMap {
        function: cfg.function.clone(),
        dominators,
    }
}
