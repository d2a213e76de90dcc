use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;

/// A direct call from `caller` to `callee` at `site` (spawns are not calls).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallEdge {
    pub caller: String,
    pub callee: String,
    pub site: SiteId,
    pub args: Vec<Expr>,
}

#[derive(Debug, Clone)]
pub struct CallGraph {
    /// Functions in declaration order.
    pub nodes: Vec<String>,
    /// Edges in caller declaration order, then source order.
    pub edges: Vec<CallEdge>,
}

impl CallGraph {
    pub fn build(p: &Program) -> Self {
        let mut edges = Vec::new();
        for f in &p.functions {
            f.walk(&mut |s| {
                let call = match &s.kind {
                    StmtKind::Call { func, args, .. } => Some((func, args)),
                    StmtKind::Local {
                        init: Some(LocalInit::Call { func, args }),
                        ..
                    } => Some((func, args)),
                    _ => None,
                };
                if let Some((callee, args)) = call {
                    edges.push(CallEdge {
                        caller: f.name.clone(),
                        callee: callee.clone(),
                        site: s.site.clone(),
                        args: args.clone(),
                    });
                }
            });
        }
        Self {
            nodes: p.functions.iter().map(|f| f.name.clone()).collect(),
            edges,
        }
    }

    pub fn callees(&self, f: &str) -> impl Iterator<Item = &CallEdge> {
        let f = f.to_string();
        self.edges.iter().filter(move |e| e.caller == f)
    }

    pub fn callers(&self, f: &str) -> impl Iterator<Item = &CallEdge> {
        let f = f.to_string();
        self.edges.iter().filter(move |e| e.callee == f)
    }

    /// Some call cycle, reported as the list of functions along it.
    pub fn find_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            White,
            Grey,
            Black,
        }
        fn dfs(
            g: &CallGraph,
            n: &str,
            marks: &mut BTreeMap<String, Mark>,
            stack: &mut Vec<String>,
        ) -> Option<Vec<String>> {
            marks.insert(n.to_string(), Mark::Grey);
            stack.push(n.to_string());
            for e in g.callees(n) {
                match marks.get(&e.callee).copied().unwrap_or(Mark::White) {
                    Mark::Grey => {
                        let start = stack.iter().position(|s| s == &e.callee).unwrap_or(0);
                        let mut cycle = stack[start..].to_vec();
                        cycle.push(e.callee.clone());
                        return Some(cycle);
                    }
                    Mark::White => {
                        if let Some(c) = dfs(g, &e.callee, marks, stack) {
                            return Some(c);
                        }
                    }
                    Mark::Black => {}
                }
            }
            stack.pop();
            marks.insert(n.to_string(), Mark::Black);
            None
        }
        let mut marks = BTreeMap::new();
        for n in &self.nodes {
            if marks.get(n).copied().unwrap_or(Mark::White) == Mark::White {
                if let Some(c) = dfs(self, n, &mut marks, &mut Vec::new()) {
                    return Some(c);
                }
            }
        }
        None
    }

    /// Bottom-up order: every callee precedes all of its callers. Ties are
    /// broken by declaration order.
    pub fn topological_order(&self) -> Vec<String> {
        let mut pending: BTreeMap<&str, BTreeSet<&str>> = self
            .nodes
            .iter()
            .map(|n| (n.as_str(), BTreeSet::new()))
            .collect();
        for e in &self.edges {
            pending
                .entry(e.caller.as_str())
                .or_default()
                .insert(e.callee.as_str());
        }
        let mut out: Vec<String> = Vec::with_capacity(self.nodes.len());
        let mut done: BTreeSet<&str> = BTreeSet::new();
        while out.len() < self.nodes.len() {
            let next = self
                .nodes
                .iter()
                .find(|n| !done.contains(n.as_str()) && pending[n.as_str()].iter().all(|c| done.contains(c)));
            let Some(n) = next else {
                // Cycles are rejected at parse time.
                panic!("call graph is not acyclic");
            };
            done.insert(n.as_str());
            out.push(n.clone());
        }
        out
    }

    /// Functions reachable from `root` through calls, including `root`.
    pub fn reachable_from(&self, root: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut work = vec![root.to_string()];
        while let Some(n) = work.pop() {
            if seen.insert(n.clone()) {
                work.extend(self.callees(&n).map(|e| e.callee.clone()));
            }
        }
        seen
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(n);
            out.push_str(" ->");
            for e in self.callees(n) {
                out.push_str(&format!(" {}@{}", e.callee, e.site.ordinal));
            }
            out.push('\n');
        }
        out.push_str("topo:");
        for n in self.topological_order() {
            out.push(' ');
            out.push_str(&n);
        }
        out.push('\n');
        out
    }
}
