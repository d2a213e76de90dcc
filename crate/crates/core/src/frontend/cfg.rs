//! Statement-level control-flow graphs.
//!
//! Every statement site becomes one node: simple statements carry a copy of
//! the statement, `if`/`while`/`for` conditions become branch nodes, and
//! for-loop init/update are ordinary simple nodes. Two virtual nodes mark
//! function entry and exit. Basic blocks are the maximal straight-line chains
//! of nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use super::ast::*;
use super::printer::{print_expr, print_simple};

#[derive(Debug, Clone)]
pub enum NodeOp {
    Entry,
    Exit,
    Simple(Stmt),
    Branch(Expr),
}

#[derive(Debug, Clone)]
pub struct CfgNode {
    pub site: Option<SiteId>,
    pub op: NodeOp,
}

#[derive(Debug, Clone)]
pub struct Cfg {
    pub function: String,
    pub nodes: Vec<CfgNode>,
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
    pub entry: usize,
    pub exit: usize,
}

impl Cfg {
    pub fn build(f: &Function) -> Self {
        let mut b = Builder {
            nodes: vec![
                CfgNode {
                    site: None,
                    op: NodeOp::Entry,
                },
                CfgNode {
                    site: None,
                    op: NodeOp::Exit,
                },
            ],
            edges: BTreeSet::new(),
        };
        let tails = b.lower(&f.body, vec![0]);
        for t in tails {
            b.edges.insert((t, 1));
        }
        let n = b.nodes.len();
        let mut succs = vec![Vec::new(); n];
        let mut preds = vec![Vec::new(); n];
        for &(a, c) in &b.edges {
            succs[a].push(c);
            preds[c].push(a);
        }
        Cfg {
            function: f.name.clone(),
            nodes: b.nodes,
            succs,
            preds,
            entry: 0,
            exit: 1,
        }
    }

    pub fn node_of(&self, site: &SiteId) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.site.as_ref() == Some(site))
    }

    pub fn site_index(&self) -> BTreeMap<SiteId, usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.site.clone().map(|s| (s, i)))
            .collect()
    }

    /// Nodes reachable from entry.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut work = vec![self.entry];
        while let Some(n) = work.pop() {
            if !std::mem::replace(&mut seen[n], true) {
                work.extend(self.succs[n].iter().copied());
            }
        }
        seen
    }

    /// Whether a non-empty path leads from `from` to `to`.
    pub fn reaches(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut work: Vec<usize> = self.succs[from].clone();
        while let Some(n) = work.pop() {
            if n == to {
                return true;
            }
            if !std::mem::replace(&mut seen[n], true) {
                work.extend(self.succs[n].iter().copied());
            }
        }
        false
    }

    /// Reverse postorder from entry over reachable nodes.
    pub fn reverse_postorder(&self) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        let mut post = Vec::with_capacity(self.nodes.len());
        // Iterative DFS with an explicit successor cursor.
        let mut stack = vec![(self.entry, 0usize)];
        seen[self.entry] = true;
        while let Some(&mut (n, ref mut i)) = stack.last_mut() {
            if *i < self.succs[n].len() {
                let s = self.succs[n][*i];
                *i += 1;
                if !seen[s] {
                    seen[s] = true;
                    stack.push((s, 0));
                }
            } else {
                post.push(n);
                stack.pop();
            }
        }
        post.reverse();
        post
    }

    /// Maximal straight-line chains of nodes, in reverse postorder of their
    /// leaders.
    pub fn basic_blocks(&self) -> Vec<Vec<usize>> {
        let is_leader = |n: usize| {
            n == self.entry
                || self.preds[n].len() != 1
                || self.succs[self.preds[n][0]].len() != 1
                || self.preds[n][0] == self.entry
        };
        let mut blocks = Vec::new();
        for n in self.reverse_postorder() {
            if !is_leader(n) {
                continue;
            }
            let mut block = vec![n];
            let mut cur = n;
            while self.succs[cur].len() == 1 && cur != self.entry {
                let next = self.succs[cur][0];
                if is_leader(next) {
                    break;
                }
                block.push(next);
                cur = next;
            }
            blocks.push(block);
        }
        blocks
    }

    pub fn describe(&self, n: usize) -> String {
        let node = &self.nodes[n];
        let head = match &node.site {
            Some(s) => format!("s{}", s.ordinal),
            None => String::new(),
        };
        match &node.op {
            NodeOp::Entry => "ENTRY".into(),
            NodeOp::Exit => "EXIT".into(),
            NodeOp::Branch(e) => format!("{head}: branch {}", print_expr(e)),
            NodeOp::Simple(s) => format!("{head}: {}", print_simple(s)),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "function {}", self.function);
        let blocks = self.basic_blocks();
        let block_of: BTreeMap<usize, usize> = blocks
            .iter()
            .enumerate()
            .flat_map(|(b, ns)| ns.iter().map(move |&n| (n, b)))
            .collect();
        for (b, ns) in blocks.iter().enumerate() {
            let _ = writeln!(out, "  B{b}:");
            for &n in ns {
                let _ = writeln!(out, "    {}", self.describe(n));
            }
            let last = *ns.last().expect("non-empty block");
            let mut targets: Vec<usize> = self.succs[last]
                .iter()
                .filter_map(|s| block_of.get(s).copied())
                .collect();
            targets.sort();
            let t: Vec<String> = targets.iter().map(|t| format!("B{t}")).collect();
            let _ = writeln!(out, "    -> [{}]", t.join(", "));
        }
        out
    }
}

struct Builder {
    nodes: Vec<CfgNode>,
    edges: BTreeSet<(usize, usize)>,
}

impl Builder {
    fn add(&mut self, site: &SiteId, op: NodeOp, preds: &[usize]) -> usize {
        let id = self.nodes.len();
        self.nodes.push(CfgNode {
            site: Some(site.clone()),
            op,
        });
        for &p in preds {
            self.edges.insert((p, id));
        }
        id
    }

    /// Lowers `body` with incoming edges from `preds`; returns the nodes whose
    /// control falls through past the end of `body`.
    fn lower(&mut self, body: &[Stmt], mut preds: Vec<usize>) -> Vec<usize> {
        for s in body {
            preds = self.lower_stmt(s, preds);
        }
        preds
    }

    fn lower_stmt(&mut self, s: &Stmt, preds: Vec<usize>) -> Vec<usize> {
        match &s.kind {
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                let c = self.add(&s.site, NodeOp::Branch(cond.clone()), &preds);
                let mut tails = self.lower(then_body, vec![c]);
                tails.extend(self.lower(else_body, vec![c]));
                tails.sort();
                tails.dedup();
                tails
            }
            StmtKind::While { cond, body } => {
                let c = self.add(&s.site, NodeOp::Branch(cond.clone()), &preds);
                for t in self.lower(body, vec![c]) {
                    self.edges.insert((t, c));
                }
                vec![c]
            }
            StmtKind::For {
                init,
                cond,
                update,
                body,
            } => {
                let mut preds = preds;
                if let Some(i) = init {
                    preds = vec![self.add(&i.site, NodeOp::Simple((**i).clone()), &preds)];
                }
                let c = self.add(
                    &s.site,
                    NodeOp::Branch(cond.clone().unwrap_or(Expr::Int(1))),
                    &preds,
                );
                let mut tails = self.lower(body, vec![c]);
                if let Some(u) = update {
                    tails = vec![self.add(&u.site, NodeOp::Simple((**u).clone()), &tails)];
                }
                for t in tails {
                    self.edges.insert((t, c));
                }
                vec![c]
            }
            StmtKind::Return(_) => {
                let n = self.add(&s.site, NodeOp::Simple(s.clone()), &preds);
                self.edges.insert((n, 1));
                Vec::new()
            }
            _ => vec![self.add(&s.site, NodeOp::Simple(s.clone()), &preds)],
        }
    }
}
