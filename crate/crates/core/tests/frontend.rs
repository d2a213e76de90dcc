mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use racx::frontend::*;

fn main_of(p: &Program) -> &Function {
    p.function("main").unwrap()
}

/// Dominators by enumerating every simple path from entry to each node.
fn path_dominators(cfg: &Cfg) -> Vec<Option<BTreeSet<usize>>> {
    fn dfs(cfg: &Cfg, n: usize, path: &mut Vec<usize>, on: &mut Vec<bool>, acc: &mut Vec<Option<BTreeSet<usize>>>) {
        let here: BTreeSet<usize> = path.iter().copied().collect();
        acc[n] = Some(match acc[n].take() {
            None => here,
            Some(prev) => prev.intersection(&here).copied().collect(),
        });
        for &s in &cfg.succs[n] {
            if !on[s] {
                on[s] = true;
                path.push(s);
                dfs(cfg, s, path, on, acc);
                path.pop();
                on[s] = false;
            }
        }
    }
    let mut acc = vec![None; cfg.nodes.len()];
    let mut on = vec![false; cfg.nodes.len()];
    on[cfg.entry] = true;
    dfs(cfg, cfg.entry, &mut vec![cfg.entry], &mut on, &mut acc);
    acc
}

fn oracle_map(cfg: &Cfg) -> DominatorMap {
    let doms = path_dominators(cfg);
    let mut out = DominatorMap {
        function: cfg.function.clone(),
        ..Default::default()
    };
    for (n, node) in cfg.nodes.iter().enumerate() {
        if let (Some(site), Some(ds)) = (&node.site, &doms[n]) {
            let set = ds.iter().filter_map(|&d| cfg.nodes[d].site.clone()).collect();
            out.dominators.insert(site.clone(), set);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn print_parse_round_trip(body in common::shape_strategy(3, false)) {
        let src = common::render_program(&body);
        let p = parse_program(&src).unwrap();
        let printed = print_program(&p);
        let q = parse_program(&printed).unwrap();
        prop_assert_eq!(&p, &q);
        prop_assert_eq!(print_program(&q), printed);
    }

    #[test]
    fn dominators_match_path_enumeration(body in common::shape_strategy(3, false)) {
        let src = common::render_program(&body);
        let p = parse_program(&src).unwrap();
        let cfg = Cfg::build(main_of(&p));
        prop_assume!(cfg.basic_blocks().len() <= 12);
        let fast = dominators::dominators_of_cfg(&cfg);
        prop_assert_eq!(fast, oracle_map(&cfg));
    }

    #[test]
    fn dominator_map_invariants(body in common::shape_strategy(3, false)) {
        let p = parse_program(&common::render_program(&body)).unwrap();
        let f = main_of(&p);
        let dom = compute_dominators(f);
        let first = f.body[0].site.clone();
        for (s, ds) in &dom.dominators {
            prop_assert!(ds.contains(s));
            prop_assert!(ds.contains(&first));
            for d in ds {
                // Transitivity: everything dominating d also dominates s.
                for dd in dom.of(d).unwrap() {
                    prop_assert!(ds.contains(dd));
                }
                if d != s {
                    prop_assert!(!dom.dominates(s, d));
                }
            }
        }
    }

    #[test]
    fn every_statement_in_exactly_one_block(body in common::shape_strategy(3, false)) {
        let p = parse_program(&common::render_program(&body)).unwrap();
        let cfg = Cfg::build(main_of(&p));
        let mut seen = vec![0usize; cfg.nodes.len()];
        for b in cfg.basic_blocks() {
            for n in b {
                seen[n] += 1;
            }
        }
        for (n, node) in cfg.nodes.iter().enumerate() {
            if node.site.is_some() {
                prop_assert_eq!(seen[n], 1);
            }
        }
    }
}

#[test]
fn minimal_program() {
    let p = parse_program("int x; void main(){ x = 1; }").unwrap();
    assert_eq!(p.globals.len(), 1);
    assert_eq!(p.functions.len(), 1);
    assert!(p.thread_creations().is_empty());
}

#[test]
fn worker_example_parses() {
    let src = "
        int a[200];
        void worker(int myid) {
            int step = myid;
            for (int i = 0; i < 10; i++) {
                for (int j = 0; j < 10; j++) {
                    a[j + 10 * step] = i;
                }
                step = step + 2;
            }
        }
        void entry(int id) { worker(id); }
        void main() {
            for (int t = 0; t < nthreads; t++) { spawn entry(t); }
        }";
    let p = parse_program(src).unwrap();
    assert_eq!(p.globals.len(), 1);
    assert!(p.global("a").unwrap().is_array());
    assert_eq!(p.thread_creations().len(), 1);
    assert_eq!(p.thread_entries(), vec!["main".to_string(), "entry".to_string()]);
}

#[test]
fn rejects_recursion() {
    match parse_program("void f(){ f(); } void main(){ f(); }") {
        Err(ParseError::Recursion { cycle }) => assert_eq!(cycle, vec!["f", "f"]),
        other => panic!("expected recursion error, got {other:?}"),
    }
}

#[test]
fn rejects_indirect_recursion() {
    let r = parse_program("void f(){ g(); } void g(){ f(); } void main(){ f(); }");
    assert!(matches!(r, Err(ParseError::Recursion { .. })));
}

#[test]
fn diagnostics() {
    assert!(matches!(
        parse_program("void main(){ y = 1; }"),
        Err(ParseError::Undeclared { .. })
    ));
    assert!(matches!(
        parse_program("int x; void main(){ x[0] = 1; }"),
        Err(ParseError::IndexOnScalar { .. })
    ));
    assert!(matches!(
        parse_program("int x; void main(){ x = ; }"),
        Err(ParseError::Syntax { line: 1, .. })
    ));
    assert!(matches!(
        parse_program("int x; void main(){ lock(m); }"),
        Err(ParseError::Undeclared { .. })
    ));
    assert!(parse_program("int x; void main(){ if (x) { return; } else { return; } x = 1; }").is_err());
}

#[test]
fn call_graph_diamond() {
    let p = parse_program("void c(){} void a(){ c(); } void b(){ c(); } void main(){ a(); b(); }").unwrap();
    let cg = build_call_graph(&p);
    assert_eq!(cg.nodes.len(), 4);
    assert_eq!(cg.edges.len(), 4);
    let topo = cg.topological_order();
    let pos = |n: &str| topo.iter().position(|x| x == n).unwrap();
    assert!(pos("c") < pos("a") && pos("c") < pos("b"));
    assert!(pos("a") < pos("main") && pos("b") < pos("main"));
}

#[test]
fn call_graph_single_function() {
    let p = parse_program("void main(){ }").unwrap();
    let cg = build_call_graph(&p);
    assert_eq!(cg.nodes.len(), 1);
    assert!(cg.edges.is_empty());
}

#[test]
fn call_edges_carry_actuals() {
    let p = parse_program("void w(int s){} void main(){ w(5); }").unwrap();
    let cg = build_call_graph(&p);
    assert_eq!(cg.edges[0].args, vec![Expr::Int(5)]);
}

#[test]
fn straight_line_dominators() {
    let p = parse_program("int x; void main(){ x = 1; x = 2; x = 3; }").unwrap();
    let f = main_of(&p);
    let dom = compute_dominators(f);
    let s: Vec<SiteId> = f.sites();
    assert_eq!(dom.of(&s[2]).unwrap(), &s.iter().cloned().collect::<BTreeSet<_>>());
}

#[test]
fn diamond_dominators() {
    let p = parse_program("int x; void main(){ if (x) { x = 1; } else { x = 2; } x = 3; }").unwrap();
    let f = main_of(&p);
    let dom = compute_dominators(f);
    let s = f.sites();
    let (cond, then_arm, else_arm, join) = (&s[0], &s[1], &s[2], &s[3]);
    assert!(dom.dominates(cond, join));
    assert!(!dom.dominates(then_arm, join));
    assert!(!dom.dominates(else_arm, join));
}

#[test]
fn init_before_spawn_loop_dominates_spawn() {
    let src = "
        int jmx[8];
        void w(int id) { int v = jmx[id]; }
        void main() {
            jmx[0] = 1;
            jmx[1] = 2;
            for (int t = 0; t < 2; t++) { spawn w(t); }
        }";
    let p = parse_program(src).unwrap();
    let f = main_of(&p);
    let dom = compute_dominators(f);
    let spawn = p.thread_creations()[0].site.clone();
    let s = f.sites();
    assert!(dom.dominates(&s[0], &spawn));
    assert!(dom.dominates(&s[1], &spawn));
}

#[test]
fn site_ids_survive_explicit_ordinals() {
    let src = "int x; lock m; void main(){ x = 1; @site(7) lock(m); x = 2; @site(8) unlock(m); }";
    let p = parse_program(src).unwrap();
    let ords: Vec<u32> = main_of(&p).sites().iter().map(|s| s.ordinal).collect();
    assert_eq!(ords, vec![0, 7, 1, 8]);
    let q = parse_program(&print_program(&p)).unwrap();
    assert_eq!(p, q);
}

#[test]
fn ivs_rewrites_additive_induction() {
    let src = "
        int a[200];
        void worker(int myid) {
            int step = myid;
            for (int i = 0; i < 10; i++) {
                for (int j = 0; j < 10; j++) {
                    a[j + 10 * step] = i;
                }
                step = step + 2;
            }
        }
        void main() { worker(0); }";
    let p = parse_program(src).unwrap();
    let f = p.function("worker").unwrap();
    let g = induction_variable_substitution(f);
    assert_eq!(f.sites(), g.sites());
    let mut subs = Vec::new();
    g.walk(&mut |s| {
        if let StmtKind::Assign { target, .. } = &s.kind {
            if let Some(i) = &target.index {
                subs.push(print_expr(i));
            }
        }
    });
    assert_eq!(subs, vec!["j + 10 * (2 * i + myid)"]);
}

#[test]
fn ivs_identity_without_induction() {
    let src = "int a[10]; void main(){ for (int i = 0; i < 10; i++) { a[i] = i; } }";
    let p = parse_program(src).unwrap();
    let f = main_of(&p);
    assert_eq!(&induction_variable_substitution(f), f);
}

#[test]
fn ivs_skips_multiplicative_update() {
    let src = "
        int a[10];
        void w(int s0) {
            int v = s0;
            for (int i = 0; i < 3; i++) { a[v] = 1; v = v * 2; }
        }
        void main(){ w(1); }";
    let p = parse_program(src).unwrap();
    let f = p.function("w").unwrap();
    assert_eq!(&induction_variable_substitution(f), f);
}

#[test]
fn ivs_uses_after_update_see_next_value() {
    let src = "
        int a[64];
        void w(int s0) {
            int v = s0;
            for (int i = 1; i < 4; i++) { v = v + 3; a[v] = 1; }
        }
        void main(){ w(1); }";
    let p = parse_program(src).unwrap();
    let g = induction_variable_substitution(p.function("w").unwrap());
    let mut subs = Vec::new();
    g.walk(&mut |s| {
        if let StmtKind::Assign { target, .. } = &s.kind {
            if let Some(i) = &target.index {
                subs.push(print_expr(i));
            }
        }
    });
    assert_eq!(subs, vec!["3 * (i - 1 + 1) + s0"]);
}

#[test]
fn dumps_are_deterministic() {
    let src = "int x; lock m; void h(){ lock(m); x = 1; unlock(m); } void main(){ h(); if (x) { x = 2; } }";
    let p = parse_program(src).unwrap();
    for d in [dump_ast, dump_cfg, dump_dominators, dump_callgraph] {
        assert_eq!(d(&p), d(&parse_program(src).unwrap()));
        assert!(!d(&p).is_empty());
    }
}
