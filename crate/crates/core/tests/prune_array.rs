use std::collections::BTreeMap;

use proptest::prelude::*;
use racx::frontend::parse_program;
use racx::lockset::analyze;
use racx::prune_array::{
    build_cross_range_csp, check_witness, prune_array_warnings, solve_csp, solve_csp_with_stats, Affine,
    CrossRangeCsp, CspSide, CspVerdict, RangeConstraint, Relation, SolverOptions,
};

/// Exhaustive search over an explicit box; the reference the solver is
/// measured against.
fn brute_force(csp: &CrossRangeCsp, boxes: &BTreeMap<String, (i64, i64)>) -> bool {
    let names: Vec<&String> = boxes.keys().collect();
    let mut env: BTreeMap<String, i64> = BTreeMap::new();
    fn go(
        i: usize,
        names: &[&String],
        boxes: &BTreeMap<String, (i64, i64)>,
        env: &mut BTreeMap<String, i64>,
        csp: &CrossRangeCsp,
    ) -> bool {
        if i == names.len() {
            return check_witness(csp, env);
        }
        let (lo, hi) = boxes[names[i]];
        for v in lo..=hi {
            env.insert(names[i].clone(), v);
            if go(i + 1, names, boxes, env, csp) {
                return true;
            }
        }
        false
    }
    go(0, &names, boxes, &mut env, csp)
}

#[derive(Debug, Clone)]
struct Bounded {
    csp: CrossRangeCsp,
    boxes: BTreeMap<String, (i64, i64)>,
}

fn affine_over(names: &[String], coefs: &[i64], constant: i64) -> Affine {
    let mut a = Affine::constant(constant);
    for (n, c) in names.iter().zip(coefs) {
        a = a.add(&Affine::var(n.clone()).scale(*c));
    }
    a
}

fn relation() -> impl Strategy<Value = Relation> {
    prop_oneof![
        Just(Relation::Ge),
        Just(Relation::Le),
        Just(Relation::Eq),
        Just(Relation::Ne)
    ]
}

fn bounded_csp() -> impl Strategy<Value = Bounded> {
    (1usize..=4).prop_flat_map(|n| {
        let names: Vec<String> = (0..n).map(|i| format!("v{i}#{}", 1 + i % 2)).collect();
        let ranges = prop::collection::vec((0i64..=8, 0i64..=8), n);
        let lhs = prop::collection::vec(-3i64..=3, n);
        let rhs = prop::collection::vec(-3i64..=3, n);
        let extra = prop::collection::vec(
            (0..n, relation(), prop::collection::vec(-2i64..=2, n), -4i64..=4),
            0..3,
        );
        (Just(names), ranges, lhs, rhs, -6i64..=6, extra).prop_map(
            |(names, ranges, lhs, rhs, k, extra)| {
                let mut boxes = BTreeMap::new();
                let mut constraints = Vec::new();
                for (n, (a, b)) in names.iter().zip(ranges) {
                    let (lo, hi) = (a.min(b), a.max(b));
                    boxes.insert(n.clone(), (lo, hi));
                    constraints.push(RangeConstraint::new(n.clone(), Relation::Ge, Affine::constant(lo)));
                    constraints.push(RangeConstraint::new(n.clone(), Relation::Le, Affine::constant(hi)));
                }
                for (v, rel, coefs, c) in extra {
                    let mut bound = affine_over(&names, &coefs, c);
                    bound.terms.remove(&names[v]);
                    constraints.push(RangeConstraint::new(names[v].clone(), rel, bound));
                }
                let csp = CrossRangeCsp {
                    objective: (affine_over(&names, &lhs, k), affine_over(&names, &rhs, 0)),
                    constraints,
                    distinctness: None,
                    unbounded: Default::default(),
                };
                Bounded { csp, boxes }
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn solver_matches_brute_force(b in bounded_csp()) {
        let expect = brute_force(&b.csp, &b.boxes);
        let got = solve_csp(&b.csp, &SolverOptions::default());
        match &got {
            CspVerdict::Sat { witness } => {
                prop_assert!(expect, "solver SAT, oracle UNSAT: {}", b.csp);
                prop_assert!(check_witness(&b.csp, witness));
            }
            CspVerdict::Unsat => prop_assert!(!expect, "solver UNSAT, oracle SAT: {}", b.csp),
            CspVerdict::Unknown { reason } => prop_assert!(false, "unknown on a bounded CSP: {reason}"),
        }
    }

    #[test]
    fn pruning_changes_cost_not_verdict(b in bounded_csp()) {
        let on = SolverOptions::default();
        let off = SolverOptions { interval_pruning: false, ..on };
        let (v1, s1) = solve_csp_with_stats(&b.csp, &on);
        let (v2, s2) = solve_csp_with_stats(&b.csp, &off);
        prop_assert_eq!(v1.label(), v2.label());
        prop_assert!(s1.assignments <= s2.assignments.max(1) * 2 + 16);
    }
}

fn c(n: &str, r: Relation, b: Affine) -> RangeConstraint {
    RangeConstraint::new(n, r, b)
}

fn k(v: i64) -> Affine {
    Affine::constant(v)
}

fn v(n: &str) -> Affine {
    Affine::var(n)
}

fn worker_side(after_ivs: bool) -> CspSide {
    let mut cs = vec![
        c("i", Relation::Ge, k(0)),
        c("i", Relation::Le, k(9)),
        c("j", Relation::Ge, k(0)),
        c("j", Relation::Le, k(9)),
        c("id", Relation::Ge, k(0)),
    ];
    let subscript = if after_ivs {
        // j + 10*(2*i + id)
        v("j").add(&v("i").scale(2).add(&v("id")).scale(10))
    } else {
        cs.push(c("step", Relation::Ge, v("id")));
        v("j").add(&v("step").scale(10))
    };
    CspSide {
        subscript,
        constraints: cs,
    }
}

#[test]
fn worked_example_csp_shape() {
    let s = worker_side(true);
    let csp = build_cross_range_csp(&s, &s, Some("id"));
    assert_eq!(csp.objective.0.to_string(), "20*i#1 + 10*id#1 + j#1");
    assert_eq!(csp.objective.1.to_string(), "20*i#2 + 10*id#2 + j#2");
    assert_eq!(csp.distinctness, Some(("id#1".into(), "id#2".into())));
    assert!(csp.unbounded.is_empty());
}

#[test]
fn worked_example_with_two_ids_is_unsat() {
    let mut s = worker_side(true);
    s.constraints.push(c("id", Relation::Le, k(1)));
    let csp = build_cross_range_csp(&s, &s, Some("id"));
    assert_eq!(solve_csp(&csp, &SolverOptions::default()), CspVerdict::Unsat);
}

#[test]
fn worked_example_without_upper_id_bound_has_overlap() {
    let s = worker_side(true);
    let csp = build_cross_range_csp(&s, &s, Some("id"));
    let hand: BTreeMap<String, i64> = [("i#1", 1), ("i#2", 0), ("id#1", 0), ("id#2", 2), ("j#1", 0), ("j#2", 0)]
        .into_iter()
        .map(|(n, x)| (n.to_string(), x))
        .collect();
    assert!(check_witness(&csp, &hand));
    let got = solve_csp(&csp, &SolverOptions::default());
    assert!(matches!(got, CspVerdict::Sat { ref witness } if check_witness(&csp, witness)));
}

#[test]
fn pre_ivs_weak_constraint_is_not_unsat() {
    let s = worker_side(false);
    let csp = build_cross_range_csp(&s, &s, Some("id"));
    assert!(!solve_csp(&csp, &SolverOptions::default()).is_unsat());
}

const WORKED: &str = "int a[200];
void worker(int myid) {
  int i;
  int j;
  int step;
  step = myid;
  for (i = 0; i < 10; i = i + 1) {
    for (j = 0; j < 10; j = j + 1) {
      a[j + 10 * step] = myid;
    }
    step = step + 2;
  }
}
void entry(int id) { worker(id); }
void main() { spawn entry(0); spawn entry(1); }
";

#[test]
fn worked_example_program_pair_dropped() {
    let p = parse_program(WORKED).unwrap();
    let report = analyze(&p).unwrap();
    assert_eq!(report.warnings.len(), 1);
    let (out, ledger) = prune_array_warnings(&p, &report, &SolverOptions::default());
    assert!(out.warnings.is_empty(), "{}", out.to_json());
    assert_eq!(ledger.len(), 1);
    assert!(ledger[0].dropped);
    let csp = ledger[0].verdicts[0].csp.as_deref().unwrap();
    assert!(
        csp.starts_with("entry.id#1 + 20*worker.i#1 + worker.j#1 == entry.id#2 + 20*worker.i#2 + worker.j#2")
            || csp.contains("10*entry.id#1"),
        "{csp}"
    );
}

const BOUNDARY: &str = "int a[80];
void w(int id) {
  int j;
  for (j = 0; j <= 16; j = j + 1) {
    a[id * 16 + j] = id;
  }
}
void main() {
  int t;
  for (t = 0; t < 4; t = t + 1) {
    spawn w(t);
  }
}
";

#[test]
fn boundary_overlap_kept_with_witness() {
    let p = parse_program(BOUNDARY).unwrap();
    let report = analyze(&p).unwrap();
    let (out, ledger) = prune_array_warnings(&p, &report, &SolverOptions::default());
    assert_eq!(out.counts, report.counts);
    let verdict = &ledger[0].verdicts[0].verdict;
    let hand: BTreeMap<String, i64> = [("w.id#1", 0), ("w.id#2", 1), ("w.j#1", 16), ("w.j#2", 0)]
        .into_iter()
        .map(|(n, x)| (n.to_string(), x))
        .collect();
    assert_eq!(verdict, &CspVerdict::Sat { witness: hand });

    // without the shared boundary element the partitions are disjoint
    let tight = BOUNDARY.replace("j <= 16", "j < 16");
    let p = parse_program(&tight).unwrap();
    let report = analyze(&p).unwrap();
    let (out, _) = prune_array_warnings(&p, &report, &SolverOptions::default());
    assert!(out.warnings.is_empty());
}

#[test]
fn scalar_only_report_unchanged() {
    let src = "int x;\nlock m;\nvoid w(int id) { x = x + id; }\nvoid main() { spawn w(1); spawn w(2); }";
    let p = parse_program(src).unwrap();
    let report = analyze(&p).unwrap();
    assert!(report.counts.warnings > 0);
    let (out, ledger) = prune_array_warnings(&p, &report, &SolverOptions::default());
    assert_eq!(out, report);
    assert!(ledger.is_empty());
}

#[test]
fn single_spawn_self_pair_kept() {
    let src = "int a[8];\nvoid w(int id) { a[id] = 1; }\nvoid main() { spawn w(3); a[3] = 2; }";
    let p = parse_program(src).unwrap();
    let report = analyze(&p).unwrap();
    let (out, ledger) = prune_array_warnings(&p, &report, &SolverOptions::default());
    assert_eq!(out.counts.pairs, report.counts.pairs, "{}", serde_json::to_string_pretty(&ledger).unwrap());
}

#[test]
fn non_affine_subscript_kept() {
    let src = "int a[64];\nvoid w(int id) { a[id * id] = 1; }\nvoid main() { int t; for (t = 0; t < 4; t = t + 1) { spawn w(t); } }";
    let p = parse_program(src).unwrap();
    let report = analyze(&p).unwrap();
    let (out, ledger) = prune_array_warnings(&p, &report, &SolverOptions::default());
    assert_eq!(out, report);
    assert!(ledger
        .iter()
        .all(|e| matches!(e.verdicts[0].verdict, CspVerdict::Unknown { .. })));
}
