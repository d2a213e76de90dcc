use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use proptest::prelude::*;
use racx::frontend::{parse_program, AccessKind};
use racx::lockset::{analyze, resolve_thread_accesses, summarize_program, RelativeLockset};
use racx::runtime::explore_exhaustive;

fn order<T: Ord>(a: T, b: T) -> (T, T) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn set(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn positive_of(src: &str, entry: &str, lvalue: &str) -> Vec<BTreeSet<String>> {
    let p = parse_program(src).unwrap();
    let resolved = resolve_thread_accesses(&p, &summarize_program(&p));
    resolved[entry]
        .iter()
        .filter(|a| a.lvalue == lvalue)
        .map(|a| a.lockset.positive.clone())
        .collect()
}

#[test]
fn common_lock_gives_no_warning() {
    let src = "int x;\nlock m;\nvoid w(int id) { lock(m); x++; unlock(m); }\nvoid main() { spawn w(0); spawn w(1); }";
    let r = analyze(&parse_program(src).unwrap()).unwrap();
    assert!(r.warnings.is_empty());
    assert_eq!((r.counts.warnings, r.counts.pairs, r.counts.sites), (0, 0, 0));
}

#[test]
fn different_locks_give_one_pair_on_two_sites() {
    let src = "int x;\nlock m, n;\n\
        void a(int id) { lock(m); x = 1; unlock(m); }\n\
        void b(int id) { lock(n); x = 2; unlock(n); }\n\
        void main() { spawn a(0); spawn b(1); }";
    let r = analyze(&parse_program(src).unwrap()).unwrap();
    assert_eq!((r.counts.warnings, r.counts.pairs, r.counts.sites), (1, 1, 2));
    let (a, b) = &r.warnings[0].pairs[0];
    assert_eq!((a.entry.as_str(), b.entry.as_str()), ("a", "b"));
}

#[test]
fn single_helper_still_gets_a_self_pair() {
    let src = "int progress;\nvoid sw(int id) { progress = progress + 1; }\nvoid main() { spawn sw(0); }";
    let r = analyze(&parse_program(src).unwrap()).unwrap();
    assert_eq!(r.warnings.len(), 1);
    assert!(r.warnings[0].pairs.iter().any(|(a, b)| a.entry == "sw" && b.entry == "sw"));
}

#[test]
fn caller_lock_guards_callee_access() {
    // hand composition: w enters with (∅,∅), lock(m) gives ({m},∅), the call
    // into g composes g's relative ({n},∅) at the access: ({m,n},∅)
    let src = "int x;\nlock m, n;\n\
        void g(int v) { lock(n); x = v; unlock(n); }\n\
        void w(int id) { lock(m); g(id); unlock(m); }\n\
        void main() { spawn w(0); }";
    assert_eq!(positive_of(src, "w", "x"), vec![set(&["m", "n"])]);
}

#[test]
fn pre_spawn_init_is_unlocked() {
    let src = "int jmx[4];\nlock m;\nvoid w(int id) { lock(m); jmx[id] = 1; unlock(m); }\n\
        void main() { int i; for (i = 0; i < 4; i++) { jmx[i] = 0; } spawn w(0); }";
    let main = positive_of(src, "main", "jmx");
    assert_eq!(main, vec![set(&[])]);
    assert_eq!(positive_of(src, "w", "jmx"), vec![set(&["m"])]);
}

#[test]
fn entry_summary_imports_callee_accesses() {
    let src = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus/kernels/lu.mtc")).unwrap();
    let p = parse_program(&src).unwrap();
    let sums = summarize_program(&p);
    let in_lu: BTreeSet<_> = sums["lu"].accesses.iter().map(|a| a.site.clone()).collect();
    let in_entry: BTreeSet<_> = sums["SlaveStart"].accesses.iter().map(|a| a.site.clone()).collect();
    assert!(!in_lu.is_empty() && in_lu.is_subset(&in_entry));
    let checksum: Vec<_> = sums["SlaveStart"].accesses.iter().filter(|a| a.lvalue == "checksum").collect();
    assert!(checksum.iter().all(|a| a.lockset.positive.contains("csum")));
}

#[test]
fn lock_on_one_branch_is_not_held_after_join() {
    let src = "int x;\nlock m;\nvoid w(int id) { if (id == 0) { lock(m); } x = 1; if (id == 0) { unlock(m); } }\n\
        void main() { spawn w(0); spawn w(1); }";
    assert_eq!(positive_of(src, "w", "x"), vec![set(&[])]);
}

#[test]
fn oracle_races_appear_in_raw_reports() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus/micro");
    let mut checked = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let p = parse_program(&fs::read_to_string(&path).unwrap()).unwrap();
        let report = analyze(&p).unwrap();
        let warned: BTreeSet<_> = report
            .pairs()
            .into_iter()
            .map(|(_, a, b)| order((a.site, a.slot), (b.site, b.slot)))
            .collect();
        for (a, b) in explore_exhaustive(&p, 2, 1_000_000).unwrap().races {
            checked += 1;
            let key = order((a.site.clone(), a.slot), (b.site.clone(), b.slot));
            assert!(warned.contains(&key), "{}: {a:?} x {b:?} not warned", path.display());
        }
    }
    assert!(checked > 0);
}

fn lockset() -> impl Strategy<Value = RelativeLockset> {
    let names = prop::sample::subsequence(vec!["a", "b", "c", "d"], 0..=4);
    (names.clone(), names).prop_map(|(pos, neg)| {
        let mut l = RelativeLockset::new();
        for m in neg {
            l.release(m);
        }
        for m in pos {
            l.acquire(m);
        }
        l
    })
}

/// One statement of a generated function body.
fn op() -> impl Strategy<Value = String> {
    prop_oneof![
        prop::sample::select(vec!["m", "n", "k"]).prop_map(|l| format!("lock({l});")),
        prop::sample::select(vec!["m", "n", "k"]).prop_map(|l| format!("unlock({l});")),
        prop::sample::select(vec!["x", "y"]).prop_map(|v| format!("{v} = 1;")),
        prop::sample::select(vec!["x", "y"]).prop_map(|v| format!("t = {v};")),
    ]
}

fn body() -> impl Strategy<Value = (Vec<String>, Vec<String>)> {
    (prop::collection::vec(op(), 0..5), prop::collection::vec(op(), 0..5))
}

/// Per-access (lvalue, kind, L+) in program order.
fn absolute(src: &str) -> Vec<(String, AccessKind, BTreeSet<String>)> {
    let p = parse_program(src).unwrap();
    let mut v: Vec<_> = resolve_thread_accesses(&p, &summarize_program(&p))["w"]
        .iter()
        .map(|a| (a.site.clone(), a.slot, a.lvalue.clone(), a.kind, a.lockset.positive.clone()))
        .collect();
    v.sort();
    v.into_iter().map(|(_, _, l, k, s)| (l, k, s)).collect()
}

proptest! {
    #[test]
    fn join_never_grows_the_must_set(a in lockset(), b in lockset()) {
        let j = a.join(&b);
        prop_assert!(j.positive.is_subset(&a.positive) && j.positive.is_subset(&b.positive));
        prop_assert!(j.is_disjoint());
    }

    #[test]
    fn composition_is_associative(a in lockset(), b in lockset(), c in lockset()) {
        prop_assert_eq!(a.then(&b).then(&c), a.then(&b.then(&c)));
        prop_assert!(a.then(&b).is_disjoint());
    }

    #[test]
    fn call_chain_matches_inlined_body(f1 in body(), f2 in body(), f3 in body()) {
        let decls = "int x;\nint y;\nlock m, n, k;\n";
        let main = "void main() { spawn w(0); }\n";
        let chained = format!(
            "{decls}void f3(int v) {{ int t; {} }}\nvoid f2(int v) {{ int t; {} f3(v); {} }}\n\
             void w(int id) {{ int t; {} f2(id); {} }}\n{main}",
            f3.0.join(" ") + &f3.1.join(" "),
            f2.0.join(" "), f2.1.join(" "),
            f1.0.join(" "), f1.1.join(" "),
        );
        let inlined = format!(
            "{decls}void w(int id) {{ int t; {} {} {} {} {} {} }}\n{main}",
            f1.0.join(" "), f2.0.join(" "), f3.0.join(" "), f3.1.join(" "), f2.1.join(" "), f1.1.join(" ")
        );
        // chained sites order by function name, so compare as multisets
        let mut a = absolute(&chained);
        let mut b = absolute(&inlined);
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }
}
