mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use racx::frontend::{induction_variable_substitution, parse_program, Program};
use racx::instrument::{instrument, SiteTable};
use racx::lockset::analyze;
use racx::prune_array::{prune_array_warnings, SolverOptions};
use racx::runtime::{
    explore_exhaustive, run_free, run_record, run_replay, EventKind, ExecutionTrace, LogEvent, ReplayLog, RunOptions,
};

fn opts(threads: usize, seed: u64) -> RunOptions {
    RunOptions {
        threads,
        seed,
        ..RunOptions::default()
    }
}

fn instrumented(src: &str) -> (Program, SiteTable) {
    let p = parse_program(src).unwrap();
    let report = analyze(&p).unwrap();
    instrument(&p, &report).unwrap()
}

fn x_of(t: &ExecutionTrace) -> i64 {
    t.memory["x"][0]
}

const LOST_UPDATE: &str = "int x;\nvoid w(int id) { x = x + 1; }\nvoid main() { spawn w(0); spawn w(1); }\n";

#[test]
fn single_thread_is_sequential() {
    let src = "int r;\nint f(int n) { int a = 1; while (n > 1) { a = a * n; n = n - 1; } return a; }\n\
               void main() { int i; int v; for (i = 0; i < 5; i++) { v = f(i); r = r + v; print(r); } }";
    let p = parse_program(src).unwrap();
    let (first, _) = run_free(&p, None, &opts(1, 0)).unwrap();
    assert_eq!(first.threads[0].output, vec![1, 2, 4, 10, 34]);
    for seed in 1..20 {
        assert_eq!(run_free(&p, None, &opts(1, seed)).unwrap().0, first);
    }
}

#[test]
fn lost_update_outcomes() {
    let p = parse_program(LOST_UPDATE).unwrap();
    let finals: BTreeSet<i64> = (0..200).map(|s| x_of(&run_free(&p, None, &opts(2, s)).unwrap().0)).collect();
    assert_eq!(finals, BTreeSet::from([1, 2]));
    let oracle = explore_exhaustive(&p, 2, 100_000).unwrap();
    let xs: BTreeSet<i64> = oracle.finals.iter().map(|f| f.memory["x"][0]).collect();
    assert_eq!(xs, finals);
}

#[test]
fn self_lock_deadlocks() {
    let p = parse_program("lock m;\nvoid main() { lock(m); lock(m); }").unwrap();
    let err = run_free(&p, None, &opts(1, 0)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("deadlock") && msg.contains("lock m held by thread 0"), "{msg}");
    assert_eq!(err.exit_code(), 1);
    let oracle = explore_exhaustive(&p, 1, 1000).unwrap();
    assert!(oracle.finals.iter().all(|f| f.deadlock));
}

#[test]
fn runtime_faults() {
    let div = parse_program("int x;\nvoid main() { x = 1 / x; }").unwrap();
    assert!(run_free(&div, None, &opts(1, 0)).unwrap_err().to_string().contains("division by zero"));
    let oob = parse_program("int a[3];\nvoid main() { int i = 3; a[i] = 1; }").unwrap();
    assert!(run_free(&oob, None, &opts(1, 0)).unwrap_err().to_string().contains("out of bounds"));
    let spin = parse_program("int x;\nvoid main() { while (x == 0) { } }").unwrap();
    let o = RunOptions {
        max_steps: 10_000,
        ..opts(1, 0)
    };
    assert_eq!(run_free(&spin, None, &o).unwrap_err().exit_code(), 4);
    assert_eq!(explore_exhaustive(&spin, 1, 100).unwrap_err().exit_code(), 4);
}

#[test]
fn lock_pairs_give_dense_sync_clock() {
    let src = "lock m;\nint x;\nvoid w(int id) { lock(m); x = x + 1; unlock(m); }\n\
               void main() { int t; t = spawn w(0); lock(m); x = x + 1; unlock(m); join(t); }";
    let (q, table) = instrumented(src);
    for seed in 0..10 {
        let (trace, log, stats) = run_record(&q, &table, &opts(2, seed)).unwrap();
        let ts: Vec<u64> = log.events.iter().map(|e| e.ts()).collect();
        assert_eq!(ts, vec![1, 2, 3, 4]);
        assert_eq!(log.count(EventKind::Race), 0);
        assert_eq!(stats.logged_events(), 4);
        assert_eq!(x_of(&trace), 2);
        log.validate().unwrap();
    }
}

#[test]
fn both_race_orders_are_recorded() {
    let src = "int x;\nvoid w(int id) { x = id; }\nvoid main() { spawn w(1); spawn w(2); }";
    let (q, table) = instrumented(src);
    assert_eq!(table.rows.len(), 1);
    let mut first = BTreeSet::new();
    for seed in 0..40 {
        let (trace, log, _) = run_record(&q, &table, &opts(2, seed)).unwrap();
        let race: Vec<&LogEvent> = log.events.iter().filter(|e| e.kind() == EventKind::Race).collect();
        assert_eq!(race.iter().map(|e| e.ts()).collect::<Vec<_>>(), vec![1, 2]);
        first.insert(race[0].tid());
        // the last writer decides x
        assert_eq!(x_of(&trace), race[1].tid() as i64);
    }
    assert_eq!(first, BTreeSet::from([1, 2]));
    // the oracle agrees that both orders exist
    let oracle = explore_exhaustive(&q, 2, 10_000).unwrap();
    let xs: BTreeSet<i64> = oracle.finals.iter().map(|f| f.memory["x"][0]).collect();
    assert_eq!(xs, BTreeSet::from([1, 2]));
}

#[test]
fn quiet_program_has_empty_log() {
    let (q, table) = instrumented("int x;\nvoid main() { x = 3; print(x); }");
    let (_, log, _) = run_record(&q, &table, &opts(4, 9)).unwrap();
    assert!(log.events.is_empty());
    assert!(log.render().lines().count() == 1);
}

#[test]
fn replay_reproduces_lost_update() {
    let (q, table) = instrumented(LOST_UPDATE);
    let mut seen = BTreeSet::new();
    for seed in 0..60 {
        let (trace, log, _) = run_record(&q, &table, &opts(2, seed)).unwrap();
        if !seen.insert(x_of(&trace)) {
            continue;
        }
        let text = log.render();
        let parsed = ReplayLog::parse(&text).unwrap();
        for r in 0..10 {
            let (again, _) = run_replay(&q, &table, &parsed, 1000 + r, u64::MAX).unwrap();
            assert_eq!(again.to_json(), trace.to_json());
        }
    }
    assert_eq!(seen, BTreeSet::from([1, 2]));
}

#[test]
fn single_thread_replay_matches() {
    let (q, table) = instrumented("int x;\nvoid main() { x = 1; print(x + 1); }");
    let (trace, log, _) = run_record(&q, &table, &opts(1, 0)).unwrap();
    assert_eq!(run_replay(&q, &table, &log, 5, u64::MAX).unwrap().0, trace);
}

const CONDVAR: &str = "lock m;\ncond c;\nint ready;\nint data;\n\
    void producer(int id) { lock(m); data = 42; ready = 1; signal(c); unlock(m); }\n\
    void consumer(int id) { lock(m); while (ready == 0) { wait(c, m); } print(data); unlock(m); }\n\
    void main() { int a; int b; a = spawn consumer(0); b = spawn producer(1); join(a); join(b); }";

const BARRIER: &str = "int a[8];\nint s[8];\nbarrier b(nthreads);\n\
    void w(int id) { a[id] = id + 1; barrier(b); s[id] = a[(id + 1) % nthreads]; }\n\
    void main() { int t; for (t = 0; t < nthreads; t++) { spawn w(t); } }";

#[test]
fn condition_and_barrier_programs_replay() {
    for (src, threads) in [(CONDVAR, 2), (BARRIER, 4), (LOST_UPDATE, 2)] {
        let (q, table) = instrumented(src);
        for seed in 0..25 {
            let (trace, log, _) = run_record(&q, &table, &opts(threads, seed)).unwrap();
            log.validate().unwrap();
            for r in 0..3 {
                let (again, _) = run_replay(&q, &table, &log, seed * 7 + r, u64::MAX).unwrap();
                assert_eq!(again.to_json(), trace.to_json(), "{src}");
            }
        }
    }
    let p = parse_program(CONDVAR).unwrap();
    for seed in 0..20 {
        assert_eq!(run_free(&p, None, &opts(2, seed)).unwrap().0.threads[1].output, vec![42]);
    }
    let p = parse_program(BARRIER).unwrap();
    let (t, _) = run_free(&p, None, &opts(4, 3)).unwrap();
    assert_eq!(&t.memory["s"][..4], &[2, 3, 4, 1]);
}

#[test]
fn lost_signal_is_not_buffered() {
    let src = "lock m;\ncond c;\nvoid main() { signal(c); lock(m); wait(c, m); unlock(m); }";
    let p = parse_program(src).unwrap();
    let err = run_free(&p, None, &opts(1, 0)).unwrap_err();
    assert!(err.to_string().contains("condition c"), "{err}");
}

#[test]
fn swapped_race_timestamps_never_pass_silently() {
    let (q, table) = instrumented(LOST_UPDATE);
    for seed in 0..30 {
        let (_, log, _) = run_record(&q, &table, &opts(2, seed)).unwrap();
        let race: Vec<usize> = (0..log.events.len())
            .filter(|&i| log.events[i].kind() == EventKind::Race)
            .collect();
        for &i in &race {
            for &j in &race {
                if i >= j || log.events[i].tid() == log.events[j].tid() {
                    continue;
                }
                let mut bad = log.clone();
                let (a, b) = (bad.events[i].ts(), bad.events[j].ts());
                *bad.events[i].ts_mut() = b;
                *bad.events[j].ts_mut() = a;
                check_tampered(&q, &table, &bad);
            }
        }
        for &i in &race {
            let mut bad = log.clone();
            if let LogEvent::Race { value, .. } = &mut bad.events[i] {
                *value += 1;
            }
            let err = run_replay(&q, &table, &bad, 0, u64::MAX).unwrap_err();
            assert_eq!(err.exit_code(), 3, "{err}");
        }
    }
}

fn check_tampered(q: &Program, table: &SiteTable, bad: &ReplayLog) {
    match run_replay(q, table, bad, 0, u64::MAX) {
        Ok((trace, _)) => {
            // an accepted log must describe what actually happened
            for e in &bad.events {
                if let LogEvent::Race { tid, site, value, .. } = e {
                    let row = &table.rows[*site as usize];
                    let name = format!("{}#{}", row.site.function, row.site.ordinal);
                    assert!(trace.threads[*tid]
                        .accesses
                        .iter()
                        .any(|a| a.site == name && a.slot == row.slot && a.value == *value));
                }
            }
        }
        Err(e) => assert_eq!(e.exit_code(), 3, "{e}"),
    }
}

#[test]
fn stale_log_rejected() {
    let (q, table) = instrumented(LOST_UPDATE);
    let (_, mut log, _) = run_record(&q, &table, &opts(2, 1)).unwrap();
    log.digest = "00".into();
    assert_eq!(run_replay(&q, &table, &log, 0, u64::MAX).unwrap_err().exit_code(), 2);
}

#[test]
fn truncated_log_diverges() {
    let (q, table) = instrumented(LOST_UPDATE);
    let (_, mut log, _) = run_record(&q, &table, &opts(2, 1)).unwrap();
    let last_race = log.events.iter().rposition(|e| e.kind() == EventKind::Race).unwrap();
    log.events.remove(last_race);
    let err = run_replay(&q, &table, &log, 0, u64::MAX).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("replay divergence: thread"), "{err}");
}

#[test]
fn oracle_unsynchronized_writes() {
    let p = parse_program("int x;\nvoid w(int id) { x = id; }\nvoid main() { spawn w(1); spawn w(2); }").unwrap();
    let o = explore_exhaustive(&p, 2, 10_000).unwrap();
    assert_eq!(o.races.len(), 1);
    assert_eq!(o.finals.len(), 2);
}

#[test]
fn oracle_locked_writes() {
    let src = "int x;\nlock m;\nvoid w(int id) { lock(m); x = id; unlock(m); }\nvoid main() { spawn w(1); spawn w(2); }";
    let o = explore_exhaustive(&parse_program(src).unwrap(), 2, 10_000).unwrap();
    assert!(o.races.is_empty());
    assert_eq!(o.finals.len(), 2);
}

#[test]
fn oracle_disjoint_partition_agrees_with_pruning() {
    let src = "int a[8];\nvoid w(int id) { int i; int j;\n\
               for (i = 0; i < 2; i++) { for (j = 0; j < 2; j++) { a[j + 2 * (2 * i + id)] = id; } } }\n\
               void main() { spawn w(0); spawn w(1); }";
    let p = parse_program(src).unwrap();
    let o = explore_exhaustive(&p, 2, 100_000).unwrap();
    assert!(o.races.is_empty());
    let report = analyze(&p).unwrap();
    assert!(report.counts.warnings > 0);
    let (out, _) = prune_array_warnings(&p, &report, &SolverOptions::default());
    assert!(out.warnings.is_empty());
}

#[test]
fn record_is_transparent() {
    for (src, threads) in [(LOST_UPDATE, 2), (CONDVAR, 2), (BARRIER, 3)] {
        let (q, table) = instrumented(src);
        for seed in 0..20 {
            let (free, fstats) = run_free(&q, Some(&table), &opts(threads, seed)).unwrap();
            let (plain, _) = run_free(&q, None, &opts(threads, seed)).unwrap();
            let (rec, log, rstats) = run_record(&q, &table, &opts(threads, seed)).unwrap();
            assert_eq!(free, rec);
            assert_eq!(plain, rec);
            assert_eq!(log.events.len() as u64, fstats.logged_events());
            assert_eq!(fstats, rstats);
        }
    }
}

fn same_outcome(a: &racx::Result<(ExecutionTrace, racx::runtime::RunStats)>, b: &racx::Result<(ExecutionTrace, racx::runtime::RunStats)>) -> bool {
    match (a, b) {
        (Ok((x, _)), Ok((y, _))) => x.memory == y.memory && x.threads[0].output == y.threads[0].output,
        (Err(x), Err(y)) => x.exit_code() == y.exit_code(),
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ivs_preserves_semantics(body in common::shape_strategy(3, false)) {
        let src = common::render_program(&body);
        let p = parse_program(&src).unwrap();
        let mut q = p.clone();
        for f in &mut q.functions {
            *f = induction_variable_substitution(f);
        }
        let o = RunOptions { max_steps: 200_000, ..opts(1, 0) };
        let a = run_free(&p, None, &o);
        let b = run_free(&q, None, &o);
        prop_assert!(same_outcome(&a, &b), "{src}\n{:?}\n{:?}", a.as_ref().map(|t| &t.0.memory), b.as_ref().map(|t| &t.0.memory));
    }

    #[test]
    fn replay_determinism_lost_update(seed in any::<u64>(), replay in any::<u64>()) {
        let (q, table) = instrumented(LOST_UPDATE);
        let (trace, log, _) = run_record(&q, &table, &opts(2, seed)).unwrap();
        prop_assert!(log.validate().is_ok());
        let (again, _) = run_replay(&q, &table, &log, replay, u64::MAX).unwrap();
        prop_assert_eq!(again, trace);
    }
}

#[test]
fn ivs_preserves_worked_example() {
    let src = "int a[200];\nvoid worker(int myid) { int i; int j; int step; step = myid;\n\
               for (i = 0; i < 10; i = i + 1) { for (j = 0; j < 10; j = j + 1) { a[j + 10 * step] = myid + 1; } step = step + 2; } }\n\
               void entry(int id) { worker(id); }\nvoid main() { spawn entry(0); spawn entry(1); }";
    let p = parse_program(src).unwrap();
    let mut q = p.clone();
    for f in &mut q.functions {
        *f = induction_variable_substitution(f);
    }
    let (a, _) = run_free(&p, None, &opts(2, 4)).unwrap();
    let (b, _) = run_free(&q, None, &opts(2, 4)).unwrap();
    assert_eq!(a.memory, b.memory);
    assert!(a.memory["a"].iter().all(|&v| v == 1 || v == 2));
}
