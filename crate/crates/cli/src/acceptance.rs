//! Acceptance criteria, evaluated over the corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use racx::frontend::{Program, SiteId};
use racx::instrument::SiteTable;
use racx::lockset::RaceReport;
use racx::prune_array::{
    build_cross_range_csp, check_witness, solve_csp, Affine, CrossRangeCsp, CspSide, CspVerdict, RangeConstraint,
    Relation, SolverOptions,
};
use racx::prune_init::{Action, PruneDecision};
use racx::runtime::{
    explore_exhaustive, run_free, run_record, run_replay, EventKind, ExecutionTrace, LogEvent, ReplayLog, RunOptions,
};
use racx::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::bench::{bench, BenchConfig};
use crate::pipeline::{load_program, run_static, Outcome, PipelineConfig, Stage};
use crate::summary::reduction;

pub const DEFAULT_CORPUS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus");

/// Kernels that follow the blocked array-partition pattern.
pub const SCIENTIFIC: [&str; 3] = ["lu", "fft", "ocean"];

pub const THREAD_COUNTS: [usize; 4] = [1, 2, 4, 8];
pub const RECORD_SEEDS: u64 = 25;
pub const REPLAYS: u64 = 3;
pub const ORACLE_THREADS: usize = 2;
pub const ORACLE_CAP: usize = 2_000_000;
pub const RANDOM_CSPS: usize = 200;

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    fn new(id: u8, name: &str, passed: bool, detail: String) -> Self {
        CriterionResult {
            id,
            name: name.to_string(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("{verdict} criterion {}: {}: {}", self.id, self.name, self.detail)
    }
}

/// A corpus program with its static pipeline already run.
pub struct Prepared {
    pub name: String,
    pub path: PathBuf,
    pub outcome: Outcome,
}

impl Prepared {
    pub fn load(path: &Path) -> Result<Prepared> {
        let p = load_program(path)?;
        let mut cfg = PipelineConfig::new(path, "");
        cfg.last = Stage::Instrument;
        let outcome = run_static(&p, &cfg).map_err(|(_, e)| e)?;
        Ok(Prepared {
            name: path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
            path: path.to_path_buf(),
            outcome,
        })
    }

    pub fn instrumented(&self) -> (&Program, &SiteTable) {
        let (q, t) = self.outcome.instrumented.as_ref().expect("instrument ran");
        (q, t)
    }

    pub fn rewritten(&self) -> &Program {
        self.outcome.refined_program()
    }

    pub fn refined(&self) -> &RaceReport {
        &self.outcome.init.as_ref().expect("prune-init ran").1
    }

    pub fn init_ledger(&self) -> &[PruneDecision] {
        &self.outcome.init.as_ref().expect("prune-init ran").2
    }
}

fn mtc_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "mtc"))
                .collect()
        })
        .unwrap_or_default();
    v.sort();
    v
}

pub fn kernel_paths(corpus: &Path) -> Vec<PathBuf> {
    mtc_files(&corpus.join("kernels"))
}

pub fn micro_paths(corpus: &Path) -> Vec<PathBuf> {
    mtc_files(&corpus.join("micro"))
}

fn prepare_all(paths: &[PathBuf]) -> std::result::Result<Vec<Prepared>, String> {
    paths
        .iter()
        .map(|p| Prepared::load(p).map_err(|e| format!("{}: {e}", p.display())))
        .collect()
}

/// Runs every criterion in order.
pub fn run_all(corpus: &Path) -> Vec<CriterionResult> {
    let mut all = Vec::new();
    let (kernels, micro) = match (prepare_all(&kernel_paths(corpus)), prepare_all(&micro_paths(corpus))) {
        (Ok(k), Ok(m)) => (k, m),
        (Err(e), _) | (_, Err(e)) => {
            return (1..=8)
                .map(|i| CriterionResult::new(i, "corpus", false, format!("corpus failed to load: {e}")))
                .collect()
        }
    };
    let every: Vec<&Prepared> = kernels.iter().chain(&micro).collect();
    all.push(value_determinism(&every));
    let micro_refs: Vec<&Prepared> = micro.iter().collect();
    let races = oracle_races(&micro_refs);
    all.push(completeness(&micro_refs, &races));
    all.push(pruning_safety(&micro_refs, &races));
    all.push(worked_csp());
    all.push(solver_equivalence(RANDOM_CSPS, 0x5a7));
    all.push(pruning_efficacy(&kernels, corpus));
    all.push(overhead_substitute(&every, &kernels));
    all.push(log_integrity(&every));
    all
}

// ---------------------------------------------------------------------------
// 1. value determinism

#[derive(Debug, Default, Clone)]
pub struct DeterminismStats {
    pub records: usize,
    pub replays: usize,
    pub failures: Vec<String>,
    pub elapsed: Duration,
}

/// Records every program at every thread count and seed, validates each log
/// and replays it with distinct scheduler seeds.
pub fn determinism_sweep(progs: &[&Prepared]) -> DeterminismStats {
    let start = Instant::now();
    let jobs: Vec<(&Prepared, usize)> = progs
        .iter()
        .flat_map(|p| THREAD_COUNTS.iter().map(move |&t| (*p, t)))
        .collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    let chunks: Vec<Vec<(&Prepared, usize)>> = (0..workers)
        .map(|w| jobs.iter().skip(w).step_by(workers).copied().collect())
        .collect();
    let parts: Vec<DeterminismStats> = std::thread::scope(|s| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|chunk| s.spawn(move || sweep_chunk(chunk)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep thread")).collect()
    });
    let mut out = DeterminismStats::default();
    for p in parts {
        out.records += p.records;
        out.replays += p.replays;
        out.failures.extend(p.failures);
    }
    out.failures.sort();
    out.elapsed = start.elapsed();
    out
}

fn sweep_chunk(jobs: &[(&Prepared, usize)]) -> DeterminismStats {
    let mut st = DeterminismStats::default();
    for &(prog, threads) in jobs {
        let (q, table) = prog.instrumented();
        for seed in 0..RECORD_SEEDS {
            let opts = RunOptions {
                threads,
                seed,
                ..RunOptions::default()
            };
            let tag = format!("{} threads={threads} seed={seed}", prog.name);
            let (trace, log, _) = match run_record(q, table, &opts) {
                Ok(r) => r,
                Err(e) => {
                    st.failures.push(format!("{tag}: record: {e}"));
                    continue;
                }
            };
            st.records += 1;
            let expected = trace.to_json();
            let text = log.render();
            let log = match ReplayLog::parse(&text).and_then(|l| l.validate().map(|_| l)) {
                Ok(l) => l,
                Err(e) => {
                    st.failures.push(format!("{tag}: log: {e}"));
                    continue;
                }
            };
            for r in 0..REPLAYS {
                let rseed = 1_000_003 * (seed + 1) + 7919 * r + 1;
                st.replays += 1;
                match run_replay(q, table, &log, rseed, opts.max_steps) {
                    Ok((t, _)) if t.to_json() == expected => {}
                    Ok(_) => st.failures.push(format!("{tag}: replay {r} produced a different trace")),
                    Err(e) => st.failures.push(format!("{tag}: replay {r}: {e}")),
                }
            }
        }
    }
    st
}

pub fn value_determinism(progs: &[&Prepared]) -> CriterionResult {
    let st = determinism_sweep(progs);
    let fast = st.elapsed < Duration::from_secs(300);
    let detail = format!(
        "{} programs, {} recordings, {} replays, {} failures, {:.1}s{}",
        progs.len(),
        st.records,
        st.replays,
        st.failures.len(),
        st.elapsed.as_secs_f64(),
        st.failures.first().map_or(String::new(), |f| format!("; first: {f}"))
    );
    CriterionResult::new(
        1,
        "value determinism",
        progs.len() >= 10 && st.failures.is_empty() && fast,
        detail,
    )
}

// ---------------------------------------------------------------------------
// 2 and 3. oracle-backed completeness and pruning safety

/// An access identified by statement and evaluation slot.
pub type Slot = (SiteId, u32);
pub type SlotPair = (Slot, Slot);

fn ordered(a: Slot, b: Slot) -> SlotPair {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Report pairs keyed by statement and slot; thread entries are ignored so
/// the keys line up with what the oracle observes.
pub fn report_pairs(r: &RaceReport) -> BTreeSet<SlotPair> {
    r.pairs()
        .into_iter()
        .map(|(_, a, b)| ordered((a.site, a.slot), (b.site, b.slot)))
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct OracleRaces {
    /// Races of the program as written.
    pub original: BTreeSet<SlotPair>,
    /// Races of the program after prune-init rewriting, which is what runs.
    pub rewritten: BTreeSet<SlotPair>,
}

fn explore(p: &Program) -> Result<BTreeSet<SlotPair>> {
    let res = explore_exhaustive(p, ORACLE_THREADS, ORACLE_CAP)?;
    Ok(res
        .races
        .into_iter()
        .map(|(a, b)| ordered((a.site, a.slot), (b.site, b.slot)))
        .collect())
}

pub fn oracle_races(progs: &[&Prepared]) -> BTreeMap<String, Result<OracleRaces, String>> {
    progs
        .iter()
        .map(|p| {
            let r = explore(&p.outcome.program)
                .and_then(|original| {
                    Ok(OracleRaces {
                        original,
                        rewritten: explore(p.rewritten())?,
                    })
                })
                .map_err(|e| e.to_string());
            (p.name.clone(), r)
        })
        .collect()
}

pub fn completeness(progs: &[&Prepared], races: &BTreeMap<String, Result<OracleRaces, String>>) -> CriterionResult {
    let mut total = 0;
    let mut misses = Vec::new();
    let mut errors = Vec::new();
    for p in progs {
        let r = match &races[&p.name] {
            Ok(r) => r,
            Err(e) => {
                errors.push(format!("{}: {e}", p.name));
                continue;
            }
        };
        let (_, table) = p.instrumented();
        let covered: BTreeSet<Slot> = table.rows.iter().map(|row| (row.site.clone(), row.slot)).collect();
        for (a, b) in &r.rewritten {
            total += 1;
            if !covered.contains(a) || !covered.contains(b) {
                misses.push(format!("{}: {}/{} x {}/{}", p.name, a.0, a.1, b.0, b.1));
            }
        }
    }
    let detail = format!(
        "{} programs, {} oracle races, {} not instrumented, {} oracle errors{}",
        progs.len(),
        total,
        misses.len(),
        errors.len(),
        misses.first().or(errors.first()).map_or(String::new(), |m| format!("; first: {m}"))
    );
    CriterionResult::new(
        2,
        "oracle races covered by the instrumented sites",
        progs.len() >= 15 && total > 0 && misses.is_empty() && errors.is_empty(),
        detail,
    )
}

fn lock_sites(ledger: &[PruneDecision]) -> BTreeSet<SiteId> {
    ledger
        .iter()
        .filter_map(|d| match &d.action {
            Action::InsertLock { site, .. } => Some(site.clone()),
            _ => None,
        })
        .collect()
}

pub fn pruning_safety(progs: &[&Prepared], races: &BTreeMap<String, Result<OracleRaces, String>>) -> CriterionResult {
    let mut dropped = (0, 0);
    let mut unsafe_drops = Vec::new();
    let mut errors = Vec::new();
    for p in progs {
        let r = match &races[&p.name] {
            Ok(r) => r,
            Err(e) => {
                errors.push(format!("{}: {e}", p.name));
                continue;
            }
        };
        let raw = report_pairs(&p.outcome.raw);
        let refined = report_pairs(p.refined());
        let fin = report_pairs(p.outcome.final_report());
        let locked = lock_sites(p.init_ledger());
        for pair in raw.difference(&refined) {
            dropped.0 += 1;
            // a pair resolved by inserting a lock races only in the original
            let relocked = locked.contains(&pair.0 .0) || locked.contains(&pair.1 .0);
            if r.rewritten.contains(pair) || (!relocked && r.original.contains(pair)) {
                unsafe_drops.push(format!("{}: prune-init dropped {}/{} x {}/{}", p.name, pair.0 .0, pair.0 .1, pair.1 .0, pair.1 .1));
            }
        }
        for pair in refined.difference(&fin) {
            dropped.1 += 1;
            if r.rewritten.contains(pair) {
                unsafe_drops.push(format!("{}: prune-array dropped {}/{} x {}/{}", p.name, pair.0 .0, pair.0 .1, pair.1 .0, pair.1 .1));
            }
        }
    }
    let detail = format!(
        "{} pairs dropped by prune-init, {} by prune-array, {} oracle-confirmed, {} oracle errors{}",
        dropped.0,
        dropped.1,
        unsafe_drops.len(),
        errors.len(),
        unsafe_drops.first().or(errors.first()).map_or(String::new(), |m| format!("; first: {m}"))
    );
    CriterionResult::new(
        3,
        "pruning drops no oracle-confirmed race",
        unsafe_drops.is_empty() && errors.is_empty() && dropped.0 > 0 && dropped.1 > 0,
        detail,
    )
}

// ---------------------------------------------------------------------------
// 4. worked cross-range CSP

fn rc(v: &str, rel: Relation, b: Affine) -> RangeConstraint {
    RangeConstraint::new(v, rel, b)
}

/// The worker side of the worked example. With `after_ivs` the subscript is
/// `j + 10*(2*i + id)`; otherwise it is `j + 10*step` with only `step >= id`.
pub fn worked_side(after_ivs: bool) -> CspSide {
    let k = Affine::constant;
    let v = Affine::var;
    let mut constraints = vec![
        rc("i", Relation::Ge, k(0)),
        rc("i", Relation::Le, k(9)),
        rc("j", Relation::Ge, k(0)),
        rc("j", Relation::Le, k(9)),
        rc("id", Relation::Ge, k(0)),
    ];
    let subscript = if after_ivs {
        v("j").add(&v("i").scale(2).add(&v("id")).scale(10))
    } else {
        constraints.push(rc("step", Relation::Ge, v("id")));
        v("j").add(&v("step").scale(10))
    };
    CspSide { subscript, constraints }
}

#[derive(Debug, Clone)]
pub struct WorkedVerdicts {
    pub literal: CspVerdict,
    pub pre_ivs: CspVerdict,
    /// The literal CSP with the two-thread bound `id <= 1` added.
    pub two_threads: CspVerdict,
    pub literal_csp: CrossRangeCsp,
}

pub fn worked_verdicts() -> WorkedVerdicts {
    let opts = SolverOptions::default();
    let s = worked_side(true);
    let literal_csp = build_cross_range_csp(&s, &s, Some("id"));
    let pre = worked_side(false);
    let mut two = worked_side(true);
    two.constraints.push(rc("id", Relation::Le, Affine::constant(1)));
    WorkedVerdicts {
        literal: solve_csp(&literal_csp, &opts),
        pre_ivs: solve_csp(&build_cross_range_csp(&pre, &pre, Some("id")), &opts),
        two_threads: solve_csp(&build_cross_range_csp(&two, &two, Some("id")), &opts),
        literal_csp,
    }
}

pub fn worked_csp() -> CriterionResult {
    let w = worked_verdicts();
    let witness = match &w.literal {
        CspVerdict::Sat { witness } => format!(
            " (witness {}, re-checks {})",
            witness.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" "),
            check_witness(&w.literal_csp, witness)
        ),
        _ => String::new(),
    };
    let detail = format!(
        "literal CSP {}{witness}; pre-IVS variant {}; with id <= 1 {}",
        w.literal.label(),
        w.pre_ivs.label(),
        w.two_threads.label()
    );
    CriterionResult::new(
        4,
        "worked cross-range CSP",
        w.literal.is_unsat() && !w.pre_ivs.is_unsat(),
        detail,
    )
}

// ---------------------------------------------------------------------------
// 5. solver against brute force

/// A CSP whose every variable has an explicit interval inside [0, 8].
#[derive(Debug, Clone)]
pub struct BoundedCsp {
    pub csp: CrossRangeCsp,
    pub boxes: BTreeMap<String, (i64, i64)>,
}

fn random_affine(rng: &mut ChaCha8Rng, names: &[String], coef: i64, constant: i64) -> Affine {
    let mut a = Affine::constant(rng.random_range(-constant..=constant));
    for n in names {
        let c = rng.random_range(-coef..=coef);
        if c != 0 {
            a = a.add(&Affine::var(n.clone()).scale(c));
        }
    }
    a
}

pub fn random_bounded_csp(rng: &mut ChaCha8Rng) -> BoundedCsp {
    let n = rng.random_range(1..=5usize);
    let names: Vec<String> = (0..n).map(|i| format!("x{}#{}", i / 2, 1 + i % 2)).collect();
    let mut boxes = BTreeMap::new();
    let mut constraints = Vec::new();
    for name in &names {
        let a = rng.random_range(0..=8i64);
        let b = rng.random_range(0..=8i64);
        let (lo, hi) = (a.min(b), a.max(b));
        boxes.insert(name.clone(), (lo, hi));
        constraints.push(rc(name, Relation::Ge, Affine::constant(lo)));
        constraints.push(rc(name, Relation::Le, Affine::constant(hi)));
    }
    for _ in 0..rng.random_range(0..=2usize) {
        let v = rng.random_range(0..n);
        let rel = [Relation::Ge, Relation::Le, Relation::Eq, Relation::Ne][rng.random_range(0..4usize)];
        let mut bound = random_affine(rng, &names, 2, 4);
        bound.terms.remove(&names[v]);
        constraints.push(rc(&names[v], rel, bound));
    }
    let distinctness = (n >= 2 && rng.random_bool(0.3)).then(|| (names[0].clone(), names[1].clone()));
    if let Some((x, y)) = &distinctness {
        constraints.push(rc(x, Relation::Ne, Affine::var(y.clone())));
    }
    let csp = CrossRangeCsp {
        objective: (random_affine(rng, &names, 3, 6), random_affine(rng, &names, 3, 0)),
        constraints,
        distinctness,
        unbounded: BTreeSet::new(),
    };
    BoundedCsp { csp, boxes }
}

fn eval(a: &Affine, env: &BTreeMap<String, i64>) -> i64 {
    a.constant + a.terms.iter().map(|(v, c)| c * env[v]).sum::<i64>()
}

fn satisfied(csp: &CrossRangeCsp, env: &BTreeMap<String, i64>) -> bool {
    eval(&csp.objective.0, env) == eval(&csp.objective.1, env)
        && csp.constraints.iter().all(|c| {
            let d = eval(&c.variable, env) - eval(&c.bound, env);
            match c.relation {
                Relation::Ge => d >= 0,
                Relation::Le => d <= 0,
                Relation::Eq => d == 0,
                Relation::Ne => d != 0,
            }
        })
        && csp.distinctness.as_ref().is_none_or(|(x, y)| env[x] != env[y])
}

/// Exhaustive enumeration of the boxes.
pub fn brute_force(b: &BoundedCsp) -> bool {
    let names: Vec<&String> = b.boxes.keys().collect();
    let mut env: BTreeMap<String, i64> = names.iter().map(|n| ((*n).clone(), b.boxes[*n].0)).collect();
    loop {
        if satisfied(&b.csp, &env) {
            return true;
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == names.len() {
                return false;
            }
            let (lo, hi) = b.boxes[names[i]];
            let slot = env.get_mut(names[i]).expect("named");
            if *slot < hi {
                *slot += 1;
                break;
            }
            *slot = lo;
            i += 1;
        }
    }
}

pub fn solver_equivalence(count: usize, seed: u64) -> CriterionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = SolverOptions::default();
    let mut agree = 0;
    let mut sat = 0;
    let mut problems = Vec::new();
    for i in 0..count {
        let b = random_bounded_csp(&mut rng);
        let expect = brute_force(&b);
        let ok = match solve_csp(&b.csp, &opts) {
            CspVerdict::Sat { witness } => {
                sat += 1;
                let valid = check_witness(&b.csp, &witness) && satisfied(&b.csp, &witness);
                if !valid {
                    problems.push(format!("case {i}: witness does not satisfy {}", b.csp));
                }
                expect && valid
            }
            CspVerdict::Unsat => !expect,
            CspVerdict::Unknown { reason } => {
                problems.push(format!("case {i}: unknown ({reason})"));
                false
            }
        };
        if ok {
            agree += 1;
        } else if problems.len() < 3 {
            problems.push(format!("case {i}: disagrees with enumeration on {}", b.csp));
        }
    }
    let detail = format!(
        "{agree}/{count} verdicts agree ({sat} SAT, {} UNSAT){}",
        count - sat,
        problems.first().map_or(String::new(), |p| format!("; first: {p}"))
    );
    CriterionResult::new(5, "solver matches brute force", agree == count, detail)
}

// ---------------------------------------------------------------------------
// 6. pruning efficacy and goldens

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelCounts {
    /// Warnings, pairs and sites after analyze, prune-init, prune-array.
    pub stages: Vec<(usize, usize, usize)>,
    pub traced_sites: usize,
    pub table_rows: usize,
    /// Logged events of one 4-thread, seed-0 run with the pruned and the
    /// unpruned site set.
    pub events: u64,
    pub unpruned_events: u64,
}

pub const EFFICACY_THREADS: usize = 4;

pub fn kernel_counts(p: &Prepared) -> Result<KernelCounts> {
    let o = &p.outcome;
    let stages = [&o.raw, p.refined(), o.final_report()]
        .iter()
        .map(|r| (r.counts.warnings, r.counts.pairs, r.counts.sites))
        .collect();
    let (q, table) = p.instrumented();
    let opts = RunOptions {
        threads: EFFICACY_THREADS,
        seed: 0,
        ..RunOptions::default()
    };
    let (_, stats) = run_free(q, Some(table), &opts)?;
    let (uq, ut) = racx::instrument::instrument(&o.program, &o.raw)?;
    let (_, ustats) = run_free(&uq, Some(&ut), &opts)?;
    Ok(KernelCounts {
        stages,
        traced_sites: table.sites().len(),
        table_rows: table.rows.len(),
        events: stats.logged_events(),
        unpruned_events: ustats.logged_events(),
    })
}

pub fn goldens_path(corpus: &Path) -> PathBuf {
    corpus.join("goldens").join("counts.json")
}

pub fn load_goldens(corpus: &Path) -> Option<BTreeMap<String, KernelCounts>> {
    let text = fs::read_to_string(goldens_path(corpus)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Measures every kernel and writes the golden counts file.
pub fn freeze_goldens(corpus: &Path) -> Result<BTreeMap<String, KernelCounts>> {
    let mut out = BTreeMap::new();
    for path in kernel_paths(corpus) {
        let p = Prepared::load(&path)?;
        out.insert(p.name.clone(), kernel_counts(&p)?);
    }
    let path = goldens_path(corpus);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(&path, serde_json::to_string_pretty(&out)? + "\n")?;
    Ok(out)
}

pub fn pruning_efficacy(kernels: &[Prepared], corpus: &Path) -> CriterionResult {
    let goldens = load_goldens(corpus);
    let mut notes = Vec::new();
    let mut ok = goldens.is_some();
    if goldens.is_none() {
        notes.push("goldens missing".to_string());
    }
    for name in SCIENTIFIC {
        let Some(p) = kernels.iter().find(|k| k.name == name) else {
            ok = false;
            notes.push(format!("{name}: missing"));
            continue;
        };
        let c = match kernel_counts(p) {
            Ok(c) => c,
            Err(e) => {
                ok = false;
                notes.push(format!("{name}: {e}"));
                continue;
            }
        };
        let (raw, fin) = (c.stages[0].2, c.stages[2].2);
        let pct = reduction(raw, fin);
        let mut note = format!("{name} sites {raw}->{fin} (-{pct:.1}%)");
        ok &= pct >= 40.0;
        if name == "lu" {
            let factor = c.unpruned_events as f64 / c.events.max(1) as f64;
            note += &format!(", events {}->{} ({factor:.1}x)", c.unpruned_events, c.events);
            ok &= factor >= 10.0;
        }
        if let Some(g) = goldens.as_ref() {
            if g.get(name) != Some(&c) {
                ok = false;
                note += ", differs from golden";
            }
        }
        notes.push(note);
    }
    CriterionResult::new(6, "pruning efficacy", ok, notes.join("; "))
}

// ---------------------------------------------------------------------------
// 7. recorded events equal counted events; pruning lowers record slowdown

pub fn event_accounting(progs: &[&Prepared]) -> (usize, Vec<String>) {
    let mut checked = 0;
    let mut bad = Vec::new();
    for p in progs {
        let (q, table) = p.instrumented();
        for threads in [2, 4] {
            for seed in 0..4 {
                let opts = RunOptions {
                    threads,
                    seed,
                    ..RunOptions::default()
                };
                let counted = run_free(q, Some(table), &opts);
                let recorded = run_record(q, table, &opts);
                checked += 1;
                match (counted, recorded) {
                    (Ok((_, f)), Ok((_, log, _))) => {
                        let n = log.events.len() as u64;
                        if n != f.traced_accesses + f.sync_events {
                            bad.push(format!(
                                "{} threads={threads} seed={seed}: {n} logged vs {} traced + {} sync",
                                p.name, f.traced_accesses, f.sync_events
                            ));
                        }
                    }
                    (Err(e), _) | (_, Err(e)) => bad.push(format!("{}: {e}", p.name)),
                }
            }
        }
    }
    (checked, bad)
}

pub fn overhead_substitute(progs: &[&Prepared], kernels: &[Prepared]) -> CriterionResult {
    let (checked, bad) = event_accounting(progs);
    let mut ok = bad.is_empty();
    let mut notes = vec![format!("{checked} runs, {} count mismatches", bad.len())];
    if let Some(b) = bad.first() {
        notes.push(b.clone());
    }
    let cfg = BenchConfig {
        threads: EFFICACY_THREADS,
        trials: 5,
        warmup: 1,
        ..BenchConfig::default()
    };
    for name in SCIENTIFIC {
        let Some(p) = kernels.iter().find(|k| k.name == name) else {
            ok = false;
            notes.push(format!("{name}: missing"));
            continue;
        };
        match bench(&p.outcome.program, &cfg) {
            Ok(r) => {
                ok &= r.slowdown() < r.unpruned_slowdown();
                notes.push(format!(
                    "{name} record slowdown {:.3}x pruned vs {:.3}x unpruned",
                    r.slowdown(),
                    r.unpruned_slowdown()
                ));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("{name}: {e}"));
            }
        }
    }
    CriterionResult::new(7, "event accounting and record slowdown", ok, notes.join("; "))
}

// ---------------------------------------------------------------------------
// 8. log integrity under mutation

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationOutcome {
    /// Replayed, and every logged value matches what the replay read.
    Replayed,
    Rejected,
    /// Replayed although some logged value differs from the value read.
    SilentlyAccepted,
    /// Failed with an error other than a divergence.
    OtherError,
}

/// The value each thread's traced accesses observed, in program order.
fn traced_values(trace: &ExecutionTrace, table: &SiteTable) -> BTreeMap<usize, Vec<(u32, i64)>> {
    let rows: BTreeMap<(String, u32), u32> = table
        .rows
        .iter()
        .map(|r| ((format!("{}#{}", r.site.function, r.site.ordinal), r.slot), r.index))
        .collect();
    trace
        .threads
        .iter()
        .map(|t| {
            let vals = t
                .accesses
                .iter()
                .filter_map(|a| rows.get(&(a.site.clone(), a.slot)).map(|&row| (row, a.value)))
                .collect();
            (t.tid, vals)
        })
        .collect()
}

fn logged_values(log: &ReplayLog) -> BTreeMap<usize, Vec<(u32, i64)>> {
    let mut per: BTreeMap<usize, Vec<(u64, u32, i64)>> = BTreeMap::new();
    for e in &log.events {
        if let LogEvent::Race { tid, ts, site, value, .. } = e {
            per.entry(*tid).or_default().push((*ts, *site, *value));
        }
    }
    per.into_iter()
        .map(|(t, mut v)| {
            v.sort();
            (t, v.into_iter().map(|(_, s, x)| (s, x)).collect())
        })
        .collect()
}

pub fn classify_replay(q: &Program, table: &SiteTable, log: &ReplayLog, seed: u64) -> MutationOutcome {
    match run_replay(q, table, log, seed, RunOptions::default().max_steps) {
        Ok((t, _)) => {
            let seen = traced_values(&t, table);
            let logged = logged_values(log);
            let matches = logged
                .iter()
                .all(|(tid, vals)| seen.get(tid).is_some_and(|s| s == vals));
            if matches {
                MutationOutcome::Replayed
            } else {
                MutationOutcome::SilentlyAccepted
            }
        }
        Err(e) if e.exit_code() == 3 => MutationOutcome::Rejected,
        Err(Error::Divergence { .. }) => MutationOutcome::Rejected,
        Err(_) => MutationOutcome::OtherError,
    }
}

/// Swaps the timestamps of the `k`-th pair of same-kind events logged by
/// different threads.
pub fn swap_timestamps(log: &ReplayLog, k: usize) -> Option<ReplayLog> {
    let mut out = log.clone();
    let idx: Vec<(usize, usize)> = (0..log.events.len())
        .flat_map(|i| (i + 1..log.events.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| {
            let (a, b) = (&log.events[i], &log.events[j]);
            a.kind() == b.kind() && a.tid() != b.tid()
        })
        .take(k + 1)
        .collect();
    let &(i, j) = idx.get(k)?;
    let (ti, tj) = (out.events[i].ts(), out.events[j].ts());
    *out.events[i].ts_mut() = tj;
    *out.events[j].ts_mut() = ti;
    Some(out)
}

/// Changes the value of the `k`-th race event.
pub fn alter_value(log: &ReplayLog, k: usize) -> Option<ReplayLog> {
    let mut out = log.clone();
    let e = out.events.iter_mut().filter(|e| e.kind() == EventKind::Race).nth(k)?;
    if let LogEvent::Race { value, .. } = e {
        *value = value.wrapping_add(1);
    }
    Some(out)
}

#[derive(Debug, Default, Clone)]
pub struct IntegrityStats {
    pub logs: usize,
    pub invalid: Vec<String>,
    pub swapped: BTreeMap<&'static str, usize>,
    pub altered: BTreeMap<&'static str, usize>,
    pub failures: Vec<String>,
}

fn label(o: MutationOutcome) -> &'static str {
    match o {
        MutationOutcome::Replayed => "replayed",
        MutationOutcome::Rejected => "rejected",
        MutationOutcome::SilentlyAccepted => "silently-accepted",
        MutationOutcome::OtherError => "other-error",
    }
}

pub fn integrity_sweep(progs: &[&Prepared], seeds: u64) -> IntegrityStats {
    let mut st = IntegrityStats::default();
    for p in progs {
        let (q, table) = p.instrumented();
        for threads in [2, 4] {
            for seed in 0..seeds {
                let opts = RunOptions {
                    threads,
                    seed,
                    ..RunOptions::default()
                };
                let Ok((_, log, _)) = run_record(q, table, &opts) else {
                    st.failures.push(format!("{}: record failed", p.name));
                    continue;
                };
                st.logs += 1;
                if let Err(e) = log.validate() {
                    st.invalid.push(format!("{} threads={threads} seed={seed}: {e}", p.name));
                }
                let tag = format!("{} threads={threads} seed={seed}", p.name);
                for k in [0, 3] {
                    if let Some(m) = swap_timestamps(&log, k) {
                        let o = classify_replay(q, table, &m, seed + 17);
                        *st.swapped.entry(label(o)).or_default() += 1;
                        if matches!(o, MutationOutcome::SilentlyAccepted | MutationOutcome::OtherError) {
                            st.failures.push(format!("{tag}: swap {k}: {}", label(o)));
                        }
                    }
                    if let Some(m) = alter_value(&log, k) {
                        let o = classify_replay(q, table, &m, seed + 17);
                        *st.altered.entry(label(o)).or_default() += 1;
                        if o != MutationOutcome::Rejected {
                            st.failures.push(format!("{tag}: altered value {k}: {}", label(o)));
                        }
                    }
                }
            }
        }
    }
    st
}

fn fmt_counts(m: &BTreeMap<&'static str, usize>) -> String {
    m.iter().map(|(k, v)| format!("{v} {k}")).collect::<Vec<_>>().join(", ")
}

pub fn log_integrity(progs: &[&Prepared]) -> CriterionResult {
    let st = integrity_sweep(progs, 5);
    let detail = format!(
        "{} logs, {} invalid; swapped timestamps: {}; altered values: {}{}",
        st.logs,
        st.invalid.len(),
        fmt_counts(&st.swapped),
        fmt_counts(&st.altered),
        st.invalid
            .first()
            .or(st.failures.first())
            .map_or(String::new(), |f| format!("; first: {f}"))
    );
    let exercised = st.swapped.values().sum::<usize>() > 0 && st.altered.values().sum::<usize>() > 0;
    CriterionResult::new(
        8,
        "log integrity",
        st.invalid.is_empty() && st.failures.is_empty() && exercised,
        detail,
    )
}
