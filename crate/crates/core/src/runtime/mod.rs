//! Execution of MTC programs: free (seeded), record and replay modes, plus
//! the exhaustive interleaving oracle.

pub mod compile;
pub mod log;
pub mod machine;
pub mod oracle;

use std::collections::{BTreeMap, VecDeque};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::frontend::{AccessKind, Program};
use crate::instrument::SiteTable;
use crate::{program_digest, Error, Result};
use compile::{compile, Code, Op};
pub use log::{EventKind, LogEvent, ReplayLog};
use machine::{Budget, Event, State, SyncOp};
pub use oracle::{explore_exhaustive, FinalState, OracleResult, RaceAccess};

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub threads: usize,
    pub seed: u64,
    /// Cap on executed operations.
    pub max_steps: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            threads: 2,
            seed: 0,
            max_steps: 200_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceAccess {
    /// `function#ordinal`.
    pub site: String,
    pub slot: u32,
    pub kind: AccessKind,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadTrace {
    pub tid: usize,
    pub entry: String,
    pub accesses: Vec<TraceAccess>,
    pub output: Vec<i64>,
}

/// Everything observable about one execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub threads: Vec<ThreadTrace>,
    pub memory: BTreeMap<String, Vec<i64>>,
}

impl ExecutionTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    /// Visible (schedulable) steps.
    pub steps: u64,
    /// All executed operations.
    pub ops: u64,
    /// Logged synchronization operations.
    pub sync_events: u64,
    pub traced_accesses: u64,
    pub shared_accesses: u64,
}

impl RunStats {
    /// Events a recorder logs for this run.
    pub fn logged_events(&self) -> u64 {
        self.sync_events + self.traced_accesses
    }
}

/// Copy of `p` with every `@trace` annotation removed.
pub fn strip_traces(p: &Program) -> Program {
    let mut q = p.clone();
    for f in &mut q.functions {
        f.walk_mut(&mut |s| s.traces.clear());
    }
    q
}

fn code_for(p: &Program, table: Option<&SiteTable>) -> Result<Code> {
    match table {
        Some(t) => {
            t.check(p)?;
            compile(p, Some(t))
        }
        None => compile(&strip_traces(p), None),
    }
}

/// Runs `p` under the seeded scheduler. With a site table the traced
/// accesses are counted (not logged); without one annotations are ignored.
pub fn run_free(p: &Program, table: Option<&SiteTable>, opts: &RunOptions) -> Result<(ExecutionTrace, RunStats)> {
    let code = code_for(p, table)?;
    let mut mode = Mode::Free;
    let (trace, stats) = drive(&code, opts.threads, opts.seed, opts.max_steps, &mut mode)?;
    Ok((trace, stats))
}

/// Runs `p` exactly as `run_free` would and logs every synchronization
/// operation and traced access.
pub fn run_record(
    p: &Program,
    table: &SiteTable,
    opts: &RunOptions,
) -> Result<(ExecutionTrace, ReplayLog, RunStats)> {
    let code = code_for(p, Some(table))?;
    let mut mode = Mode::Record {
        events: Vec::new(),
        clocks: [0, 0],
    };
    let (trace, stats) = drive(&code, opts.threads, opts.seed, opts.max_steps, &mut mode)?;
    let Mode::Record { events, .. } = mode else {
        unreachable!()
    };
    let log = ReplayLog {
        digest: table.digest.clone(),
        seed: opts.seed,
        threads: opts.threads,
        events,
    };
    Ok((trace, log, stats))
}

/// Re-executes `p` enforcing the order in `log`; scheduling that the log
/// leaves open is drawn from `seed`.
pub fn run_replay(
    p: &Program,
    table: &SiteTable,
    log: &ReplayLog,
    seed: u64,
    max_steps: u64,
) -> Result<(ExecutionTrace, RunStats)> {
    let digest = program_digest(p);
    if log.digest != digest {
        return Err(Error::Stale(format!(
            "log digest {} does not match program digest {digest}",
            log.digest
        )));
    }
    log.validate()?;
    let code = code_for(p, Some(table))?;
    let mut queues: Vec<[VecDeque<usize>; 2]> = Vec::new();
    for (i, e) in log.events.iter().enumerate() {
        if e.tid() >= queues.len() {
            queues.resize_with(e.tid() + 1, Default::default);
        }
        queues[e.tid()][kind_index(e.kind())].push_back(i);
    }
    let mut mode = Mode::Replay {
        log,
        queues,
        clocks: [0, 0],
    };
    let (trace, stats) = drive(&code, log.threads, seed, max_steps, &mut mode)?;
    let Mode::Replay { queues, .. } = mode else {
        unreachable!()
    };
    for (tid, q) in queues.iter().enumerate() {
        let left: usize = q.iter().map(VecDeque::len).sum();
        if left > 0 {
            let first = q.iter().filter_map(|k| k.front()).min().copied().expect("non-empty");
            return Err(Error::Divergence {
                thread: tid,
                site: "end of run".into(),
                icount: log.events[first].icount(),
                detail: format!("{left} logged events were never reached"),
            });
        }
    }
    Ok((trace, stats))
}

fn kind_index(k: EventKind) -> usize {
    match k {
        EventKind::Sync => 0,
        EventKind::Race => 1,
    }
}

enum Mode<'a> {
    Free,
    Record {
        events: Vec<LogEvent>,
        clocks: [u64; 2],
    },
    Replay {
        log: &'a ReplayLog,
        /// Per thread, per kind: indices of its pending events.
        queues: Vec<[VecDeque<usize>; 2]>,
        clocks: [u64; 2],
    },
}

/// The kind of log event `op` produces, if any. Joins are never logged:
/// a join completes only after its target finished, whatever the schedule.
fn logged_kind(code: &Code, op: &Op) -> Option<EventKind> {
    match op {
        Op::LoadG { tag, .. } | Op::LoadA { tag, .. } | Op::StoreG { tag, .. } | Op::StoreA { tag, .. } => {
            tag.trace.map(|_| EventKind::Race)
        }
        Op::Spawn { .. } => code.log_spawns.then_some(EventKind::Sync),
        Op::Lock(_)
        | Op::Unlock(_)
        | Op::Barrier(_)
        | Op::Signal(_)
        | Op::Broadcast(_)
        | Op::WaitRelease { .. } => Some(EventKind::Sync),
        _ => None,
    }
}

impl Mode<'_> {
    /// In replay, whether `tid` (poised and enabled) may take its step now.
    /// A poised operation that does not match the thread's next logged event
    /// is a divergence.
    fn turn(&self, code: &Code, state: &State, tid: usize) -> Result<bool> {
        let Mode::Replay { log, queues, clocks } = self else {
            return Ok(true);
        };
        let op = state.poised(code, tid).expect("poised");
        let Some(kind) = logged_kind(code, op) else {
            return Ok(true);
        };
        let t = &state.threads[tid];
        let diverge = |detail: String| Error::Divergence {
            thread: tid,
            site: state.site_of(code, tid),
            icount: t.icount,
            detail,
        };
        let next = queues.get(tid).and_then(|q| q[kind_index(kind)].front());
        let Some(&i) = next else {
            return Err(diverge(format!("no logged {kind:?} event left for this thread")));
        };
        let ev = &log.events[i];
        if ev.icount() != t.icount {
            return Err(diverge(format!("next logged event is at icount {}", ev.icount())));
        }
        match ev {
            LogEvent::Race { site, .. } => {
                let row = op.tag().and_then(|g| g.trace).expect("traced");
                if *site != row {
                    return Err(diverge(format!("expected traced site {site}, reached {row}")));
                }
            }
            LogEvent::Sync { op: name, object, .. } => {
                let (sop, obj) = SyncOp::of(op, &t.stack).expect("sync op");
                let here = sop.object_name(code, obj);
                if name != sop.as_str() || *object != here {
                    return Err(diverge(format!(
                        "expected {name}:{object}, reached {}:{here}",
                        sop.as_str()
                    )));
                }
            }
        }
        Ok(clocks[kind_index(kind)] + 1 == ev.ts())
    }

    /// Logs or audits `event`, which `tid` performed at instruction count
    /// `icount` in statement `stmt`.
    fn after(
        &mut self,
        code: &Code,
        tid: usize,
        icount: u64,
        stmt: u32,
        logged: EventKind,
        event: &Event,
    ) -> Result<()> {
        match self {
            Mode::Free => {}
            Mode::Record { events, clocks } => {
                let k = kind_index(logged);
                clocks[k] += 1;
                let ts = clocks[k];
                events.push(match *event {
                    Event::Sync { op, object } => LogEvent::Sync {
                        tid,
                        icount,
                        ts,
                        op: op.as_str().to_string(),
                        object: op.object_name(code, object),
                    },
                    Event::Access { tag, value, .. } => LogEvent::Race {
                        tid,
                        icount,
                        ts,
                        site: tag.trace.expect("traced"),
                        value,
                    },
                    Event::Print => unreachable!("print is not logged"),
                });
            }
            Mode::Replay { log, queues, clocks } => {
                let k = kind_index(logged);
                let i = queues[tid][k].pop_front().expect("turn checked");
                clocks[k] += 1;
                if let (LogEvent::Race { value: logged, .. }, Event::Access { value, .. }) = (&log.events[i], event) {
                    if logged != value {
                        return Err(Error::Divergence {
                            thread: tid,
                            site: code.sites[stmt as usize].to_string(),
                            icount,
                            detail: format!("value audit: logged {logged}, observed {value}"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

fn drive(code: &Code, threads: usize, seed: u64, max_steps: u64, mode: &mut Mode) -> Result<(ExecutionTrace, RunStats)> {
    if threads == 0 {
        return Err(Error::Runtime("thread count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut budget = Budget::new(max_steps);
    let mut state = State::new(code, threads, &mut budget)?;
    let mut stats = RunStats::default();
    let mut accesses: Vec<Vec<(u32, u32, AccessKind, i64)>> = Vec::new();
    let mut enabled = Vec::new();
    loop {
        if state.all_finished() {
            break;
        }
        enabled.clear();
        for tid in 0..state.threads.len() {
            if state.enabled(code, tid) && mode.turn(code, &state, tid)? {
                enabled.push(tid);
            }
        }
        if enabled.is_empty() {
            if let Mode::Replay { .. } = mode {
                // a faithful log never stalls; the recorded run would have deadlocked
                let tid = state
                    .threads
                    .iter()
                    .position(|t| t.status != machine::Status::Finished)
                    .expect("unfinished thread");
                return Err(Error::Divergence {
                    thread: tid,
                    site: state.site_of(code, tid),
                    icount: state.threads[tid].icount,
                    detail: format!("replay cannot proceed: {}", state.deadlock_error(code)),
                });
            }
            return Err(state.deadlock_error(code));
        }
        let tid = enabled[rng.random_range(0..enabled.len())];
        let (icount, stmt) = (state.threads[tid].icount, state.threads[tid].current);
        let logged = logged_kind(code, state.poised(code, tid).expect("poised"));
        let event = state.step(code, tid, &mut budget)?;
        stats.steps += 1;
        match event {
            Event::Access { tag, kind, value } => {
                stats.shared_accesses += 1;
                if tag.trace.is_some() {
                    stats.traced_accesses += 1;
                }
                if accesses.len() <= tid {
                    accesses.resize_with(tid + 1, Vec::new);
                }
                accesses[tid].push((tag.stmt, tag.slot, kind, value));
            }
            Event::Sync { .. } | Event::Print => {}
        }
        if let Some(k) = logged {
            if k == EventKind::Sync {
                stats.sync_events += 1;
            }
            mode.after(code, tid, icount, stmt, k, &event)?;
        }
    }
    stats.ops = budget.used;
    accesses.resize_with(state.threads.len(), Vec::new);
    let trace = ExecutionTrace {
        threads: state
            .threads
            .iter()
            .zip(accesses)
            .map(|(t, acc)| ThreadTrace {
                tid: t.tid,
                entry: code.functions[t.entry as usize].name.clone(),
                accesses: acc
                    .into_iter()
                    .map(|(stmt, slot, kind, value)| {
                        let s = &code.sites[stmt as usize];
                        TraceAccess {
                            site: format!("{}#{}", s.function, s.ordinal),
                            slot,
                            kind,
                            value,
                        }
                    })
                    .collect(),
                output: t.output.clone(),
            })
            .collect(),
        memory: code
            .globals
            .iter()
            .zip(&state.memory)
            .map(|((name, _, _), m)| (name.clone(), m.clone()))
            .collect(),
    };
    Ok((trace, stats))
}
