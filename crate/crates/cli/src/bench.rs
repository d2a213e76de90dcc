//! Wall-clock comparison of free, record and replay runs.

use std::fmt::Write as _;
use std::time::Instant;

use racx::frontend::Program;
use racx::instrument::{instrument, SiteTable};
use racx::lockset::analyze;
use racx::prune_array::{prune_array_warnings, SolverOptions};
use racx::prune_init::prune_init;
use racx::runtime::{run_free, run_record, run_replay, RunOptions, RunStats};
use racx::Result;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub threads: usize,
    pub seed: u64,
    pub trials: usize,
    pub warmup: usize,
    pub solver: SolverOptions,
    pub max_steps: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            threads: 4,
            seed: 0,
            trials: 5,
            warmup: 1,
            solver: SolverOptions::default(),
            max_steps: RunOptions::default().max_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Events {
    pub sync: u64,
    pub race: u64,
}

impl Events {
    fn of(s: &RunStats) -> Self {
        Events {
            sync: s.sync_events,
            race: s.traced_accesses,
        }
    }

    pub fn total(&self) -> u64 {
        self.sync + self.race
    }
}

/// Timings in milliseconds, averaged over the measured trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub threads: usize,
    pub seed: u64,
    pub trials: usize,
    pub warmup: usize,
    pub free_ms: f64,
    /// Record and replay with the pruned report.
    pub record_ms: f64,
    pub replay_ms: f64,
    /// Record with every raw warning instrumented.
    pub unpruned_record_ms: f64,
    pub record_overhead_pct: f64,
    pub replay_overhead_pct: f64,
    pub unpruned_record_overhead_pct: f64,
    pub free_events: Events,
    pub record_events: Events,
    pub replay_events: Events,
    pub unpruned_record_events: Events,
    /// Per measured trial: free, record, replay, unpruned record.
    pub samples_ms: Vec<[f64; 4]>,
}

impl BenchReport {
    /// Record time over free time, after pruning.
    pub fn slowdown(&self) -> f64 {
        self.record_ms / self.free_ms
    }

    pub fn unpruned_slowdown(&self) -> f64 {
        self.unpruned_record_ms / self.free_ms
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "threads={} seed={} trials={} warmup={}\n\n{:<16} {:>10} {:>10} {:>8} {:>8}\n",
            self.threads, self.seed, self.trials, self.warmup, "mode", "mean ms", "overhead", "sync", "race"
        );
        let rows = [
            ("free", self.free_ms, None, self.free_events),
            ("record", self.record_ms, Some(self.record_overhead_pct), self.record_events),
            ("replay", self.replay_ms, Some(self.replay_overhead_pct), self.replay_events),
            (
                "record-unpruned",
                self.unpruned_record_ms,
                Some(self.unpruned_record_overhead_pct),
                self.unpruned_record_events,
            ),
        ];
        for (name, ms, pct, ev) in rows {
            let pct = pct.map_or("-".to_string(), |p| format!("{p:.1}%"));
            let _ = writeln!(s, "{name:<16} {ms:>10.3} {pct:>10} {:>8} {:>8}", ev.sync, ev.race);
        }
        s
    }
}

fn overhead(base: f64, t: f64) -> f64 {
    100.0 * (t - base) / base
}

struct Instrumented {
    program: Program,
    table: SiteTable,
}

fn time<T>(f: impl FnOnce() -> Result<T>) -> Result<(f64, T)> {
    let start = Instant::now();
    let out = f()?;
    Ok((start.elapsed().as_secs_f64() * 1e3, out))
}

/// Measures `p` in every mode. Each trial runs the modes back to back so
/// that drift in machine load affects them alike.
pub fn bench(p: &Program, cfg: &BenchConfig) -> Result<BenchReport> {
    let raw = analyze(p)?;
    let (q, refined, _) = prune_init(p, &raw)?;
    let (fin, _) = prune_array_warnings(&q, &refined, &cfg.solver);
    let (pq, pt) = instrument(&q, &fin)?;
    let pruned = Instrumented { program: pq, table: pt };
    let (uq, ut) = instrument(p, &raw)?;
    let unpruned = Instrumented { program: uq, table: ut };
    let opts = RunOptions {
        threads: cfg.threads,
        seed: cfg.seed,
        max_steps: cfg.max_steps,
    };
    let record = |ins: &Instrumented| {
        time(|| {
            let (_, log, stats) = run_record(&ins.program, &ins.table, &opts)?;
            let text = log.render();
            Ok((log, stats, text.len()))
        })
    };

    let trials = cfg.trials.max(1);
    let mut samples_ms = Vec::with_capacity(trials);
    let mut events = None;
    for i in 0..cfg.warmup + trials {
        let (free_ms, (_, free)) = time(|| run_free(p, None, &opts))?;
        let (rec_ms, (log, rec, _)) = record(&pruned)?;
        let (rep_ms, (_, rep)) = time(|| run_replay(&pruned.program, &pruned.table, &log, cfg.seed ^ 0x5eed, cfg.max_steps))?;
        let (un_ms, (_, un, _)) = record(&unpruned)?;
        if i >= cfg.warmup {
            samples_ms.push([free_ms, rec_ms, rep_ms, un_ms]);
        }
        events = Some([free, rec, rep, un].map(|s| Events::of(&s)));
    }
    let mean = |i: usize| samples_ms.iter().map(|s| s[i]).sum::<f64>() / trials as f64;
    let [free_ms, record_ms, replay_ms, unpruned_record_ms] = [0, 1, 2, 3].map(mean);
    let [free_events, record_events, replay_events, unpruned_record_events] = events.expect("at least one trial");
    Ok(BenchReport {
        threads: cfg.threads,
        seed: cfg.seed,
        trials,
        warmup: cfg.warmup,
        free_ms,
        record_ms,
        replay_ms,
        unpruned_record_ms,
        record_overhead_pct: overhead(free_ms, record_ms),
        replay_overhead_pct: overhead(free_ms, replay_ms),
        unpruned_record_overhead_pct: overhead(free_ms, unpruned_record_ms),
        free_events,
        record_events,
        replay_events,
        unpruned_record_events,
        samples_ms,
    })
}
