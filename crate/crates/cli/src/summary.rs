//! Before/after counts for each pruning stage and dynamic event counts.

use std::fmt::Write as _;

use racx::lockset::Counts;
use serde::Serialize;

use crate::pipeline::{Outcome, PipelineConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageRow {
    pub stage: String,
    pub warnings: usize,
    pub pairs: usize,
    pub sites: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DynamicRow {
    pub seed: u64,
    pub threads: usize,
    pub sync_events: u64,
    pub race_events: u64,
    pub shared_accesses: u64,
    /// Logged events had every raw warning been instrumented.
    pub unpruned_events: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub program: String,
    pub stages: Vec<StageRow>,
    pub traced_sites: Option<usize>,
    pub dynamic: Vec<DynamicRow>,
}

fn row(stage: &str, c: Counts) -> StageRow {
    StageRow {
        stage: stage.to_string(),
        warnings: c.warnings,
        pairs: c.pairs,
        sites: c.sites,
    }
}

/// Percentage drop from `before` to `after`.
pub fn reduction(before: usize, after: usize) -> f64 {
    if before == 0 {
        0.0
    } else {
        100.0 * (before as f64 - after as f64) / before as f64
    }
}

impl Summary {
    pub fn of(out: &Outcome, cfg: &PipelineConfig) -> Summary {
        let mut stages = vec![row("analyze", out.raw.counts)];
        if let Some((_, r, _)) = &out.init {
            stages.push(row("prune-init", r.counts));
        }
        if let Some((r, _)) = &out.array {
            stages.push(row("prune-array", r.counts));
        }
        Summary {
            program: cfg.input.display().to_string(),
            stages,
            traced_sites: out.instrumented.as_ref().map(|(_, t)| t.sites().len()),
            dynamic: out
                .runs
                .iter()
                .map(|r| DynamicRow {
                    seed: r.seed,
                    threads: cfg.threads,
                    sync_events: r.stats.sync_events,
                    race_events: r.stats.traced_accesses,
                    shared_accesses: r.stats.shared_accesses,
                    unpruned_events: r.unpruned.map(|s| s.logged_events()),
                })
                .collect(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!("program: {}\n\n", self.program);
        let _ = writeln!(s, "{:<12} {:>9} {:>7} {:>7} {:>9}", "stage", "warnings", "pairs", "sites", "sites -%");
        let first = self.stages.first().map_or(0, |r| r.sites);
        for r in &self.stages {
            let _ = writeln!(
                s,
                "{:<12} {:>9} {:>7} {:>7} {:>8.1}%",
                r.stage,
                r.warnings,
                r.pairs,
                r.sites,
                reduction(first, r.sites)
            );
        }
        if let Some(n) = self.traced_sites {
            let _ = writeln!(s, "\ntraced sites: {n}");
        }
        if !self.dynamic.is_empty() {
            let _ = writeln!(
                s,
                "\n{:>6} {:>7} {:>6} {:>6} {:>9} {:>9}",
                "seed", "threads", "sync", "race", "shared", "unpruned"
            );
            for d in &self.dynamic {
                let unpruned = d.unpruned_events.map_or("-".to_string(), |u| u.to_string());
                let _ = writeln!(
                    s,
                    "{:>6} {:>7} {:>6} {:>6} {:>9} {:>9}",
                    d.seed, d.threads, d.sync_events, d.race_events, d.shared_accesses, unpruned
                );
            }
        }
        s
    }
}
