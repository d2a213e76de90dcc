//! Stage orchestration: analyze, prune, instrument, record, replay.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use racx::frontend::{parse_program, print_program, Program};
use racx::instrument::{instrument, SiteTable};
use racx::lockset::{analyze, RaceReport};
use racx::prune_array::{prune_array_warnings, LedgerEntry, SolverOptions};
use racx::prune_init::{prune_init, PruneDecision};
use racx::runtime::{run_free, run_record, run_replay, ExecutionTrace, ReplayLog, RunOptions, RunStats};
use racx::{Error, Result};
use serde::Serialize;

use crate::summary::Summary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Analyze,
    PruneInit,
    PruneArray,
    Instrument,
    Record,
    Replay,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Analyze,
        Stage::PruneInit,
        Stage::PruneArray,
        Stage::Instrument,
        Stage::Record,
        Stage::Replay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Analyze => "analyze",
            Stage::PruneInit => "prune-init",
            Stage::PruneArray => "prune-array",
            Stage::Instrument => "instrument",
            Stage::Record => "record",
            Stage::Replay => "replay",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub threads: usize,
    pub seeds: Vec<u64>,
    pub id_bound: i64,
    pub budget: u64,
    pub out_dir: PathBuf,
    /// Last stage to run; every earlier stage runs too.
    pub last: Stage,
    pub max_steps: u64,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        let d = SolverOptions::default();
        PipelineConfig {
            input: input.into(),
            threads: 4,
            seeds: vec![0],
            id_bound: d.id_bound,
            budget: d.budget,
            out_dir: out_dir.into(),
            last: Stage::Replay,
            max_steps: RunOptions::default().max_steps,
        }
    }

    /// Checks the invariants and turns a stage list into its last stage.
    /// The list must be a prefix of the stage order.
    pub fn select_stages(&mut self, stages: &[Stage]) -> std::result::Result<(), String> {
        if stages.is_empty() {
            return Err("no stages selected".into());
        }
        if stages != &Stage::ALL[..stages.len()] {
            let names: Vec<&str> = stages.iter().map(|s| s.name()).collect();
            return Err(format!(
                "stages {} are not a prefix of {}",
                names.join(","),
                Stage::ALL.map(|s| s.name()).join(",")
            ));
        }
        self.last = *stages.last().expect("non-empty");
        Ok(())
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.threads < 1 {
            return Err("thread count must be at least 1".into());
        }
        if self.seeds.is_empty() && self.last >= Stage::Record {
            return Err("record needs at least one seed".into());
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            id_bound: self.id_bound,
            budget: self.budget,
            ..SolverOptions::default()
        }
    }

    pub fn runs(&self, stage: Stage) -> bool {
        stage <= self.last
    }
}

/// One recorded run and its replay.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub seed: u64,
    pub log: ReplayLog,
    pub trace: ExecutionTrace,
    pub stats: RunStats,
    pub replayed: Option<ExecutionTrace>,
    /// Counts of the same schedule with every raw warning instrumented.
    pub unpruned: Option<RunStats>,
}

/// Everything the stages produced, in memory.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub program: Program,
    pub raw: RaceReport,
    pub init: Option<(Program, RaceReport, Vec<PruneDecision>)>,
    pub array: Option<(RaceReport, Vec<LedgerEntry>)>,
    pub instrumented: Option<(Program, SiteTable)>,
    pub runs: Vec<RunArtifacts>,
}

impl Outcome {
    /// The program the final report describes.
    pub fn refined_program(&self) -> &Program {
        self.init.as_ref().map_or(&self.program, |(p, _, _)| p)
    }

    pub fn final_report(&self) -> &RaceReport {
        if let Some((r, _)) = &self.array {
            return r;
        }
        if let Some((_, r, _)) = &self.init {
            return r;
        }
        &self.raw
    }
}

/// Runs the static stages of `cfg` on `p`.
pub fn run_static(p: &Program, cfg: &PipelineConfig) -> std::result::Result<Outcome, (Stage, Error)> {
    let raw = analyze(p).map_err(|e| (Stage::Analyze, e))?;
    let mut out = Outcome {
        program: p.clone(),
        raw,
        init: None,
        array: None,
        instrumented: None,
        runs: Vec::new(),
    };
    if cfg.runs(Stage::PruneInit) {
        out.init = Some(prune_init(p, &out.raw).map_err(|e| (Stage::PruneInit, e))?);
    }
    if cfg.runs(Stage::PruneArray) {
        let (q, refined, _) = out.init.as_ref().expect("prune-init ran");
        out.array = Some(prune_array_warnings(q, refined, &cfg.solver()));
    }
    if cfg.runs(Stage::Instrument) {
        let q = out.refined_program().clone();
        out.instrumented = Some(instrument(&q, out.final_report()).map_err(|e| (Stage::Instrument, e))?);
    }
    Ok(out)
}

/// Records one run per seed and, when selected, replays each log and checks
/// that the replay reproduces the recorded trace exactly.
pub fn run_dynamic(out: &mut Outcome, cfg: &PipelineConfig) -> std::result::Result<(), (Stage, Error)> {
    if !cfg.runs(Stage::Record) {
        return Ok(());
    }
    let (q, table) = out.instrumented.as_ref().expect("instrument ran");
    let baseline = instrument(&out.program, &out.raw).map_err(|e| (Stage::Instrument, e))?;
    for &seed in &cfg.seeds {
        let opts = RunOptions {
            threads: cfg.threads,
            seed,
            max_steps: cfg.max_steps,
        };
        let (trace, log, stats) = run_record(q, table, &opts).map_err(|e| (Stage::Record, e))?;
        let unpruned = run_free(&baseline.0, Some(&baseline.1), &opts).ok().map(|(_, s)| s);
        let replayed = if cfg.runs(Stage::Replay) {
            let (t, _) = run_replay(q, table, &log, seed ^ 0x5eed, cfg.max_steps).map_err(|e| (Stage::Replay, e))?;
            if t != trace {
                return Err((
                    Stage::Replay,
                    Error::Divergence {
                        thread: 0,
                        site: "end of run".into(),
                        icount: 0,
                        detail: "replayed trace differs from the recorded trace".into(),
                    },
                ));
            }
            Some(t)
        } else {
            None
        };
        out.runs.push(RunArtifacts {
            seed,
            log,
            trace,
            stats,
            replayed,
            unpruned,
        });
    }
    Ok(())
}

/// A failed pipeline: the stage, the error and the artifacts written so far.
#[derive(Debug)]
pub struct PipelineError {
    pub stage: Stage,
    pub error: Error,
    pub written: Vec<PathBuf>,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.error)?;
        if !self.written.is_empty() {
            write!(f, "\nartifacts written so far:")?;
            for p in &self.written {
                write!(f, "\n  {}", p.display())?;
            }
        }
        Ok(())
    }
}

struct Writer {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Writer {
    fn put(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }
}

pub fn jsonl<T: Serialize>(rows: &[T]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("ledger serializes") + "\n")
        .collect()
}

/// Runs the configured stages and writes every artifact to `cfg.out_dir`.
pub fn pipeline_run(cfg: &PipelineConfig) -> std::result::Result<(Outcome, Summary), PipelineError> {
    let fail = |stage, error, w: &Writer| PipelineError {
        stage,
        error,
        written: w.written.clone(),
    };
    let mut w = Writer {
        dir: cfg.out_dir.clone(),
        written: Vec::new(),
    };
    let src = fs::read_to_string(&cfg.input).map_err(|e| fail(Stage::Analyze, e.into(), &w))?;
    let p = parse_program(&src).map_err(|e| fail(Stage::Analyze, e.into(), &w))?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| fail(Stage::Analyze, e.into(), &w))?;
    let mut out = run_static(&p, cfg).map_err(|(s, e)| fail(s, e, &w))?;
    let io = |r: Result<()>, stage, w: &Writer| r.map_err(|e| fail(stage, e, w));
    io(w.put("report.json", &out.raw.to_json()), Stage::Analyze, &w)?;
    if let Some((q, refined, ledger)) = &out.init {
        io(w.put("refined.json", &refined.to_json()), Stage::PruneInit, &w)?;
        io(w.put("prune-init.jsonl", &jsonl(ledger)), Stage::PruneInit, &w)?;
        io(w.put("rewritten.mtc", &print_program(q)), Stage::PruneInit, &w)?;
    }
    if let Some((fin, ledger)) = &out.array {
        io(w.put("final.json", &fin.to_json()), Stage::PruneArray, &w)?;
        io(w.put("prune-array.jsonl", &jsonl(ledger)), Stage::PruneArray, &w)?;
    }
    if let Some((q, table)) = &out.instrumented {
        io(w.put("prog.imtc", &print_program(q)), Stage::Instrument, &w)?;
        io(w.put("sites.json", &table.to_json()), Stage::Instrument, &w)?;
    }
    let dynamic = run_dynamic(&mut out, cfg);
    for r in &out.runs {
        io(w.put(&format!("run-{}.log", r.seed), &r.log.render()), Stage::Record, &w)?;
        io(w.put(&format!("trace-{}.json", r.seed), &(r.trace.to_json() + "\n")), Stage::Record, &w)?;
        if let Some(t) = &r.replayed {
            io(w.put(&format!("replay-{}.json", r.seed), &(t.to_json() + "\n")), Stage::Replay, &w)?;
        }
    }
    dynamic.map_err(|(s, e)| fail(s, e, &w))?;
    let summary = Summary::of(&out, cfg);
    if cfg.last > Stage::Analyze {
        io(w.put("summary.txt", &summary.render()), cfg.last, &w)?;
        io(
            w.put("summary.json", &(serde_json::to_string_pretty(&summary).expect("summary") + "\n")),
            cfg.last,
            &w,
        )?;
    }
    Ok((out, summary))
}

/// Reads and parses an MTC or iMTC file.
pub fn load_program(path: &Path) -> Result<Program> {
    let src = fs::read_to_string(path)?;
    Ok(parse_program(&src)?)
}
