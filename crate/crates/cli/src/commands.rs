//! Command-line surface of the `racx` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use racx::frontend::{dump_ast, dump_callgraph, dump_cfg, dump_dominators, print_program, Program};
use racx::instrument::{instrument, SiteTable};
use racx::lockset::{analyze, RaceReport};
use racx::prune_array::{prune_array_warnings, SolverOptions};
use racx::prune_init::prune_init;
use racx::runtime::{explore_exhaustive, run_record, run_replay, ReplayLog, RunOptions};
use racx::{Error, Result};

use crate::acceptance;
use crate::bench::{bench, BenchConfig};
use crate::pipeline::{jsonl, load_program, pipeline_run, PipelineConfig, Stage};

/// Exit status for invalid configuration.
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "racx", version, about = "Static race detection, pruning and record/replay for MTC programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the lockset analysis and print the race report.
    Analyze {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Drop pre-spawn accesses and lock possible initializations.
    PruneInit {
        input: PathBuf,
        report: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Where to write the rewritten program.
        #[arg(long)]
        emit_rewritten: Option<PathBuf>,
        /// Where to write the decision ledger (JSON lines).
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Drop array pairs whose subscript ranges cannot overlap.
    PruneArray {
        /// The program the report describes (the rewritten one after prune-init).
        input: PathBuf,
        report: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Annotate the reported accesses and write the site table.
    Instrument {
        input: PathBuf,
        report: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Defaults to sites.json beside the output (or in the working directory).
        #[arg(long)]
        site_table: Option<PathBuf>,
    },
    /// Run an instrumented program and write its replay log.
    Record {
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        threads: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Defaults to sites.json beside the input.
        #[arg(long)]
        site_table: Option<PathBuf>,
        /// Where to write the execution trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Re-execute an instrumented program under a recorded log.
    Replay {
        input: PathBuf,
        log: PathBuf,
        #[arg(long)]
        site_table: Option<PathBuf>,
        /// Scheduler seed for the replay; must not matter.
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Explore every interleaving and list reachable outcomes and races.
    Oracle {
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        threads: usize,
        #[arg(long, default_value_t = 2_000_000)]
        cap: usize,
    },
    /// Run the stages in order and persist every artifact.
    Pipeline(PipelineArgs),
    /// Time free, record and replay runs.
    Bench {
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        threads: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        json: bool,
    },
    /// Run the acceptance suite over the corpus.
    Check {
        #[arg(long, default_value = acceptance::DEFAULT_CORPUS)]
        corpus: PathBuf,
        /// Re-measure the kernels and overwrite the golden counts first.
        #[arg(long)]
        freeze_goldens: bool,
    },
    /// Print front-end structures.
    Dump {
        input: PathBuf,
        #[arg(long)]
        ast: bool,
        #[arg(long)]
        cfg: bool,
        #[arg(long)]
        callgraph: bool,
        #[arg(long)]
        dom: bool,
    },
}

#[derive(Debug, Clone, Copy, Args)]
pub struct SolverArgs {
    /// Enumeration window for unbounded variables.
    #[arg(long, default_value_t = SolverOptions::default().id_bound)]
    pub id_bound: i64,
    /// Maximum trial assignments per CSP.
    #[arg(long, default_value_t = SolverOptions::default().budget)]
    pub budget: u64,
}

impl SolverArgs {
    fn options(self) -> SolverOptions {
        SolverOptions {
            id_bound: self.id_bound,
            budget: self.budget,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub threads: usize,
    /// Record seed; repeat for several runs.
    #[arg(long = "seed", default_values_t = [0u64])]
    pub seeds: Vec<u64>,
    /// Comma-separated prefix of analyze,prune-init,prune-array,instrument,record,replay.
    #[arg(long, value_delimiter = ',')]
    pub stages: Option<Vec<Stage>>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub max_steps: Option<u64>,
}

impl PipelineArgs {
    pub fn config(&self) -> std::result::Result<PipelineConfig, String> {
        let mut cfg = PipelineConfig::new(&self.input, &self.out);
        cfg.threads = self.threads;
        cfg.seeds = self.seeds.clone();
        cfg.id_bound = self.solver.id_bound;
        cfg.budget = self.solver.budget;
        if let Some(m) = self.max_steps {
            cfg.max_steps = m;
        }
        if let Some(st) = &self.stages {
            cfg.select_stages(st)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_report(path: &Path, p: &Program) -> Result<RaceReport> {
    let r = RaceReport::from_json(&read(path)?)?;
    r.check(p)?;
    Ok(r)
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from(name), |d| d.join(name))
}

fn load_table(program: &Path, explicit: Option<&Path>) -> Result<SiteTable> {
    let path = explicit.map_or_else(|| sibling(program, "sites.json"), Path::to_path_buf);
    SiteTable::from_json(&read(&path)?)
}

fn run_options(threads: usize, seed: u64, max_steps: Option<u64>) -> Result<RunOptions> {
    if threads < 1 {
        return Err(Error::Analysis("thread count must be at least 1".into()));
    }
    let d = RunOptions::default();
    Ok(RunOptions {
        threads,
        seed,
        max_steps: max_steps.unwrap_or(d.max_steps),
    })
}

/// Executes one command and returns the process exit status.
pub fn execute(cmd: Command) -> i32 {
    match dispatch(cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("racx: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Analyze { input, output } => {
            let p = load_program(&input)?;
            let r = analyze(&p)?;
            emit(output.as_deref(), &r.to_json())?;
            eprintln!(
                "{} warnings, {} pairs, {} sites",
                r.counts.warnings, r.counts.pairs, r.counts.sites
            );
        }
        Command::PruneInit {
            input,
            report,
            output,
            emit_rewritten,
            ledger,
        } => {
            let p = load_program(&input)?;
            let r = load_report(&report, &p)?;
            let (q, refined, decisions) = prune_init(&p, &r)?;
            emit(output.as_deref(), &refined.to_json())?;
            if let Some(path) = emit_rewritten {
                fs::write(path, print_program(&q))?;
            }
            if let Some(path) = ledger {
                fs::write(path, jsonl(&decisions))?;
            }
            eprintln!("sites {} -> {}", r.counts.sites, refined.counts.sites);
        }
        Command::PruneArray {
            input,
            report,
            output,
            ledger,
            solver,
        } => {
            let p = load_program(&input)?;
            let r = load_report(&report, &p)?;
            let (fin, entries) = prune_array_warnings(&p, &r, &solver.options());
            emit(output.as_deref(), &fin.to_json())?;
            if let Some(path) = ledger {
                fs::write(path, jsonl(&entries))?;
            }
            eprintln!("sites {} -> {}", r.counts.sites, fin.counts.sites);
        }
        Command::Instrument {
            input,
            report,
            output,
            site_table,
        } => {
            let p = load_program(&input)?;
            let r = load_report(&report, &p)?;
            let (q, table) = instrument(&p, &r)?;
            let table_path = site_table.unwrap_or_else(|| match &output {
                Some(o) => sibling(o, "sites.json"),
                None => PathBuf::from("sites.json"),
            });
            emit(output.as_deref(), &print_program(&q))?;
            fs::write(&table_path, table.to_json())?;
        }
        Command::Record {
            input,
            threads,
            seed,
            output,
            site_table,
            trace,
            max_steps,
        } => {
            let p = load_program(&input)?;
            let table = load_table(&input, site_table.as_deref())?;
            let opts = run_options(threads, seed, max_steps)?;
            let (t, log, stats) = run_record(&p, &table, &opts)?;
            emit(output.as_deref(), &log.render())?;
            if let Some(path) = trace {
                fs::write(path, t.to_json() + "\n")?;
            }
            eprintln!("{} sync events, {} race events", stats.sync_events, stats.traced_accesses);
        }
        Command::Replay {
            input,
            log,
            site_table,
            seed,
            trace,
            max_steps,
        } => {
            let p = load_program(&input)?;
            let table = load_table(&input, site_table.as_deref())?;
            let log = ReplayLog::parse(&read(&log)?)?;
            let steps = max_steps.unwrap_or(RunOptions::default().max_steps);
            let (t, _) = run_replay(&p, &table, &log, seed, steps)?;
            emit(trace.as_deref(), &(t.to_json() + "\n"))?;
        }
        Command::Oracle { input, threads, cap } => {
            let p = load_program(&input)?;
            let res = explore_exhaustive(&p, threads, cap)?;
            println!("{}", serde_json::to_string_pretty(&res)?);
        }
        Command::Pipeline(args) => {
            let cfg = match args.config() {
                Ok(c) => c,
                Err(msg) => {
                    eprintln!("racx: {msg}");
                    return Ok(EXIT_CONFIG);
                }
            };
            match pipeline_run(&cfg) {
                Ok((_, summary)) => print!("{}", summary.render()),
                Err(e) => {
                    eprintln!("racx: {e}");
                    return Ok(e.error.exit_code());
                }
            }
        }
        Command::Bench {
            input,
            threads,
            seed,
            trials,
            warmup,
            solver,
            json,
        } => {
            let p = load_program(&input)?;
            let cfg = BenchConfig {
                threads,
                seed,
                trials,
                warmup,
                solver: solver.options(),
                ..BenchConfig::default()
            };
            let r = bench(&p, &cfg)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                print!("{}", r.render());
            }
        }
        Command::Check { corpus, freeze_goldens } => {
            if freeze_goldens {
                acceptance::freeze_goldens(&corpus)?;
            }
            let results = acceptance::run_all(&corpus);
            for r in &results {
                println!("{}", r.line());
            }
            if results.iter().any(|r| !r.passed) {
                return Ok(1);
            }
        }
        Command::Dump {
            input,
            ast,
            cfg,
            callgraph,
            dom,
        } => {
            let p = load_program(&input)?;
            let all = !(ast || cfg || callgraph || dom);
            if ast || all {
                print!("{}", dump_ast(&p));
            }
            if cfg || all {
                print!("{}", dump_cfg(&p));
            }
            if callgraph || all {
                print!("{}", dump_callgraph(&p));
            }
            if dom || all {
                print!("{}", dump_dominators(&p));
            }
        }
    }
    Ok(0)
}
