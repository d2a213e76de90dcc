use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use proptest::prelude::*;
use racx::frontend::parse_program;
use racx::lockset::RaceReport;
use racx_cli::acceptance::DEFAULT_CORPUS;
use racx_cli::bench::{bench, BenchConfig};
use racx_cli::pipeline::{pipeline_run, PipelineConfig, Stage};
use racx_cli::summary::reduction;

fn corpus(rel: &str) -> PathBuf {
    Path::new(DEFAULT_CORPUS).join(rel)
}

fn racx(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_racx")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect()
}

#[test]
fn pipeline_is_byte_for_byte_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        let mut cfg = PipelineConfig::new(corpus("kernels/lu.mtc"), dir);
        cfg.seeds = vec![7, 8];
        pipeline_run(&cfg).unwrap();
    }
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.contains_key("run-7.log") && fa.contains_key("replay-8.json"), "{:?}", fa.keys());
    assert_eq!(fa, fb);
}

#[test]
fn analyze_stage_writes_only_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, err) = racx(&["pipeline", &corpus("kernels/fft.mtc").to_string_lossy(), "--stages", "analyze", "--out", out]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(files(dir.path()).keys().collect::<Vec<_>>(), vec!["report.json"]);
}

#[test]
fn non_prefix_stage_lists_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let input = corpus("kernels/fft.mtc");
    let (code, _, err) = racx(&["pipeline", &input.to_string_lossy(), "--stages", "analyze,prune-array", "--out", out]);
    assert_eq!(code, 2);
    assert!(err.contains("not a prefix"), "{err}");
    let (code, _, _) = racx(&["pipeline", &input.to_string_lossy(), "--threads", "0", "--out", out]);
    assert_eq!(code, 2);
}

#[test]
fn summary_counts_match_serialized_reports() {
    let dir = tempfile::tempdir().unwrap();
    for k in ["lu", "ocean", "pfscan", "aget"] {
        let mut cfg = PipelineConfig::new(corpus(&format!("kernels/{k}.mtc")), dir.path());
        cfg.last = Stage::Record;
        let (_, summary) = pipeline_run(&cfg).unwrap();
        for (row, file) in summary.stages.iter().zip(["report.json", "refined.json", "final.json"]) {
            let r = RaceReport::from_json(&fs::read_to_string(dir.path().join(file)).unwrap()).unwrap();
            let c = r.recount();
            assert_eq!((row.warnings, row.pairs, row.sites), (c.warnings, c.pairs, c.sites), "{k} {file}");
            let pairs: usize = r.warnings.iter().map(|w| w.pairs.len()).sum();
            assert_eq!(row.pairs, pairs);
        }
        let log = fs::read_to_string(dir.path().join("run-0.log")).unwrap();
        let events = log.lines().skip(1).count() as u64;
        let d = &summary.dynamic[0];
        assert_eq!(d.sync_events + d.race_events, events, "{k}");
    }
}

#[test]
fn failed_stage_reports_artifacts_so_far() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("bad.mtc");
    fs::write(&src, "int a[2];\nvoid w(int id) { a[id + 5] = 1; }\nvoid main() { spawn w(0); spawn w(1); }\n").unwrap();
    let out = dir.path().join("out");
    let mut cfg = PipelineConfig::new(&src, &out);
    cfg.threads = 2;
    let err = pipeline_run(&cfg).unwrap_err();
    assert_eq!(err.stage, Stage::Record);
    let text = err.to_string();
    assert!(text.contains("stage record failed") && text.contains("sites.json"), "{text}");
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mtc");
    fs::write(&bad, "void main() { x = 1; }").unwrap();
    assert_eq!(racx(&["analyze", bad.to_str().unwrap()]).0, 2);

    let lost = corpus("micro/lost_update.mtc");
    assert_eq!(racx(&["oracle", lost.to_str().unwrap(), "--cap", "3"]).0, 4);

    let out = dir.path().join("out");
    let (code, _, err) = racx(&["pipeline", lost.to_str().unwrap(), "--threads", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let imtc = out.join("prog.imtc");
    let log = fs::read_to_string(out.join("run-0.log")).unwrap();
    let (code, stdout, _) = racx(&["replay", imtc.to_str().unwrap(), out.join("run-0.log").to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(stdout, fs::read_to_string(out.join("trace-0.json")).unwrap());

    // lost update: the second read must see what the log says
    let mut lines: Vec<String> = log.lines().map(String::from).collect();
    let last = lines.iter().rposition(|l| l.starts_with("R ")).unwrap();
    let mut fields: Vec<String> = lines[last].split(' ').map(String::from).collect();
    let v: i64 = fields[5].parse().unwrap();
    fields[5] = (v + 100).to_string();
    lines[last] = fields.join(" ");
    let bad_log = dir.path().join("bad.log");
    fs::write(&bad_log, lines.join("\n") + "\n").unwrap();
    let (code, _, err) = racx(&["replay", imtc.to_str().unwrap(), bad_log.to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");

    // a report for a different program is stale
    let other = corpus("micro/locked_counter.mtc");
    let (code, _, err) = racx(&["prune-init", other.to_str().unwrap(), out.join("report.json").to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("digest"), "{err}");
}

#[test]
fn stepwise_commands_match_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let input = corpus("kernels/aget.mtc").to_string_lossy().into_owned();
    let steps: [Vec<String>; 5] = [
        vec!["analyze".into(), input.clone(), "-o".into(), d("report.json")],
        vec![
            "prune-init".into(),
            input.clone(),
            d("report.json"),
            "-o".into(),
            d("refined.json"),
            "--emit-rewritten".into(),
            d("rewritten.mtc"),
        ],
        vec!["prune-array".into(), d("rewritten.mtc"), d("refined.json"), "-o".into(), d("final.json")],
        vec!["instrument".into(), d("rewritten.mtc"), d("final.json"), "-o".into(), d("prog.imtc")],
        vec!["record".into(), d("prog.imtc"), "--threads".into(), "4".into(), "--seed".into(), "3".into(), "-o".into(), d("run-3.log")],
    ];
    for s in &steps {
        let args: Vec<&str> = s.iter().map(String::as_str).collect();
        let (code, _, err) = racx(&args);
        assert_eq!(code, 0, "{s:?}: {err}");
    }
    let out = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::new(&input, out.path());
    cfg.seeds = vec![3];
    pipeline_run(&cfg).unwrap();
    for f in ["report.json", "refined.json", "rewritten.mtc", "final.json", "prog.imtc", "sites.json", "run-3.log"] {
        assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(out.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn dump_prints_every_structure_by_default() {
    let (code, out, _) = racx(&["dump", &corpus("micro/two_locks.mtc").to_string_lossy()]);
    assert_eq!(code, 0);
    assert!(out.contains("left") && out.contains("right"));
    let path = corpus("micro/nested_spawn.mtc").to_string_lossy().into_owned();
    let (_, all, _) = racx(&["dump", &path]);
    let (_, only, _) = racx(&["dump", "--callgraph", &path]);
    assert!(only.contains("root") && only.len() < all.len(), "{only}");
}

#[test]
fn bench_means_are_sample_means() {
    let p = parse_program(&fs::read_to_string(corpus("kernels/pfscan.mtc")).unwrap()).unwrap();
    let one = bench(&p, &BenchConfig { trials: 1, warmup: 0, ..BenchConfig::default() }).unwrap();
    assert_eq!(one.samples_ms.len(), 1);
    assert_eq!(one.free_ms, one.samples_ms[0][0]);
    assert_eq!(one.record_ms, one.samples_ms[0][1]);
    let five = bench(&p, &BenchConfig { trials: 5, warmup: 1, ..BenchConfig::default() }).unwrap();
    assert_eq!(five.samples_ms.len(), 5);
    let mean = five.samples_ms.iter().map(|s| s[2]).sum::<f64>() / 5.0;
    assert!((five.replay_ms - mean).abs() < 1e-9);
    assert_eq!(five.record_events, five.replay_events);
    assert!(five.unpruned_record_events.total() >= five.record_events.total());
}

fn stage_list() -> impl Strategy<Value = Vec<Stage>> {
    prop::collection::vec(prop::sample::select(Stage::ALL.to_vec()), 0..7)
}

proptest! {
    #[test]
    fn stage_selection_accepts_exactly_prefixes(stages in stage_list()) {
        let mut cfg = PipelineConfig::new("x.mtc", "out");
        let is_prefix = !stages.is_empty() && stages[..] == Stage::ALL[..stages.len()];
        prop_assert_eq!(cfg.select_stages(&stages).is_ok(), is_prefix);
        if is_prefix {
            prop_assert_eq!(cfg.last, *stages.last().unwrap());
        }
    }

    #[test]
    fn reduction_is_bounded(before in 0usize..500, frac in 0.0f64..=1.0) {
        let after = (before as f64 * frac) as usize;
        let r = reduction(before, after);
        prop_assert!((0.0..=100.0).contains(&r));
        prop_assert_eq!(reduction(before, before), 0.0);
    }
}
