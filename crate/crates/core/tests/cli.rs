mod common;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

use common::{fixture, read_fixture};
use subfuse::fusion::{fuse_run_set, FusionStrategy};
use subfuse::pipeline::inject_rerank;
use subfuse::ranked::{parse_run, parse_subquery_map, write_run};

fn subfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subfuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fx(rel: &str) -> &'static str {
    Box::leak(fixture(rel).to_string_lossy().into_owned().into_boxed_str())
}

fn stderr_record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_else(|| panic!("no stderr output"));
    serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr is not a JSON record: {text}"))
}

/// Writes the pipeline fixture's sub-query map with `decompose --replay`.
fn sub_query_map(dir: &Path) -> std::path::PathBuf {
    let map = dir.join("map.jsonl");
    let out = subfuse(&[
        "decompose",
        "--queries",
        fx("pipeline/queries.jsonl"),
        "--replay",
        fx("pipeline/decompositions.jsonl"),
        "--map-out",
        path(&map),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records: Vec<Value> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 4);
    assert_eq!(records[2]["fallback_used"], true);
    map
}

#[test]
fn fuse_output_matches_library_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let map_path = sub_query_map(dir.path());
    for (kind, k) in [("rrf", Some(10)), ("weighted_rrf", Some(60)), ("max_sim", None), ("mean_sim", None)] {
        let out_path = dir.path().join(format!("{kind}.run"));
        let mut args = vec![
            "fuse",
            "--map",
            path(&map_path),
            "--runs",
            fx("pipeline/sub_runs.txt"),
            "--strategy",
            kind,
            "--depth",
            "50",
            "-o",
            path(&out_path),
        ];
        let k_text = k.map(|k: i64| k.to_string());
        if let Some(k) = &k_text {
            args.extend(["--k", k.as_str()]);
        }
        let out = subfuse(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

        let map = parse_subquery_map(&fs::read(&map_path).unwrap()).unwrap();
        let runs = parse_run(&read_fixture("pipeline/sub_runs.txt")).unwrap();
        let strategy = FusionStrategy::from_parts(kind, k).unwrap();
        let fused = fuse_run_set(&map, &runs, strategy, 50, strategy.to_string()).unwrap();
        assert_eq!(fs::read(&out_path).unwrap(), write_run(&fused, 50), "{kind}");
    }
}

#[test]
fn rerank_inject_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let map_path = sub_query_map(dir.path());
    let fused_path = dir.path().join("fused.run");
    let out = subfuse(&[
        "fuse",
        "--map",
        path(&map_path),
        "--runs",
        fx("pipeline/sub_runs.txt"),
        "--k",
        "10",
        "-o",
        path(&fused_path),
    ]);
    assert!(out.status.success());
    let out = subfuse(&[
        "rerank-inject",
        "--fused",
        path(&fused_path),
        "--scores",
        fx("pipeline/rerank.txt"),
        "--depth",
        "50",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fused = parse_run(&fs::read(&fused_path).unwrap()).unwrap();
    let scores = parse_run(&read_fixture("pipeline/rerank.txt")).unwrap();
    let expected = inject_rerank(&fused, &scores, 50).unwrap();
    assert_eq!(out.stdout, write_run(&expected, usize::MAX));
}

#[test]
fn eval_of_ideal_run_prints_ones() {
    let out = subfuse(&[
        "eval",
        "--run",
        fx("metrics/perfect_run.txt"),
        "--qrels",
        fx("metrics/perfect_qrels.txt"),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    let cells: Vec<&str> = row.split_whitespace().skip(1).collect();
    assert_eq!(cells, ["1.000"; 6], "{text}");
}

#[test]
fn eval_jsonl_round_trips_through_delta() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.jsonl");
    let out = subfuse(&[
        "eval",
        "--run",
        fx("metrics/run.txt"),
        "--qrels",
        fx("metrics/qrels.txt"),
        "--format",
        "jsonl",
        "--per-query",
        "-o",
        path(&report),
    ]);
    assert!(out.status.success());
    let out = subfuse(&["delta", "--baseline", path(&report), "--candidate", path(&report)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let vs = text.lines().find(|l| l.trim_start().starts_with("vs")).unwrap();
    assert_eq!(vs.matches("N/A").count(), 6, "{text}");
}

#[test]
fn missing_input_is_an_io_error() {
    let out = subfuse(&["eval", "--run", "/nonexistent/run.txt", "--qrels", fx("metrics/qrels.txt")]);
    assert_eq!(out.status.code(), Some(2));
    let record = stderr_record(&out);
    assert_eq!(record["error"], "io");
    assert!(record["message"].as_str().unwrap().contains("/nonexistent/run.txt"));
}

#[test]
fn malformed_run_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.run");
    fs::write(&bad, "q1 Q0 d1 1 0.5 tag\nq1 Q0 d2 2 not-a-score tag\n").unwrap();
    let out = subfuse(&["eval", "--run", path(&bad), "--qrels", fx("metrics/qrels.txt")]);
    assert_eq!(out.status.code(), Some(1));
    let record = stderr_record(&out);
    assert_eq!(record["error"], "validation");
    assert!(record["message"].as_str().unwrap().contains('2'), "{record}");
}

#[test]
fn usage_errors_exit_one_with_json() {
    let out = subfuse(&["fuse", "--map"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_record(&out)["error"], "usage");

    let out = subfuse(&[
        "fuse",
        "--map",
        fx("expansion/subqueries_all.jsonl"),
        "--runs",
        fx("pipeline/sub_runs.txt"),
        "--strategy",
        "median_sim",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_record(&out)["message"].as_str().unwrap().contains("median_sim"));
}

#[test]
fn help_and_version_exit_zero() {
    assert!(subfuse(&["--help"]).status.success());
    let out = subfuse(&["--version"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn claims_attach_then_filter() {
    let dir = tempfile::tempdir().unwrap();
    let (attached, orphans, unmatched) =
        (dir.path().join("attached.jsonl"), dir.path().join("orphans.jsonl"), dir.path().join("unmatched.txt"));
    let out = subfuse(&[
        "claims",
        "attach",
        "--evidence",
        fx("evidence/claims.jsonl"),
        "--predictions",
        fx("evidence/predictions.jsonl"),
        "-o",
        path(&attached),
        "--orphans",
        path(&orphans),
        "--unmatched",
        path(&unmatched),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&attached).unwrap().lines().count(), 11);
    assert_eq!(fs::read_to_string(&unmatched).unwrap(), "qc-1-vid3-011\n");
    let orphan: Value = serde_json::from_str(fs::read_to_string(&orphans).unwrap().trim()).unwrap();
    assert_eq!(orphan["prediction"]["artifact_id"], "qc-9-missing-000");
    assert_eq!(orphan["reason"], "no_match");

    let out = subfuse(&["claims", "validate", path(&attached)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("11 calibrated"));

    let audit = dir.path().join("audit.jsonl");
    let out = subfuse(&[
        "claims",
        "filter",
        "--evidence",
        path(&attached),
        "--threshold",
        "0.5",
        "--audit",
        path(&audit),
    ]);
    assert!(out.status.success());
    let kept: Vec<Value> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let ids: Vec<&str> = kept.iter().map(|v| v["claim_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["qc-1-vid3-003", "qc-1-vid1-005", "qc-1-vid2-006"]);
    assert_eq!(fs::read_to_string(&audit).unwrap().lines().count(), 8);
}

#[test]
fn claims_filter_rejects_bad_threshold() {
    let out = subfuse(&[
        "claims",
        "filter",
        "--evidence",
        fx("evidence/calibrated_claim.jsonl"),
        "--threshold",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

fn memory(bank: &Path, args: &[&str]) -> Output {
    let mut all = vec!["memory", "--bank", path(bank)];
    all.extend(args);
    subfuse(&all)
}

#[test]
fn memory_one_shot_commands_persist() {
    let dir = tempfile::tempdir().unwrap();
    let bank = dir.path().join("bank.json");
    let out = memory(&bank, &["add_fact", "zaFtBz84Kyk", "Lib 120, CON 87 was a live projection", "timestamp=8-15s", "confidence=1.0", "tool=video_qa"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "zaFtBz84Kyk[0]\n");
    assert!(memory(&bank, &["add_keyword", "zaFtBz84Kyk", "Projection"]).status.success());

    let out = memory(&bank, &["search", "projection"]);
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        "video zaFtBz84Kyk\nfact zaFtBz84Kyk[0]: Lib 120, CON 87 was a live projection\n"
    );
    let out = memory(&bank, &["dump", "keywords"]);
    let slot: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(slot, serde_json::json!({"keywords": {"zaFtBz84Kyk": ["projection"]}}));

    let out = memory(&bank, &["remove_fact", "zaFtBz84Kyk", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_record(&out)["message"].as_str().unwrap().contains("3"));
}

#[test]
fn memory_repl_reads_commands_from_stdin() {
    let dir = tempfile::tempdir().unwrap();
    let bank = dir.path().join("bank.json");
    let mut child = Command::new(env!("CARGO_BIN_EXE_subfuse"))
        .args(["memory", "--bank", path(&bank)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(
            b"add_fact a 'first fact'\nadd_fact b \"second fact\"\nselect F#1 a:0\nmark_processed a video_qa\nfacts\nquit\nadd_fact a never\n",
        )
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.ends_with("F#0 a[0]: first fact\nF#1 b[0]: second fact\n"), "{text}");

    let saved: Value = serde_json::from_slice(&fs::read(&bank).unwrap()).unwrap();
    assert_eq!(saved["selected_facts"], serde_json::json!(["second fact", "first fact"]));
    assert_eq!(saved["videos"]["a"]["status"], "processed");
    assert_eq!(saved["fact_table"]["a"].as_array().unwrap().len(), 1);
}

#[test]
fn memory_repl_reports_errors_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let bank = dir.path().join("bank.json");
    let mut child = Command::new(env!("CARGO_BIN_EXE_subfuse"))
        .args(["memory", "--bank", path(&bank)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"select F#4\nadd_keyword v Storm\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("F#4"));
    let saved: Value = serde_json::from_slice(&fs::read(&bank).unwrap()).unwrap();
    assert_eq!(saved["keywords"]["v"], serde_json::json!(["storm"]));
}

#[test]
fn ablate_json_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let map = sub_query_map(dir.path());
    let args = [
        "ablate",
        "--map",
        path(&map),
        "--runs",
        fx("pipeline/sub_runs.txt"),
        "--qrels",
        fx("pipeline/qrels.txt"),
        "--keep",
        "1,3,all",
        "--seeds",
        "7,8",
        "--k",
        "10",
        "--depth",
        "100",
        "--json",
    ];
    let first = subfuse(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, subfuse(&args).stdout);
    let report: Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn pipeline_stage_errors_name_stage_and_query() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["queries.jsonl", "decompositions.jsonl", "qrels.txt", "rerank.txt", "evidence.jsonl"] {
        fs::copy(fixture("pipeline").join(name), dir.path().join(name)).unwrap();
    }
    let runs = String::from_utf8(read_fixture("pipeline/sub_runs.txt")).unwrap();
    let trimmed: String = runs.lines().filter(|l| !l.starts_with("2_4 ")).map(|l| format!("{l}\n")).collect();
    fs::write(dir.path().join("sub_runs.txt"), trimmed).unwrap();
    fs::copy(fixture("pipeline/pipeline.toml"), dir.path().join("pipeline.toml")).unwrap();

    let out = subfuse(&["pipeline", "--config", path(&dir.path().join("pipeline.toml")), "--out", path(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(1));
    let record = stderr_record(&out);
    assert_eq!(record["stage"], "retrieve");
    assert_eq!(record["query"], "2_4");
}
