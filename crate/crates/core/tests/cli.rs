use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spiffy::cli::BenchReport;
use spiffy::drafting::{three_route_example, DraftGraphSpec};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn spiffy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spiffy"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn calibrate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let corpus = data("corpus.txt");
    let prompts = data("calib_prompts.txt");
    let mut args = vec![
        "calibrate",
        "--corpus",
        s(&corpus),
        "--prompts",
        s(&prompts),
        "--out",
        s(&out),
    ];
    args.extend_from_slice(extra);
    let res = spiffy(&args);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    out
}

fn bench(graph: &Path, report: &Path, extra: &[&str]) -> BenchReport {
    let corpus = data("corpus.txt");
    let prompts = data("eval_prompts.txt");
    let mut args = vec![
        "bench",
        "--corpus",
        s(&corpus),
        "--prompts",
        s(&prompts),
        "--graph",
        s(graph),
        "--report",
        s(report),
    ];
    args.extend_from_slice(extra);
    let res = spiffy(&args);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn calibrate_writes_graph_records_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let g = calibrate(
        dir.path(),
        "g.txt",
        &["--lookahead", "5", "--budget", "10", "--strategy", "degree-1"],
    );
    let graph = DraftGraphSpec::load(&g).unwrap();
    assert!(!graph.is_empty() && graph.len() <= 10);
    assert!(dir.path().join("g.txt.records").exists());
    assert!(dir.path().join("g.txt.table").exists());
    let res = spiffy(&["graph", "validate", "--graph", s(&g), "--schedule", "fixed:1"]);
    assert_eq!(code(&res), 0);
}

#[test]
fn small_and_large_budgets_both_validate() {
    let dir = tempfile::tempdir().unwrap();
    let g3 = calibrate(dir.path(), "g3.txt", &["--budget", "3"]);
    let g10 = calibrate(dir.path(), "g10.txt", &["--budget", "10"]);
    for g in [&g3, &g10] {
        assert_eq!(code(&spiffy(&["graph", "validate", "--graph", s(g)])), 0);
    }
    assert!(DraftGraphSpec::load(&g3).unwrap().len() <= 3);
}

#[test]
fn calibrate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = calibrate(dir.path(), "a.txt", &[]);
    let b = calibrate(dir.path(), "b.txt", &[]);
    for ext in ["", ".records", ".table"] {
        let read = |p: &Path| std::fs::read(format!("{}{ext}", p.display())).unwrap();
        assert_eq!(read(&a), read(&b), "{ext}");
    }
}

#[test]
fn calibrate_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.txt", "\n");
    let out = dir.path().join("g.txt");
    let corpus = data("corpus.txt");
    let res = spiffy(&[
        "calibrate",
        "--corpus",
        s(&corpus),
        "--prompts",
        s(&empty),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 2);
    assert!(!out.exists());

    let prompts = data("calib_prompts.txt");
    let res = spiffy(&[
        "calibrate",
        "--corpus",
        s(&corpus),
        "--prompts",
        s(&prompts),
        "--budget",
        "0",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 2);

    let bad = write(dir.path(), "bad.txt", "3 4 5\n6 x 7\n");
    let res = spiffy(&[
        "calibrate",
        "--corpus",
        s(&bad),
        "--prompts",
        s(&prompts),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 2);
    let err = stderr(&res);
    assert!(err.contains("bad.txt:2"), "{err}");
}

#[test]
fn bad_config_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "W = 64\nL = 16\nblock = 3\n");
    let g = write(dir.path(), "g.txt", "");
    let res = spiffy(&["graph", "validate", "--graph", s(&g), "--config", s(&cfg)]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("run.cfg:3"), "{}", stderr(&res));
}

#[test]
fn empty_graph_gives_unit_speedup() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "empty.txt", "D = 0\ntokens_per_level = 1\n");
    let report = bench(&g, &dir.path().join("r.json"), &[]);
    assert_eq!(report.aggregate.speedup_all, 1.0);
    assert_eq!(report.aggregate.speculative_nfe, report.aggregate.vanilla_nfe);
}

#[test]
fn bigger_budget_is_not_slower() {
    let dir = tempfile::tempdir().unwrap();
    let g3 = calibrate(dir.path(), "g3.txt", &["--budget", "3"]);
    let g8 = calibrate(dir.path(), "g8.txt", &["--budget", "8"]);
    let r3 = bench(&g3, &dir.path().join("r3.json"), &[]);
    let r8 = bench(&g8, &dir.path().join("r8.json"), &[]);
    assert!(r8.aggregate.speedup_all >= r3.aggregate.speedup_all);
}

#[test]
fn threshold_with_graph_beats_threshold_alone() {
    let dir = tempfile::tempdir().unwrap();
    let g = calibrate(dir.path(), "g.txt", &[]);
    let r = bench(&g, &dir.path().join("r.json"), &["--schedule", "threshold:0.9"]);
    assert!(r.aggregate.speedup_all >= r.aggregate.vanilla_speedup_all);
    assert_eq!(r.aggregate.lossless_prompts, r.aggregate.prompts);
}

#[test]
fn bench_reports_are_deterministic_and_profile_adds_timings() {
    let dir = tempfile::tempdir().unwrap();
    let g = calibrate(dir.path(), "g.txt", &["--budget", "4"]);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let ra = bench(&g, &a, &["--csv", s(&dir.path().join("a.csv"))]);
    bench(&g, &b, &[]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(ra.runs.iter().all(|r| r.speculative.stage_timings.is_none()));
    let csv = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 50 * 8);

    let p = bench(&g, &dir.path().join("p.json"), &["--profile"]);
    assert!(p.runs.iter().all(|r| r.speculative.stage_timings.is_some()));
    let res = spiffy(&["summarize", "--report", s(&dir.path().join("p.json"))]);
    assert_eq!(code(&res), 0);
    assert!(stdout(&res).contains("% of model time"));
}

#[test]
fn bench_rejects_mismatched_graph() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "g.txt", "tokens_per_level = 2\n1:1 2:1\n");
    let corpus = data("corpus.txt");
    let prompts = data("eval_prompts.txt");
    let r = dir.path().join("r.json");
    let res = spiffy(&[
        "bench",
        "--corpus",
        s(&corpus),
        "--prompts",
        s(&prompts),
        "--graph",
        s(&g),
        "--report",
        s(&r),
    ]);
    assert_eq!(code(&res), 2);
    let bad = write(dir.path(), "bad.txt", "1:1 2:1\n");
    let res = spiffy(&[
        "bench",
        "--corpus",
        s(&corpus),
        "--prompts",
        s(&prompts),
        "--graph",
        s(&bad),
        "--report",
        s(&r),
    ]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("unreachable"), "{}", stderr(&res));
}

fn check(graph: &Path, extra: &[&str]) -> Output {
    let corpus = data("corpus.txt");
    let prompts = data("eval_prompts.txt");
    let mut args = vec![
        "check-lossless",
        "--corpus",
        s(&corpus),
        "--prompts",
        s(&prompts),
        "--graph",
        s(graph),
    ];
    args.extend_from_slice(extra);
    spiffy(&args)
}

#[test]
fn check_lossless_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let g = calibrate(dir.path(), "g.txt", &[]);
    let ok = check(&g, &["--trials", "100"]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));

    let broken = check(&g, &["--trials", "10", "--inject-fault"]);
    assert_eq!(code(&broken), 1);
    let out = stdout(&broken);
    assert!(out.contains("DIVERGENCE") && out.contains("vs vanilla"), "{out}");

    assert_eq!(code(&check(&g, &["--trials", "0"])), 2);
}

#[test]
fn export_dot_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let dot = |graph_text: &str| {
        let g = write(dir.path(), "g.txt", graph_text);
        let out = dir.path().join("g.dot");
        assert_eq!(
            code(&spiffy(&["graph", "export-dot", "--graph", s(&g), "--out", s(&out)])),
            0
        );
        std::fs::read_to_string(out).unwrap()
    };
    let three = dot(&three_route_example().to_text());
    assert_eq!(three.matches("-> n5;").count(), 3);

    let single = dot("1:1\n");
    assert_eq!(single.matches("[label=").count(), 2);
    assert_eq!(single.matches("->").count(), 1);
    assert!(single.contains("root -> n0;"));

    let empty = dot("");
    assert_eq!(empty.matches("[label=").count(), 1);
    assert!(!empty.contains("->"));

    let g = write(dir.path(), "bad.txt", "1:1 2:1\n");
    let res = spiffy(&[
        "graph",
        "export-dot",
        "--graph",
        s(&g),
        "--out",
        s(&dir.path().join("x.dot")),
    ]);
    assert_eq!(code(&res), 2);
}

#[test]
fn generate_matches_between_vanilla_and_graph() {
    let dir = tempfile::tempdir().unwrap();
    let g = calibrate(dir.path(), "g.txt", &["--budget", "5"]);
    let corpus = data("corpus.txt");
    let prompts = data("eval_prompts.txt");
    let van = spiffy(&["generate", "--corpus", s(&corpus), "--prompts", s(&prompts)]);
    let spec = spiffy(&[
        "generate",
        "--corpus",
        s(&corpus),
        "--prompts",
        s(&prompts),
        "--graph",
        s(&g),
    ]);
    assert_eq!(code(&van), 0);
    assert_eq!(code(&spec), 0);
    assert_eq!(stdout(&van), stdout(&spec));
    assert_eq!(stdout(&van).lines().count(), 50);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&spiffy(&[])), 2);
    assert_eq!(code(&spiffy(&["bench"])), 2);
    assert_eq!(code(&spiffy(&["calibrate", "--schedule", "fixed:0"])), 2);
    assert_eq!(code(&spiffy(&["--help"])), 0);
}

#[test]
fn bundled_data_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&spiffy(&["synth", "--out-dir", s(dir.path())])), 0);
    for name in ["corpus.txt", "calib_prompts.txt", "eval_prompts.txt"] {
        let fresh = std::fs::read(dir.path().join(name)).unwrap();
        assert_eq!(fresh, std::fs::read(data(name)).unwrap(), "{name} is stale");
    }
}
