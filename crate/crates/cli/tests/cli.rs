use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_passfeedback"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn jsonl(path: &Path) -> Vec<Value> {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["schema_version"], 1);
    lines.map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn iterate_smoke_on_generated_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        tmp.path(),
        &["iterate", "--corpus", "gen:11:100", "--stub-confidence", "--steps", "5", "--out", "run"],
    );
    let summary = jsonl(&tmp.path().join("run/summary.jsonl"));
    assert_eq!(summary.len(), 1);
    assert_eq!(summary[0]["rows"], 100);
    assert_eq!(jsonl(&tmp.path().join("run/episodes.jsonl")).len(), 100);
    let rows = jsonl(&tmp.path().join("run/metrics.jsonl"));
    assert_eq!(rows.len(), 100);
    for r in &rows {
        assert!(r["steps_used"].as_u64().unwrap() <= 5);
    }
    let csv = fs::read_to_string(tmp.path().join("run/metrics.csv")).unwrap();
    assert!(csv.starts_with("# schema_version=1 kind=metrics_row\n"));
    assert!(tmp.path().join("run/manifest.json").is_file());
}

#[test]
fn sample_one_at_zero_equals_optimize() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["optimize", "--corpus", "gen:4:40", "--seed", "2", "--out", "opt"]);
    ok(
        tmp.path(),
        &["sample", "--corpus", "gen:4:40", "--seed", "2", "--samples", "1", "--temperature", "0", "--out", "s1"],
    );
    for f in ["metrics.jsonl", "episodes.jsonl"] {
        assert_eq!(
            fs::read(tmp.path().join("opt").join(f)).unwrap(),
            fs::read(tmp.path().join("s1").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn invalid_catalog_path_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(
        tmp.path(),
        &["optimize", "--corpus", "gen:1:3", "--catalog", "no/such/catalog.txt", "--out", "r"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/catalog.txt"));
}

#[test]
fn failing_backend_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("cat.txt"), "dce\ndce\n").unwrap();
    let out = run(
        tmp.path(),
        &[
            "optimize",
            "--corpus",
            "gen:1:3",
            "--backend",
            "external",
            "--opt-binary",
            "/bin/false",
            "--catalog",
            "cat.txt",
            "--out",
            "r",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), &["iterate", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        run(tmp.path(), &["sample", "--corpus", "gen:1:2", "--temperature", "3", "--out", "r"]).status.code(),
        Some(1)
    );
}

#[test]
fn outputs_are_write_once() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["optimize", "--corpus", "gen:1:3", "--out", "r"]);
    let before = fs::read(tmp.path().join("r/metrics.jsonl")).unwrap();
    let out = run(tmp.path(), &["optimize", "--corpus", "gen:2:3", "--out", "r"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not empty"));
    assert_eq!(fs::read(tmp.path().join("r/metrics.jsonl")).unwrap(), before);
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["generate-corpus", "--seed", "5", "--size", "30", "--out", "corpus"]);
    ok(
        tmp.path(),
        &[
            "strategy",
            "--corpus",
            "corpus",
            "--strategy",
            "feedback_opt_0_fb_T",
            "--samples",
            "3",
            "--temperature",
            "0.8",
            "--format",
            "long",
            "--record",
            "--out",
            "a",
        ],
    );
    ok(tmp.path(), &["rerun", "--manifest", "a/manifest.json", "--out", "b"]);
    for f in ["episodes.jsonl", "metrics.jsonl", "metrics.csv", "summary.jsonl", "fixture.jsonl", "manifest.json"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    // Replaying the recorded answers reproduces the run without the stub.
    ok(
        tmp.path(),
        &[
            "strategy",
            "--corpus",
            "corpus",
            "--strategy",
            "feedback_opt_0_fb_T",
            "--samples",
            "3",
            "--temperature",
            "0.8",
            "--format",
            "long",
            "--model",
            "replay",
            "--fixture",
            "a/fixture.jsonl",
            "--out",
            "c",
        ],
    );
    assert_eq!(
        fs::read(tmp.path().join("a/metrics.jsonl")).unwrap(),
        fs::read(tmp.path().join("c/metrics.jsonl")).unwrap()
    );
}

#[test]
fn autotune_labels_are_stable_and_dominate_reference() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["autotune", "--corpus", "gen:8:40", "--depth", "3", "--out", "a"]);
    ok(tmp.path(), &["autotune", "--corpus", "gen:8:40", "--depth", "3", "--jobs", "1", "--out", "b"]);
    assert_eq!(
        fs::read(tmp.path().join("a/labels.jsonl")).unwrap(),
        fs::read(tmp.path().join("b/labels.jsonl")).unwrap()
    );
    let labels = jsonl(&tmp.path().join("a/labels.jsonl"));
    assert_eq!(labels.len(), 40);
    for l in &labels {
        assert!(l["best_count"].as_u64() <= l["oz_count"].as_u64(), "{l}");
    }

    ok(tmp.path(), &["autotune", "--corpus", "gen:8:40", "--depth", "0", "--out", "d0"]);
    for l in jsonl(&tmp.path().join("d0/labels.jsonl")) {
        let best = l["best_count"].as_u64().unwrap();
        assert_eq!(best, l["source_count"].as_u64().unwrap().min(l["oz_count"].as_u64().unwrap()), "{l}");
    }
}

#[test]
fn report_and_dataset_over_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["autotune", "--corpus", "gen:6:40", "--depth", "2", "--out", "labels"]);
    ok(
        d,
        &["iterate", "--corpus", "gen:6:40", "--labels", "labels/labels.jsonl", "--stub-confidence", "--out", "iter"],
    );
    for t in ["0.5", "1.2"] {
        ok(
            d,
            &[
                "sample",
                "--corpus",
                "gen:6:40",
                "--labels",
                "labels/labels.jsonl",
                "--samples",
                "5",
                "--temperature",
                t,
                "--out",
                &format!("t{t}"),
            ],
        );
    }
    ok(d, &["report", "--run", "iter", "--run", "t0.5", "--run", "t1.2", "--out", "rep"]);
    let corr = fs::read_to_string(d.join("rep/iter/correlation.csv")).unwrap();
    let header = corr.lines().nth(1).unwrap();
    assert_eq!(header.split(',').count(), 10);
    assert_eq!(corr.lines().count(), 2 + 9);
    let curve = fs::read_to_string(d.join("rep/best_of_n.csv")).unwrap();
    assert_eq!(curve.lines().filter(|l| l.starts_with("t1.2,1.2,")).count(), 5);
    assert_eq!(curve.lines().filter(|l| l.starts_with("t0.5,0.5,")).count(), 5);
    let svg = fs::read_to_string(d.join("rep/best_of_n.svg")).unwrap();
    assert!(svg.contains("t0.5 (T=0.5)") && svg.contains("t1.2 (T=1.2)"));
    for f in ["histogram_error.csv", "histogram_bleu.svg", "subsets.csv", "correlation.svg"] {
        assert!(d.join("rep/t1.2").join(f).is_file(), "{f}");
    }

    ok(d, &["dataset", "--run", "iter", "--labels", "labels/labels.jsonl", "--out", "ds"]);
    let mut total = 0;
    for split in ["train", "valid", "test"] {
        for rec in jsonl(&d.join("ds").join(format!("{split}.jsonl"))) {
            let completion = rec["completion"].as_str().unwrap();
            assert!(
                completion.starts_with("I am sure!\n") || completion.starts_with("Let me try again.\n"),
                "{completion}"
            );
            total += 1;
        }
    }
    assert_eq!(total, 40);
}

#[test]
fn report_names_missing_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["optimize", "--corpus", "gen:1:3", "--out", "r"]);
    fs::remove_file(tmp.path().join("r/episodes.jsonl")).unwrap();
    let out = run(tmp.path(), &["report", "--run", "r", "--out", "rep"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("episodes.jsonl"));
}
