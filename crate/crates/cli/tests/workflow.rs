//! End-to-end CLI workflow over the bundled fixtures and the scripted
//! backend: ingest-check → split → synthesize-guidance → judge → evaluate →
//! analyze-bias → report → compare-baselines.

use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn critjudge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_critjudge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = critjudge(args);
    assert!(
        out.status.success(),
        "critjudge {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn arg(path: &PathBuf) -> &str {
    path.to_str().expect("utf-8 path")
}

#[test]
fn test_full_workflow_on_fixtures() {
    let data = fixture("dataset.jsonl");
    let script = fixture("mock_script.json");
    let work = tempfile::tempdir().unwrap();
    let split = work.path().join("split.json");
    let guidance = work.path().join("guidance.json");
    let run_dir = work.path().join("run");
    let metrics = work.path().join("metrics.json");
    let bias = work.path().join("bias.json");
    let config = work.path().join("config.toml");

    // ingest-check: the fixture dataset is well-formed.
    let out = run_ok(&["ingest-check", "--data", arg(&data)]);
    assert!(out.contains("instances: 5"), "unexpected ingest-check output: {out}");

    // split: 5 instances at the default 0.2 train fraction → 1 train, 4 val.
    run_ok(&["split", "--data", arg(&data), "--seed", "7", "--out", arg(&split)]);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&split).unwrap()).unwrap();
    assert_eq!(manifest["train_ids"].as_array().unwrap().len(), 1);
    assert_eq!(manifest["val_ids"].as_array().unwrap().len(), 4);

    // synthesize-guidance from the train split, against the scripted backend.
    run_ok(&[
        "synthesize-guidance",
        "--data",
        arg(&data),
        "--split",
        arg(&split),
        "--out",
        arg(&guidance),
        "--synthesizer",
        "synth-model",
        "--backend",
        "mock",
        "--mock-script",
        arg(&script),
    ]);
    let artifact = critjudge::guidance::load_artifact(&guidance).expect("artifact verifies");
    assert_eq!(artifact.provenance.synthesizer_model_id, "synth-model");
    assert_eq!(artifact.provenance.record_count, 1);
    assert_eq!(artifact.category_specific_guidance.len(), 6);

    // judge the validation split with the synthesized guidance injected.
    std::fs::write(
        &config,
        format!(
            "[pipeline]\nguidance_mode = \"global_plus_category\"\nguidance_artifact = {:?}\n",
            guidance
        ),
    )
    .unwrap();
    let out = run_ok(&[
        "judge",
        "--data",
        arg(&data),
        "--split",
        arg(&split),
        "--config",
        arg(&config),
        "--run-dir",
        arg(&run_dir),
        "--backend",
        "mock",
        "--mock-script",
        arg(&script),
    ]);
    assert!(out.contains("4 instances"), "unexpected judge output: {out}");
    let results = critjudge::harness::runner::load_results(&run_dir.join("results.jsonl"))
        .expect("results log parses");
    assert_eq!(results.len(), 4);
    assert!(results.iter().all(|r| r.prediction.is_some()));
    assert!(run_dir.join("report.json").exists());

    // judge again: the run resumes entirely from the cache.
    let out = run_ok(&[
        "judge",
        "--data",
        arg(&data),
        "--split",
        arg(&split),
        "--config",
        arg(&config),
        "--run-dir",
        arg(&run_dir),
        "--backend",
        "mock",
        "--mock-script",
        arg(&script),
    ]);
    assert!(out.contains("model calls: 0 network"), "re-run was not fully cached: {out}");

    // evaluate against the human labels.
    let out = run_ok(&[
        "evaluate",
        "--results",
        arg(&run_dir.join("results.jsonl")),
        "--data",
        arg(&data),
        "--split",
        arg(&split),
        "--out",
        arg(&metrics),
    ]);
    assert!(out.contains("accuracy"), "unexpected evaluate output: {out}");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&metrics).unwrap()).unwrap();
    assert_eq!(report["n"].as_u64(), Some(4));
    assert!(report["overall_accuracy"].is_number());
    assert_eq!(report["per_category"].as_object().map(|m| m.len()), Some(4));

    // analyze-bias: pre- and post-filter distributions at both levels.
    run_ok(&["analyze-bias", "--results", arg(&run_dir.join("results.jsonl")), "--out", arg(&bias)]);
    let stats: serde_json::Value = serde_json::from_slice(&std::fs::read(&bias).unwrap()).unwrap();
    for level in ["criterion_level", "sample_level"] {
        for stage in ["pre_scf", "post_scf"] {
            assert!(!stats[level][stage].is_null(), "missing {level}/{stage}");
        }
    }

    // report: summarizes the finished run directory.
    let out = run_ok(&[
        "report",
        "--run-dir",
        arg(&run_dir),
        "--data",
        arg(&data),
        "--split",
        arg(&split),
    ]);
    assert!(
        out.contains("swap-consistency pool") && out.contains("position bias"),
        "unexpected report output: {out}"
    );

    // compare-baselines over two methods sharing the same split.
    let compare_dir = work.path().join("compare");
    let out = run_ok(&[
        "compare-baselines",
        "--data",
        arg(&data),
        "--split",
        arg(&split),
        "--run-dir",
        arg(&compare_dir),
        "--methods",
        "monolithic,pairwise",
        "--backend",
        "mock",
        "--mock-script",
        arg(&script),
    ]);
    assert!(out.contains("monolithic") && out.contains("pairwise"));
    let comparison: serde_json::Value =
        serde_json::from_slice(&std::fs::read(compare_dir.join("comparison.json")).unwrap())
            .unwrap();
    let rows = comparison["methods"].as_array().expect("comparison.json lists methods");
    assert_eq!(rows.len(), 2);
    let names: Vec<&str> = rows.iter().filter_map(|r| r["method"].as_str()).collect();
    assert_eq!(names, ["monolithic", "pairwise"]);
}
