use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn metaembed(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metaembed"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

fn synth(dir: &Path) {
    let out = metaembed(
        &[
            "synth", "--out", "fixture", "--n", "150", "--latent-dim", "6", "--source", "8:0.1:0.9", "--source",
            "10:0.1:0.9", "--k", "12", "--dim", "6", "--seed", "3",
        ],
        dir,
    );
    stdout_json(&out);
}

#[test]
fn synth_then_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let out = metaembed(&["run", "--config", "fixture/config.toml", "--out", "result"], dir.path());
    let summary = stdout_json(&out);
    assert_eq!(summary["cache_misses"], 5);
    let records = summary["records"].as_array().unwrap();
    assert_eq!(records.len(), 3);
    assert!(records.iter().all(|r| r["score"].is_number()));
    for file in ["meta.bin", "meta.txt", "report.json", "report.csv"] {
        assert!(dir.path().join("result").join(file).exists(), "{file} missing");
    }

    let again = stdout_json(&metaembed(&["run", "--config", "fixture/config.toml", "--out", "result"], dir.path()));
    assert_eq!(again["cache_misses"], 0);
}

#[test]
fn stage_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let d = dir.path();
    let ingest = stdout_json(&metaembed(&["ingest", "fixture/src0.txt", "--out", "src0.bin"], d));
    assert_eq!(ingest["dim"], 8);

    let srcs = ["src0.bin", "fixture/src1.txt"];
    let knn = stdout_json(&metaembed(
        &["knn", srcs[0], srcs[1], "--k", "12", "--out", "graph.bin", "--text", "graph.txt"],
        d,
    ));
    assert_eq!(knn["sources"], 2);
    assert!(d.join("graph.txt").exists());

    for solver in ["sgd", "exact"] {
        let w = stdout_json(&metaembed(
            &[
                "weights", srcs[0], srcs[1], "--graph", "graph.bin", "--solver", solver, "--out", "w.bin", "--text",
                "w.txt",
            ],
            d,
        ));
        assert!(w["reconstruction_error"].as_f64().unwrap() >= 0.0);
    }
    let proj = stdout_json(&metaembed(
        &["project", "--graph", "graph.bin", "--weights", "w.bin", "--dim", "5", "--out", "meta.bin"],
        d,
    ));
    assert_eq!(proj["eigenvalues"].as_array().unwrap().len(), 6);

    let eval = stdout_json(&metaembed(
        &["eval", "meta.bin", "--task", "overlap=fixture/latent.txt", "--out", "eval.json"],
        d,
    ));
    assert!(eval["records"][0]["score"].is_number());
    assert!(d.join("eval.json").exists());
}

#[test]
fn baselines_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let d = dir.path();
    let conc = stdout_json(&metaembed(
        &["conc", "fixture/src0.txt", "fixture/src1.txt", "--out", "conc.txt", "--format", "glove-text"],
        d,
    ));
    assert_eq!(conc["dim"], 18);
    let union = stdout_json(&metaembed(&["conc", "fixture/src0.txt", "fixture/src1.txt", "--union", "--out", "u.bin"], d));
    assert_eq!(union["words"], 150);
    let svd = stdout_json(&metaembed(&["svd", "fixture/src0.txt", "fixture/src1.txt", "--dim", "4", "--out", "svd.bin"], d));
    assert_eq!(svd["singular_values"].as_array().unwrap().len(), 4);
}

#[test]
fn sweep_and_ablate() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let d = dir.path();
    let sweep = stdout_json(&metaembed(
        &["sweep", "--config", "fixture/config.toml", "--out", "sw", "--axis", "dimension", "--values", "2,4"],
        d,
    ));
    assert_eq!(sweep["rows"].as_array().unwrap().len(), 2);
    assert!(d.join("sw/sweep-dimension.csv").exists());

    let ablate = metaembed(&["ablate", "--config", "fixture/config.toml", "--hold-out", "src0"], d);
    assert_eq!(ablate.status.code(), Some(1));
    let err = stderr_json(&ablate);
    assert_eq!(err["error"]["kind"], "invalid_argument");
    assert_eq!(err["error"]["stage"], "config");
}

#[test]
fn failures_emit_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.txt"), "a 1 2\nb 1\n").unwrap();
    let out = metaembed(&["ingest", "bad.txt", "--format", "glove-text", "--out", "x.bin"], d);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "parse");
    assert!(err["error"]["message"].as_str().unwrap().contains("bad.txt:2"));

    let out = metaembed(&["ingest", "missing.txt", "--out", "x.bin"], d);
    assert_eq!(stderr_json(&out)["error"]["kind"], "io");

    let out = metaembed(&["run", "--config", "nope.toml"], d);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "io");

    std::fs::write(d.join("c.toml"), "k = 0\n[[sources]]\npath = \"a\"\nformat = \"glove-text\"\n").unwrap();
    let out = metaembed(&["run", "--config", "c.toml"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["error"]["message"].is_string());
}

#[test]
fn usage_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = metaembed(&["knn", "--k", "many"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "usage");

    let out = metaembed(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = metaembed(&["--help"], dir.path());
    assert!(out.status.success());
}
