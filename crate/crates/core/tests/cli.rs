use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vrdlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrdlab"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn vrdlab")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = vrdlab(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn gen_small(dir: &Path) {
    ok(dir, &["gen", "--out", "data.json", "--scenes", "6", "--seed", "4", "--top-k", "20"]);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(vrdlab(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(vrdlab(d, &["stats"]).status.code(), Some(1));
    assert_eq!(vrdlab(d, &["sample", "--out", "x.json", "--strategy", "nope"]).status.code(), Some(1));
    assert_eq!(vrdlab(d, &["sample", "--out", "x.json", "--pos-ratio", "1.5"]).status.code(), Some(1));
    assert_eq!(vrdlab(d, &["gen", "--out", "x.json", "--threads", "0"]).status.code(), Some(1));
    assert_eq!(vrdlab(d, &["stats", "--in", "missing.json", "--out", "s.json"]).status.code(), Some(2));
    std::fs::write(d.join("bad.json"), r#"{"version": 7, "mode": {"kind": "general"}, "images": []}"#).unwrap();
    let out = vrdlab(d, &["stats", "--in", "bad.json", "--out", "s.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version 7"));
    assert_eq!(vrdlab(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("cfg.json"), r#"{"scenes": 3, "seed": 9, "synthetic": {"drop_rate": 0.0}}"#).unwrap();
    ok(d, &["gen", "--config", "cfg.json", "--out", "a.json", "--scenes", "2"]);
    let a = read_json(&d.join("a.json"));
    assert_eq!(a["images"].as_array().unwrap().len(), 2);
    assert_eq!(a["generator"]["synthetic"]["seed"], 9);
    assert_eq!(a["generator"]["synthetic"]["drop_rate"], 0.0);

    std::fs::write(d.join("typo.json"), r#"{"scene": 3}"#).unwrap();
    assert_eq!(vrdlab(d, &["gen", "--config", "typo.json", "--out", "b.json"]).status.code(), Some(1));
}

#[test]
fn stats_and_classify_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    gen_small(d);
    ok(d, &["stats", "--in", "data.json", "--out", "stats.json", "--csv", "stats.csv"]);
    ok(d, &["classify", "--in", "data.json", "--out", "classes.jsonl"]);
    let stats = read_json(&d.join("stats.json"));
    assert_eq!(stats["config"]["top_k"], 20);
    let csv = std::fs::read_to_string(d.join("stats.csv")).unwrap();
    assert!(csv.starts_with("class,count\nPOS,"));

    let text = std::fs::read_to_string(d.join("classes.jsonl")).unwrap();
    let mut lines = text.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["config"]["command"], "classify");
    let mut pos = 0u64;
    let mut total = 0u64;
    for line in lines {
        let v: Value = serde_json::from_str(line).unwrap();
        total += 1;
        if v["class"] == "POS" {
            pos += 1;
        }
    }
    let agg = &stats["aggregate"];
    assert_eq!(agg["total"].as_u64().unwrap(), total);
    assert_eq!(agg["POS"].as_u64().unwrap(), pos);
}

#[test]
fn sample_reports_expected_masses() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    gen_small(d);
    ok(d, &[
        "sample", "--in", "data.json", "--out", "s.json", "--strategy", "bnps", "--draws", "50000", "--seed", "1",
    ]);
    let s = read_json(&d.join("s.json"));
    assert_eq!(s["batch"].as_array().unwrap().len(), 64);
    for class in ["POS", "NEG1", "NEG2", "NEG3", "NEG4", "NEG5"] {
        let e = s["expected"][class].as_f64().unwrap();
        let f = s["frequencies"][class].as_f64().unwrap();
        assert!((e - f).abs() < 0.02, "{class}: {e} vs {f}");
    }
    // without --in a synthetic scene is generated from the seed
    ok(d, &["sample", "--out", "t.json", "--draws", "1000"]);
    assert!(read_json(&d.join("t.json"))["config"]["in"].is_null());
}

#[test]
fn train_infer_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    gen_small(d);
    ok(d, &[
        "train", "--in", "data.json", "--out", "m.ckpt", "--epochs", "1", "--feature-dim", "16", "--heads", "2",
        "--strategy", "bnps", "--loss", "focal",
    ]);
    let trace = read_json(&d.join("m.ckpt.trace.json"));
    assert_eq!(trace["config"]["train"]["loss"]["kind"], "focal");
    assert!(!trace["trace"].as_array().unwrap().is_empty());

    ok(d, &["infer", "--model", "m.ckpt", "--in", "data.json", "--out", "p.jsonl"]);
    let text = std::fs::read_to_string(d.join("p.jsonl")).unwrap();
    let first: Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    let s = first["score"].as_f64().unwrap();
    let prod = first["s1"].as_f64().unwrap() * first["s2"].as_f64().unwrap() * first["s_cls"].as_f64().unwrap();
    assert!((s - prod).abs() < 1e-12);

    ok(d, &["eval", "--preds", "p.jsonl", "--in", "data.json", "--out", "e.json", "--recall", "100,20"]);
    let e = read_json(&d.join("e.json"));
    let metrics = e["metrics"].as_array().unwrap();
    let names: Vec<&str> = metrics.iter().map(|m| m["metric"].as_str().unwrap()).collect();
    assert_eq!(names, ["recall@20", "recall@100", "ap_role", "hico_map_default", "hico_map_known_objects"]);
    assert!(metrics[0]["value"].as_f64().unwrap() <= metrics[1]["value"].as_f64().unwrap());
    assert_eq!(e["config"]["ap_convention"], "all-point");
    assert!(metrics.iter().all(|m| (0.0..=1.0).contains(&m["value"].as_f64().unwrap())));

    std::fs::write(d.join("junk.ckpt"), b"nope").unwrap();
    assert_eq!(
        vrdlab(d, &["infer", "--model", "junk.ckpt", "--in", "data.json", "--out", "q.jsonl"]).status.code(),
        Some(2)
    );
}

#[test]
fn thread_count_does_not_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    gen_small(d);
    ok(d, &["stats", "--in", "data.json", "--out", "one.json", "--threads", "1"]);
    ok(d, &["stats", "--in", "data.json", "--out", "four.json", "--threads", "4"]);
    let mut one = read_json(&d.join("one.json"));
    let mut four = read_json(&d.join("four.json"));
    one["config"].take();
    four["config"].take();
    assert_eq!(one, four);
}
