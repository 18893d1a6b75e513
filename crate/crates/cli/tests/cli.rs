use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gsmcad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsmcad")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = gsmcad(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn corpus(dir: &Path, count: &str) {
    ok(&["gen-data", "--count", count, "--min-len", "20", "--max-len", "40", "--pad-to", "48", "--seed", "5", "--out", s(dir)]);
}

#[test]
fn tokenize_detokenize_roundtrip_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    corpus(&data, "3");
    let seq = data.join("00000.json");
    let tree = tmp.path().join("tree.json");
    ok(&["detokenize", s(&seq), "--out", s(&tree)]);
    let seq2 = tmp.path().join("seq2.json");
    ok(&["tokenize", s(&tree), "--max-len", "48", "--out", s(&seq2)]);
    let tree2 = tmp.path().join("tree2.json");
    ok(&["detokenize", s(&seq2), "--out", s(&tree2)]);
    assert_eq!(fs::read(&tree).unwrap(), fs::read(&tree2).unwrap());
    assert_eq!(fs::read(&seq).unwrap(), fs::read(&seq2).unwrap());
}

#[test]
fn validate_and_execute() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    corpus(&data, "1");
    let seq = data.join("00000.json");
    let report = ok(&["validate", s(&seq)]);
    assert!(String::from_utf8_lossy(&report.stdout).contains("\"executes_to_solid\": true"));
    let obj = tmp.path().join("shape.obj");
    let vox = tmp.path().join("shape.vox");
    ok(&["execute", s(&seq), "--points", "100", "--out", s(&obj), "--voxels", s(&vox)]);
    let text = fs::read_to_string(&obj).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 100);
    assert!(fs::metadata(&vox).unwrap().len() > 0);
}

#[test]
fn exit_codes_classify_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    assert_eq!(gsmcad(&["validate", s(&missing)]).status.code(), Some(2));
    let garbage = tmp.path().join("bad.json");
    fs::write(&garbage, "{\"not\": \"a sequence\"}").unwrap();
    assert_eq!(gsmcad(&["detokenize", s(&garbage)]).status.code(), Some(1));
    // structurally well-formed but never closes its program
    let data = tmp.path().join("data");
    corpus(&data, "1");
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(data.join("00000.json")).unwrap()).unwrap();
    let toks = v["tokens"].as_array_mut().unwrap();
    toks.truncate(3);
    fs::write(&garbage, v.to_string()).unwrap();
    assert_eq!(gsmcad(&["validate", s(&garbage)]).status.code(), Some(1));
}

#[test]
fn gen_data_is_deterministic_and_stats_echo_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    corpus(&a, "6");
    corpus(&b, "6");
    for i in 0..6 {
        let f = format!("{i:05}.json");
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap());
    }
    let csv = String::from_utf8(ok(&["stats", s(&a)]).stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("reference,215914,36.20,76.60,12.00,5.90,5.20,0.21"), "{csv}");
    let bins: f64 = lines[1].split(',').skip(3).map(|x| x.parse::<f64>().unwrap()).sum();
    assert!((bins - 100.0).abs() < 0.1);
}

#[test]
fn eval_of_identical_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    corpus(&data, "4");
    let out = tmp.path().join("report.csv");
    ok(&["eval", "--gen", s(&data), "--ref", s(&data), "--points", "64", "--out", s(&out)]);
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<&str> = lines[1].split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()].parse::<f64>().unwrap();
    assert_eq!(col("cov"), 100.0);
    assert_eq!(col("mmd_x100"), 0.0);
    assert_eq!(col("jsd_x100"), 0.0);
    assert_eq!(col("valid"), 100.0);
    assert!(tmp.path().join("report.json").exists());
}

#[test]
fn train_sample_eval_and_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    corpus(&data, "4");
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"model": {"d_e": 8, "n_blocks": 1, "n_ts": 48}, "train": {"batch": 2}}"#).unwrap();
    let ck = tmp.path().join("model.ckpt");
    let log = tmp.path().join("log.jsonl");
    let base = ["train", "--data", s(&data), "--config", s(&cfg), "--seed", "3"];
    ok(&[&base[..], &["--steps", "4", "--out", s(&ck), "--log", s(&log)]].concat());
    let full: Vec<String> = fs::read_to_string(&log).unwrap().lines().map(String::from).collect();
    assert_eq!(full.len(), 4);

    // two steps, then resume for two more: the logged trajectory matches
    let ck2 = tmp.path().join("half.ckpt");
    let log2 = tmp.path().join("log2.jsonl");
    ok(&[&base[..], &["--steps", "2", "--out", s(&ck2), "--log", s(&log2)]].concat());
    ok(&["train", "--data", s(&data), "--resume", s(&ck2), "--steps", "4", "--out", s(&ck2), "--log", s(&log2)]);
    let resumed: Vec<String> = fs::read_to_string(&log2).unwrap().lines().map(String::from).collect();
    assert_eq!(resumed, full);
    assert_eq!(fs::read(&ck).unwrap(), fs::read(&ck2).unwrap());

    let samples = tmp.path().join("samples");
    let out = ok(&["sample", "--checkpoint", s(&ck), "-n", "3", "--seed", "1", "--out", s(&samples)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"samples\":3"));
    assert!(samples.join("summary.json").exists());
    let again = tmp.path().join("again");
    ok(&["sample", "--checkpoint", s(&ck), "-n", "3", "--seed", "1", "--out", s(&again)]);
    assert_eq!(fs::read(samples.join("00000.json")).unwrap(), fs::read(again.join("00000.json")).unwrap());

    let report = ok(&["eval", "--ref", s(&data), "--checkpoint", s(&ck), "--paired-mode", "one-shot:1"]);
    let csv = String::from_utf8(report.stdout).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().split(',').nth(11).is_some_and(|acc| !acc.is_empty()), "{csv}");
}

#[test]
fn ablation_variant_trains_with_same_report_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    corpus(&data, "2");
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"model": {"d_e": 8, "n_blocks": 1, "n_ts": 48}, "train": {"batch": 2}}"#).unwrap();
    let ck = tmp.path().join("v.ckpt");
    ok(&["train", "--data", s(&data), "--config", s(&cfg), "--variant", "vanilla_ssd", "--steps", "2", "--out", s(&ck)]);
    let csv = String::from_utf8(ok(&["eval", "--ref", s(&data), "--checkpoint", s(&ck), "--paired-mode", "chain:2"]).stdout).unwrap();
    assert!(csv.starts_with("samples,cov,mmd_x100"));
    assert_eq!(gsmcad(&["train", "--data", s(&data), "--variant", "nope", "--out", s(&ck)]).status.code(), Some(1));
}

#[test]
fn bench_scan_emits_csv() {
    let out = ok(&["bench-scan", "--lengths", "16,32", "--d-e", "8", "--blocks", "1", "--reps", "1"]);
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "L,seconds,peak_bytes");
    assert_eq!(lines.len(), 3);
    let mem: Vec<usize> = lines[1..].iter().map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(mem[1] > mem[0]);
}
