use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use vsdb::store::Shard;
use vsdb::synth::{local_delta_corpus, LocalDeltaSpec};

fn vsdb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsdb")).args(args).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is one JSON value")
}

fn stdout_lines(o: &Output) -> Vec<Value> {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

const TWO_SEQUENCES: &str = r#"{"id": "a", "vectors": [[0, 0], [1, 0], [2, 0]]}
{"id": "b", "vectors": [[0, 1], [0, 2]]}
"#;

#[test]
fn build_reports_counts() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "seqs.jsonl", TWO_SEQUENCES);
    let out = dir.path().join("store.vsdb");
    let v = stdout_json(&vsdb(&["build", "--input", p(&input), "--out", p(&out)]));
    assert_eq!(v["records"], 5);
    assert_eq!(v["sequences"], 2);
    assert_eq!(v["shards"], 1);
    let shard = Shard::load(&out).unwrap();
    assert_eq!(shard.len(), 5);
    assert_eq!(shard.absent_delta_count(), 2);
}

#[test]
fn malformed_line_exits_two_with_line_number() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "bad.jsonl", &format!("{TWO_SEQUENCES}{{\"id\": \"c\", \"vectors\": [[0, \n"));
    let out = dir.path().join("store.vsdb");
    let o = vsdb(&["build", "--input", p(&input), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "parse");
    assert_eq!(err["line"], 3);
    assert!(!out.exists());
}

#[test]
fn reload_and_resave_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "seqs.jsonl", TWO_SEQUENCES);
    let out = dir.path().join("store.vsdb");
    stdout_json(&vsdb(&["build", "--input", p(&input), "--out", p(&out)]));
    let bytes = fs::read(&out).unwrap();
    let again = dir.path().join("again.vsdb");
    Shard::load(&out).unwrap().save(&again).unwrap();
    assert_eq!(fs::read(&again).unwrap(), bytes);
}

#[test]
fn shard_key_splits_into_sorted_files() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "seqs.jsonl",
        r#"{"id": "a", "src": "y", "vectors": [[0, 0], [1, 0]]}
{"id": "b", "src": "x", "vectors": [[0, 1], [0, 2]]}
{"id": "c", "src": "y", "vectors": [[5, 5]]}
"#,
    );
    let out = dir.path().join("shards");
    let v = stdout_json(&vsdb(&["build", "--input", p(&input), "--out", p(&out), "--shard-key", "src"]));
    assert_eq!(v["shards"], 2);
    assert_eq!(Shard::load(out.join("x.vsdb")).unwrap().len(), 2);
    assert_eq!(Shard::load(out.join("y.vsdb")).unwrap().len(), 3);
}

#[test]
fn query_finds_exact_vector() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "seqs.jsonl", TWO_SEQUENCES);
    let store = dir.path().join("store.vsdb");
    stdout_json(&vsdb(&["build", "--input", p(&input), "--out", p(&store)]));
    let lines = stdout_lines(&vsdb(&["query", "--shard", p(&store), "--vector", "[1, 0]", "--k", "2"]));
    assert_eq!(lines.len(), 1);
    let hits = lines[0]["neighbors"].as_array().unwrap();
    assert_eq!(hits.len(), 2);
    assert_eq!(hits[0]["index"], 1);
    assert_eq!(hits[0]["distance"], 0.0);
}

fn synthetic_store(dir: &TempDir) -> (vsdb::synth::LocalDeltaCorpus, std::path::PathBuf) {
    synthetic_store_with(dir, 20)
}

fn synthetic_store_with(dir: &TempDir, n_anchors: usize) -> (vsdb::synth::LocalDeltaCorpus, std::path::PathBuf) {
    let spec = LocalDeltaSpec { n_anchors, sequences_per_anchor: 200, dim: 4, ..Default::default() };
    let data = local_delta_corpus(&spec).unwrap();
    let path = dir.path().join("synthetic.vsdb");
    data.corpus.shards()[0].save(&path).unwrap();
    (data, path)
}

const FIELD: [&str; 6] = ["--top-n", "200", "--d-max", "1.0", "--top-n-zeta", "4"];

#[test]
fn score_empty_pairs() {
    let dir = TempDir::new().unwrap();
    let (_, store) = synthetic_store(&dir);
    let pairs = write(&dir, "pairs.jsonl", "");
    let out = dir.path().join("scored");
    let v = stdout_json(&vsdb(&["score", "--shard", p(&store), "--pairs", p(&pairs), "--out", p(&out)]));
    assert_eq!(v["examples"], 0);
    assert!(v["metrics"].is_null());
    assert_eq!(fs::read_to_string(out.join("outcomes.jsonl")).unwrap(), "");
    assert!(!out.join("metrics.json").exists());
}

#[test]
fn score_labeled_pairs_writes_metrics() {
    let dir = TempDir::new().unwrap();
    let (data, store) = synthetic_store(&dir);
    let text: String = data
        .labeled_pairs(20, 6.0, 5)
        .iter()
        .map(|e| serde_json::to_string(e).unwrap() + "\n")
        .collect();
    let pairs = write(&dir, "pairs.jsonl", &text);
    let out = dir.path().join("scored");
    let mut args = vec!["score", "--shard", p(&store), "--pairs", p(&pairs), "--out", p(&out)];
    args.extend(FIELD);
    let v = stdout_json(&vsdb(&args));
    assert_eq!(v["examples"], 40);
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    for key in ["tp", "tn", "fp", "fn", "unsure", "rejected", "precision", "recall", "f1", "mcc", "auc", "log_loss", "coverage"] {
        assert!(m.get(key).is_some(), "missing {key}");
    }
    let covered = ["tp", "tn", "fp", "fn"].iter().map(|k| m[*k].as_u64().unwrap()).sum::<u64>();
    let total = covered + m["unsure"].as_u64().unwrap() + m["rejected"].as_u64().unwrap();
    assert_eq!(total, 40);
    assert_eq!(fs::read_to_string(out.join("outcomes.jsonl")).unwrap().lines().count(), 40);
}

#[test]
fn verbatim_corpus_pairs_are_mostly_negative() {
    let dir = TempDir::new().unwrap();
    let (data, store) = synthetic_store(&dir);
    let shard = &data.corpus.shards()[0];
    let mut text = String::new();
    for seq in (0..shard.sequence_count() as u32).step_by(40) {
        let r = shard.sequence_range(seq).unwrap();
        let s1: Vec<f64> = shard.vector(r.start).iter().map(|&x| x as f64).collect();
        let s2: Vec<f64> = shard.vector(r.start + 1).iter().map(|&x| x as f64).collect();
        text += &serde_json::json!({ "s1": s1, "s2": s2 }).to_string();
        text.push('\n');
    }
    let pairs = write(&dir, "pairs.jsonl", &text);
    let mut args = vec!["score", "--shard", p(&store), "--pairs", p(&pairs), "--zeta-low", "1", "--zeta-high", "3"];
    args.extend(FIELD);
    let lines = stdout_lines(&vsdb(&args));
    assert_eq!(lines.len(), 100);
    let negative = lines.iter().filter(|l| l["label"] == "negative").count();
    assert!(negative * 2 > lines.len(), "{negative} of {}", lines.len());
    assert!(lines.iter().all(|l| l["label"] != "positive" || l["zeta_test"].as_f64().unwrap() > 3.0));
}

#[test]
fn missing_shard_fails_with_json_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.vsdb");
    let o = vsdb(&["query", "--shard", p(&missing), "--vector", "[0, 0]"]);
    assert!(!o.status.success());
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["error"].is_string());
    assert!(err["message"].is_string());
}

#[test]
fn sweep_of_separated_scores_has_zero_aurc() {
    let dir = TempDir::new().unwrap();
    let mut text = String::new();
    for i in 0..20 {
        let (z, label) = if i % 2 == 0 { (0.1 * i as f64 / 20.0, "neg") } else { (5.0 + i as f64, "pos") };
        text += &format!("{{\"zeta_test\": {z}, \"label\": \"{label}\"}}\n");
    }
    let scores = write(&dir, "scores.jsonl", &text);
    let out = dir.path().join("sweep");
    let v = stdout_json(&vsdb(&["sweep", "--scores", p(&scores), "--out", p(&out)]));
    assert_eq!(v["aurc"], 0.0);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("zeta_low,zeta_high,f1,coverage,risk,tp,tn,fp,fn,unsure,rejected"));
    assert_eq!(csv.lines().count() as u64 - 1, v["cells"].as_u64().unwrap());
}

#[test]
fn calibrate_gaussian_corpus_passes() {
    let dir = TempDir::new().unwrap();
    let (data, store) = synthetic_store_with(&dir, 60);
    let text: String = data.anchors.iter().map(|a| serde_json::to_string(a).unwrap() + "\n").collect();
    let anchors = write(&dir, "anchors.jsonl", &text);
    let mut args = vec!["calibrate", "--shard", p(&store), "--anchors", p(&anchors), "--seed", "3"];
    args.extend(["--top-n", "400", "--d-max", "1.0", "--top-n-zeta", "4"]);
    let v = stdout_json(&vsdb(&args));
    assert_eq!(v["anchors_total"], 60);
    assert!(v["pass_fraction"].as_f64().unwrap() >= 0.8, "{v}");
}

#[test]
fn ballistics_defaults_separate_clean_from_drag() {
    let v = stdout_json(&vsdb(&["ballistics"]));
    assert!(v["zeta_clean"].as_f64().unwrap() < 1.0, "{v}");
    assert!(v["zeta_drag"].as_f64().unwrap() > 10.0, "{v}");
}

#[test]
fn ballistics_writes_csv_files() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    stdout_json(&vsdb(&["ballistics", "--n-trajectories", "50", "--dt", "0.01", "--out", p(&out), "--with-corpus"]));
    for f in ["query_clean.csv", "query_drag.csv", "zeta_clean.csv", "zeta_drag.csv", "corpus.csv"] {
        let text = fs::read_to_string(out.join(f)).unwrap();
        assert!(text.lines().count() > 1, "{f} is empty");
    }
}

#[test]
fn same_seed_gives_identical_output() {
    let dir = TempDir::new().unwrap();
    let (_, store) = synthetic_store(&dir);
    let run = || {
        let o = vsdb(&["geometry", "--shard", p(&store), "--clusters", "5", "--seed", "9"]);
        assert!(o.status.success());
        o.stdout
    };
    let first = run();
    assert!(!first.is_empty());
    assert_eq!(first, run());
    let calib = || vsdb(&["calibrate", "--shard", p(&store), "--sample", "10", "--seed", "4", "--top-n", "100", "--d-max", "1.0"]).stdout;
    assert_eq!(calib(), calib());
}

#[test]
fn walk_emits_requested_steps() {
    let dir = TempDir::new().unwrap();
    let (data, store) = synthetic_store(&dir);
    let start = serde_json::to_string(&data.anchors[0]).unwrap();
    let lines = stdout_lines(&vsdb(&["walk", "--shard", p(&store), "--start", &start, "--steps", "3", "--d-max", "1.0"]));
    assert!(!lines.is_empty() && lines.len() <= 4);
}

#[test]
fn config_file_rejects_unknown_keys() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.toml", "top-n = 5\nbogus = 1\n");
    let o = vsdb(&["--config", p(&cfg), "ballistics", "--n-trajectories", "10"]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "parameter");
}

#[test]
fn every_subcommand_has_help() {
    for cmd in ["build", "query", "score", "walk", "calibrate", "evaluate", "sweep", "geometry", "ballistics"] {
        let o = vsdb(&[cmd, "--help"]);
        assert!(o.status.success(), "{cmd}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"), "{cmd}");
    }
}
