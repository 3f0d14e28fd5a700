use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qaprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qaprobe")).args(args).output().expect("spawn qaprobe")
}

fn ok(args: &[&str]) -> String {
    let out = qaprobe(args);
    assert!(out.status.success(), "qaprobe {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, mode: Option<&str>) {
    let mut args = vec!["gen", "--seed", "7", "--n-train", "200", "--n-test", "120", "-o", p(dir)];
    if let Some(m) = mode {
        args.extend(["--mode", m]);
    }
    ok(&args);
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn image_pipeline_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, out) = (tmp.path().join("data"), tmp.path().join("out"));
    ok(&["gen", "--seed", "7", "--mode", "label_biased", "-o", p(&data)]);
    let listed = ok(&["analyze", "image", "--data", p(&data), "--adapter", "toy", "-o", p(&out)]);
    for f in ["image.json", "image.csv", "image_histogram.csv", "image_cumulative.csv", "image.svg"] {
        assert!(out.join(f).is_file(), "{f} missing");
        assert!(listed.lines().any(|l| l == f), "{f} not listed");
    }
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "analyze image");
    assert_eq!(manifest["adapter"]["spec"], "toy");
    let recorded: Vec<&str> =
        manifest["dataset_files"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    assert_eq!(recorded, ["instances.jsonl", "image_features.vec", "word_vectors.vec"]);
    let report = read_json(&out.join("image.json"));
    assert_eq!(report["report"], "image");
}

#[test]
fn missing_capability_exits_one_with_json_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, None);
    let out = qaprobe(&["analyze", "novelty", "--data", p(&data), "--adapter", "const:yes", "-o", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "capability");
}

#[test]
fn all_skips_what_the_adapter_cannot_do() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, out) = (tmp.path().join("data"), tmp.path().join("out"));
    gen(&data, None);
    ok(&["analyze", "all", "--data", p(&data), "--adapter", "const:yes", "-o", p(&out)]);
    let manifest = read_json(&out.join("manifest.json"));
    let skipped: Vec<&str> = manifest["skipped"].as_array().unwrap().iter().map(|s| s["analysis"].as_str().unwrap()).collect();
    assert!(skipped.contains(&"novelty"));
    assert!(out.join("question.json").is_file());
}

#[test]
fn bad_invocations_exit_two() {
    for args in [&["analyze", "bogus"][..], &["analyze", "image", "--k", "x"], &["gen", "--mode", "nope", "-o", "x"], &["frobnicate"]] {
        assert_eq!(qaprobe(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn missing_data_dir_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qaprobe(&["analyze", "image", "--data", p(&tmp.path().join("absent")), "-o", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "data");
}

#[test]
fn csv_matches_json() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, out) = (tmp.path().join("data"), tmp.path().join("out"));
    gen(&data, Some("first_word_keyed"));
    ok(&["analyze", "question", "--data", p(&data), "--adapter", "toy", "-o", p(&out)]);
    let report = read_json(&out.join("question.json"));
    let mut rows = csv::Reader::from_path(out.join("question.csv")).unwrap();
    let all: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).filter(|r| &r[0] == "all").collect();
    let points = report["per_point"].as_array().unwrap();
    assert_eq!(all.len(), points.len());
    for (row, point) in all.iter().zip(points) {
        assert_eq!(row[1], point["pct"].to_string());
        assert_eq!(row[2], point["fraction_same_as_full"].to_string());
        assert_eq!(row[3], point["mean_accuracy"].to_string());
    }
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, out) = (tmp.path().join("data"), tmp.path().join("out"));
    gen(&data, Some("novelty_planted"));
    let config = tmp.path().join("run.toml");
    fs::write(&config, "k = [3, 7]\nseed = 5\nadapter = \"const:no\"\n").unwrap();
    ok(&["analyze", "novelty", "--config", p(&config), "--data", p(&data), "--adapter", "toy", "--k", "2,4", "-o", p(&out)]);
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["effective_config"]["adapter"], "toy");
    assert_eq!(manifest["effective_config"]["k"], serde_json::json!([2, 4]));
    assert_eq!(manifest["effective_config"]["seed"], 5);
    let ks: Vec<u64> = read_json(&out.join("novelty.json"))["per_k"].as_array().unwrap().iter().map(|r| r["k"].as_u64().unwrap()).collect();
    assert_eq!(ks, vec![2, 4]);
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    fs::write(&config, "neighbours = 3\n").unwrap();
    let out = qaprobe(&["analyze", "image", "--config", p(&config)]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn render_reproduces_charts() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, out, again) = (tmp.path().join("data"), tmp.path().join("out"), tmp.path().join("again"));
    gen(&data, Some("label_biased"));
    ok(&["analyze", "image", "--data", p(&data), "--adapter", "toy", "-o", p(&out)]);
    ok(&["render", "--report", p(&out.join("image.json")), "-o", p(&again)]);
    for f in ["image.svg", "image_cumulative.svg"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn dump_adapter_replays_recorded_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, None);
    let dump = tmp.path().join("preds.dump");
    ok(&["dump", "--data", p(&data), "--adapter", "toy", "--probes", "full,img:mean,q:mean,both:mean,prefix:0", "--embed", "-o", p(&dump)]);
    let (live, replay) = (tmp.path().join("live"), tmp.path().join("replay"));
    let spec = format!("dump:{}", p(&dump));
    ok(&["analyze", "ablation", "--data", p(&data), "--adapter", "toy", "-o", p(&live)]);
    ok(&["analyze", "ablation", "--data", p(&data), "--adapter", &spec, "-o", p(&replay)]);
    assert_eq!(fs::read(live.join("ablation.json")).unwrap(), fs::read(replay.join("ablation.json")).unwrap());
}
