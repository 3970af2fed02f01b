use std::path::Path;
use std::process::{Command, Output};

fn specdecay(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specdecay"))
        .args(args)
        .current_dir(dir)
        .env("SPECDECAY_THREADS", "2")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = specdecay(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn populations(dir: &Path, count: &str, size: &str) {
    ok(dir, &["fixtures", "--population", "real", "--count", count, "--size", size, "--seed", "1", "--out", "real"]);
    ok(dir, &["fixtures", "--population", "flat", "--count", count, "--size", size, "--seed", "2", "--out", "gan"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(specdecay(d, &["--help"]).status.code(), Some(0));
    assert_eq!(specdecay(d, &["--version"]).status.code(), Some(0));
    assert_eq!(specdecay(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(specdecay(d, &["features", "x", "--quality", "0"]).status.code(), Some(1));
    assert_eq!(specdecay(d, &["spectrum", "missing.png"]).status.code(), Some(2));
    std::fs::write(d.join("notes.png"), "not an image").unwrap();
    assert_eq!(specdecay(d, &["spectrum", "notes.png"]).status.code(), Some(2));

    populations(d, "4", "32");
    ok(d, &["features", "real", "--label", "real", "--out", "r.csv"]);
    assert_eq!(specdecay(d, &["train", "r.csv", "--k", "2", "--out", "m.json"]).status.code(), Some(1));
    assert_eq!(specdecay(d, &["train", "r.csv", "--k", "3", "--out", "m.json"]).status.code(), Some(2));
    assert_eq!(specdecay(d, &["spoof", "real/real00000.png", "--out", "s.png"]).status.code(), Some(1));
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_specdecay"))
        .args(["features", "real"])
        .current_dir(d)
        .env("SPECDECAY_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(1));
}

#[test]
fn features_train_evaluate_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    populations(d, "10", "64");
    ok(d, &["features", "real", "--label", "real", "--out", "real.csv"]);
    ok(d, &["features", "gan", "--label", "fake", "--tag", "stylegan", "--out", "gan.csv"]);
    let unlabeled = ok(d, &["features", "gan", "--crop", "48", "--quality", "90"]);
    assert!(unlabeled.starts_with("image_id,b1,b2,k_t,n_points,rss,label,source_tag\n"));
    assert_eq!(unlabeled.lines().count(), 11);

    ok(d, &["train", "real.csv", "gan.csv", "--k", "3", "--out", "model/knn.json"]);
    let model: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("model/knn.json")).unwrap()).unwrap();
    assert_eq!(model["k"], 3);
    assert_eq!(model["training"].as_array().unwrap().len(), 20);

    let report: serde_json::Value = serde_json::from_str(&ok(d, &["evaluate", "--model", "model/knn.json", "real.csv", "gan.csv"])).unwrap();
    assert_eq!(report["n_test"], 20);
    assert_eq!(report["overall"], 1.0);
    assert_eq!(report["per_tag"]["stylegan"], 1.0);

    let rows = ok(d, &["predict", "--model", "model/knn.json", "gan.csv"]);
    assert_eq!(rows.lines().count(), 11);
    assert!(rows.lines().skip(1).all(|l| l.ends_with(",fake")));
    let one = ok(d, &["predict", "--model", "model/knn.json", "real/real00003.png"]);
    assert!(one.trim_end().ends_with(",real"), "{one}");
}

#[test]
fn spectrum_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    populations(d, "1", "64");
    let csv = ok(d, &["spectrum", "real/real00000.png", "--bins", "16"]);
    assert!(csv.starts_with("k_r,c,count\n"));
    assert_eq!(csv.lines().count(), 17);
    let json: serde_json::Value = serde_json::from_str(&ok(d, &["spectrum", "gan/flat00000.png", "--normalize", "kt", "--out", "json"])).unwrap();
    assert_eq!(json["spectrum"]["normalization"]["kind"], "threshold");
    assert!(json["fit"]["b2"].as_f64().unwrap() > -1.0);
}

#[test]
fn spoof_toward_explicit_and_image_targets() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    populations(d, "1", "128");
    let report: serde_json::Value = serde_json::from_str(&ok(d, &["spoof", "gan/flat00000.png", "--b1", "5e-4", "--b2", "-4", "--out", "out/spoofed.png"])).unwrap();
    assert_eq!(report["target"]["b2"], -4.0);
    assert!(d.join("out/spoofed.png").is_file());
    let refit: serde_json::Value = serde_json::from_str(&ok(d, &["spectrum", "out/spoofed.png", "--out", "json"])).unwrap();
    assert!(refit["fit"]["b2"].as_f64().unwrap() < -3.0);

    ok(d, &["spoof", "gan/flat00000.png", "--target-image", "real/real00000.png", "--alpha", "10", "--out", "t.jpg"]);
    assert!(d.join("t.jpg").is_file());
}

#[test]
fn experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    populations(d, "12", "64");
    std::fs::write(
        d.join("suite.toml"),
        r#"
resolution = 64
k = 3
seed = 5
shuffle = true

[[datasets]]
name = "real"
root = "real"
label = "real"
source_tag = "real"
train_count = 4
test_count = 8

[[datasets]]
name = "gan"
root = "gan"
label = "fake"
source_tag = "gan"
train_count = 2
test_count = 8
duplicate_to = 8

[[runs]]
name = "native"

[[runs]]
name = "crop48"
crop_to = 48
model_from = "native"

[[runs]]
name = "q85"
quality = 85
"#,
    )
    .unwrap();
    let first = ok(d, &["experiment", "--config", "suite.toml", "--out", "a"]);
    ok(d, &["experiment", "--config", "suite.toml", "--out", "b"]);
    assert_eq!(first.lines().count(), 3);
    let a = std::fs::read(d.join("a/summary.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b/summary.csv")).unwrap());
    assert!(d.join("a/suite.toml").is_file());
    assert!(d.join("a/crop48_predictions.csv").is_file());

    ok(d, &["experiment", "--config", "suite.toml", "--out", "j", "--format", "json"]);
    let results: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("j/results.json")).unwrap()).unwrap();
    assert_eq!(results.as_array().unwrap().len(), 3);

    std::fs::write(d.join("bad.toml"), "resolution = 64\ncrop_to = 80\ndatasets = []\n").unwrap();
    assert_eq!(specdecay(d, &["experiment", "--config", "bad.toml", "--out", "x"]).status.code(), Some(1));
}
