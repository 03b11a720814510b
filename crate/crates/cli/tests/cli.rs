use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn grove(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grove")).args(args).current_dir(dir).output().expect("run grove")
}

fn ok(args: &[&str], dir: &Path) {
    let out = grove(args, dir);
    assert!(out.status.success(), "grove {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn simulate_train_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &["simulate", "--design", "smooth", "--n", "300", "--d", "3", "--seed", "5", "--out", "data.csv", "--points-out", "pts.csv", "--test-points", "15"],
        d,
    );
    let data = csv_rows(&d.join("data.csv"));
    assert_eq!(data[0], ["x1", "x2", "x3", "y", "w"]);
    assert_eq!(data.len(), 301);
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("data.truth.json")).unwrap()).unwrap();
    assert_eq!(truth["design"], "smooth");
    assert_eq!(truth["true_tau"].as_array().unwrap().len(), 15);

    ok(
        &[
            "train", "--data", "data.csv", "--mode", "causal_double_sample", "--trees", "60", "--subsample", "150",
            "--min-leaf", "2", "--alpha", "0.05", "--pi", "0.25", "--seed", "9", "--model-out", "model.json",
        ],
        d,
    );
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["config"]["num_trees"], 60);
    assert_eq!(model["n_train"], 300);

    ok(&["predict", "--model", "model.json", "--points", "pts.csv", "--ci-level", "0.9", "--out", "pred.csv"], d);
    let pred = csv_rows(&d.join("pred.csv"));
    assert_eq!(pred[0], ["x1", "x2", "x3", "estimate", "variance", "ci_low", "ci_high"]);
    assert_eq!(pred.len(), 16);
    for row in &pred[1..] {
        let v: Vec<f64> = row.iter().map(|s| s.parse().unwrap()).collect();
        assert!(v[4] >= 0.0 && v[5] <= v[3] && v[3] <= v[6]);
    }

    // Same seed, same model.
    ok(&["train", "--data", "data.csv", "--mode", "causal_double_sample", "--trees", "60", "--subsample", "150", "--min-leaf", "2", "--seed", "9", "--model-out", "again.json", "--sequential"], d);
    assert_eq!(fs::read(d.join("model.json")).unwrap(), fs::read(d.join("again.json")).unwrap());

    ok(&["predict", "--knn", "5", "--data", "data.csv", "--points", "pts.csv", "--out", "knn.csv"], d);
    let knn = csv_rows(&d.join("knn.csv"));
    assert_eq!(knn[0].last().unwrap(), "method");
    assert!(knn[1..].iter().all(|r| r.last().unwrap() == "knn-5"));
}

#[test]
fn train_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--design", "confounded", "--n", "200", "--d", "2", "--out", "data.csv"], d);
    let cfg = r#"{"num_trees": 30, "subsample_size": 40, "min_leaf": 1, "alpha": 0.05, "pi": 0.25, "mode": "propensity", "seed": 3}"#;
    fs::write(d.join("cfg.json"), cfg).unwrap();
    ok(&["train", "--data", "data.csv", "--config", "cfg.json", "--trees", "20", "--model-out", "m.json"], d);
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert_eq!(model["config"]["num_trees"], 20);
    assert_eq!(model["config"]["subsample_size"], 40);
    assert_eq!(model["config"]["mode"], "propensity");
}

#[test]
fn experiments_write_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["experiment", "--table", "t1", "--scale", "0.004", "--seed", "1", "--out", "t1"], d);
    let layout = csv_rows(&d.join("t1/t1_table.csv"));
    assert_eq!(layout.len(), 7);
    assert_eq!(layout[0][..6], ["design", "n", "d", "q", "s", "B"]);
    assert!(layout[0].contains(&"knn-100_coverage".to_string()));
    assert_eq!(csv_rows(&d.join("t1/t1_cells.csv")).len(), 19);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("t1/t1_metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 1);

    ok(&["experiment", "--table", "qq", "--scale", "0.01", "--out", "qq"], d);
    let pairs = csv_rows(&d.join("qq/qq_pairs.csv"));
    assert_eq!(pairs[0], ["theoretical", "sample"]);
    assert!(d.join("qq/qq_metadata.json").exists());
}

#[test]
fn invalid_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(!grove(&["experiment", "--table", "t9", "--out", "x"], d).status.success());
    assert!(!grove(&["simulate", "--design", "smooth", "--n", "50", "--out", "a.csv"], d).status.success());
    assert!(!grove(&["simulate", "--design", "spike", "--n", "50", "--d", "1", "--out", "a.csv"], d).status.success());

    fs::write(d.join("reg.csv"), "x1,y\n0.1,1\n0.2,2\n0.3,3\n0.4,4\n").unwrap();
    let out = grove(&["train", "--data", "reg.csv", "--mode", "causal_double_sample", "--model-out", "m.json"], d);
    assert!(!out.status.success());
    ok(&["train", "--data", "reg.csv", "--mode", "regression_double_sample", "--trees", "4", "--subsample", "2", "--model-out", "m.json"], d);
    fs::write(d.join("p.csv"), "x1\n0.25\n").unwrap();
    assert!(!grove(&["predict", "--model", "m.json", "--points", "p.csv", "--ci-level", "1.5", "--out", "o.csv"], d).status.success());
    assert!(!grove(&["predict", "--model", "missing.json", "--points", "p.csv", "--out", "o.csv"], d).status.success());
}
