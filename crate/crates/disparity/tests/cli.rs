use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use disparity_core::oracle_sim::{fig2b, DagConfig};
use serde_json::{json, Value};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disparity")).args(args).output().expect("spawn")
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("report json")
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("error json")
}

fn fig2b_config(dir: &Path, mode: &str, extra: Value) -> PathBuf {
    let dag = DagConfig { clusters: 40, ..fig2b(20_000, 4) };
    std::fs::write(dir.join("dag.json"), serde_json::to_string(&dag).unwrap()).unwrap();
    let mut cfg = json!({
        "mode": mode,
        "dag": "dag.json",
        "seed": 9,
        "covariates": [
            {"name": "x", "kind": "binary"}, {"name": "l", "kind": "binary"},
            {"name": "w_pre", "kind": "binary"}, {"name": "w_int", "kind": "binary"}
        ],
        "eligibility": {"pre": [{"variable": "w_pre", "values": [1]}], "intervened": [{"variable": "w_int", "values": [1]}]},
        "allowables": ["x"],
        "non_allowables": ["l"],
        "standard": "marginalized_group",
        "analysis": {"proposition": "II", "estimator": "both", "model": "saturated"}
    });
    cfg.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
    let path = dir.join(format!("{mode}.json"));
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn fixture_difference_is_a_quarter() {
    let cfg = fixtures().join("twelve.json");
    let r = stdout_json(&cli(&["--config", cfg.to_str().unwrap()]));
    let e = &r["estimates"][0];
    assert_eq!(e["difference"], json!(0.25));
    assert_eq!(e["ci"], Value::Null);
    assert_eq!(e["weight_diagnostics"]["min"], json!(0.5));
    assert_eq!(r["eligibility_counts"]["q"], json!(12));
    for key in ["version", "spec", "n_by_group", "seeds", "warnings", "validation"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn too_many_failed_replicates_is_an_inference_error() {
    // Clusters of the fixture hold one group each, so many resamples lose
    // a whole allowable cell of one group.
    let cfg = fixtures().join("twelve.json");
    let o = cli(&["--config", cfg.to_str().unwrap(), "--bootstrap", "50", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(9));
    assert_eq!(stderr_json(&o)["error"]["kind"], json!("ReplicateFailure"));
}

#[test]
fn bootstrap_flag_adds_interval() {
    let dir = tempfile::tempdir().unwrap();
    let sim = fig2b_config(dir.path(), "simulate", json!({"data_out": "sim.csv"}));
    stdout_json(&cli(&["--config", sim.to_str().unwrap()]));
    let est = fig2b_config(dir.path(), "estimate", json!({"data": "sim.csv"}));
    let reps = dir.path().join("reps.csv");
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(&est).unwrap()).unwrap();
    cfg["analysis"]["bootstrap"] = json!({"replicates": 20, "replicates_out": reps});
    std::fs::write(&est, cfg.to_string()).unwrap();
    let r = stdout_json(&cli(&["--config", est.to_str().unwrap(), "--seed", "3", "--bootstrap", "30"]));
    let ci = r["estimates"][0]["ci"].as_array().expect("ci");
    assert!(ci[0].as_f64().unwrap() <= ci[1].as_f64().unwrap());
    assert_eq!(r["seeds"]["bootstrap"], json!(3));
    let dump = std::fs::read_to_string(reps).unwrap();
    assert_eq!(dump.lines().count(), 31);
    assert!(dump.starts_with("replicate,weighting,ice\n"));
}

#[test]
fn missing_data_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixtures().join("twelve.json");
    let missing = dir.path().join("nope.csv");
    let o = cli(&["--config", cfg.to_str().unwrap(), "--data", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["module"], json!("config"));
}

#[test]
fn bootstrap_without_seed_is_rejected() {
    let cfg = fixtures().join("twelve.json");
    let o = cli(&["--config", cfg.to_str().unwrap(), "--bootstrap", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_csv_value_names_the_module_and_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    let text = std::fs::read_to_string(fixtures().join("twelve.csv"))
        .unwrap()
        .replace("p3,v1,c2,0,1,1,1,1", "p3,v1,c2,0,1,7,1,1");
    std::fs::write(&data, text).unwrap();
    let cfg = fixtures().join("twelve.json");
    let o = cli(&["--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["module"], json!("data_model"));
    assert!(e["error"]["message"].as_str().unwrap().contains("row"));
}

#[test]
fn oracle_mode_reports_truth_beside_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fig2b_config(dir.path(), "oracle", json!({}));
    let r = stdout_json(&cli(&["--config", cfg.to_str().unwrap()]));
    let props = r["propositions"].as_array().unwrap();
    assert_eq!(props.iter().map(|p| p["proposition"].clone()).collect::<Vec<_>>(), vec![json!("I"), json!("II")]);
    for p in props {
        assert!(p["true_difference"].is_f64());
        assert_eq!(p["estimates"].as_array().unwrap().len(), 2);
    }
    assert_eq!(r["skipped"].as_array().unwrap().len(), 2);
}

#[test]
fn simulate_then_estimate_and_sample() {
    let dir = tempfile::tempdir().unwrap();
    let sim = fig2b_config(dir.path(), "simulate", json!({"data_out": "sim.csv"}));
    let r = stdout_json(&cli(&["--config", sim.to_str().unwrap()]));
    assert!(r["truth"]["difference"].is_f64());
    let csv = std::fs::read_to_string(dir.path().join("sim.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    for col in ["truth_y_w0", "truth_y_w1", "truth_w_int_g", "truth_y_g"] {
        assert!(header.contains(col), "{header}");
    }

    let est = fig2b_config(dir.path(), "estimate", json!({"data": "sim.csv"}));
    let e = stdout_json(&cli(&["--config", est.to_str().unwrap()]));
    let (w, i) = (e["estimates"][0]["difference"].as_f64().unwrap(), e["estimates"][1]["difference"].as_f64().unwrap());
    assert!((w - i).abs() < 1e-8, "saturated weighting {w} vs ice {i}");

    let sample = fig2b_config(
        dir.path(),
        "sample",
        json!({"data": "sim.csv", "data_out": "sample.csv", "sampling": {"n0": 1000, "n1": 500, "n2": 250}}),
    );
    let s = stdout_json(&cli(&["--config", sample.to_str().unwrap()]));
    assert_eq!(s["exact"], json!(true));
    let drawn = std::fs::read_to_string(dir.path().join("sample.csv")).unwrap();
    assert!(drawn.lines().next().unwrap().ends_with(",stage"));
    assert!(drawn.lines().skip(1).all(|l| l.ends_with(",1") || l.ends_with(",2")));

    let val = fig2b_config(dir.path(), "validate", json!({"data": "sim.csv"}));
    let v = stdout_json(&cli(&["--config", val.to_str().unwrap()]));
    assert_eq!(v["validation"]["violations"], json!([]));
}

#[test]
fn help_documents_exit_codes() {
    let o = cli(&["--help"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("Exit codes") && text.contains("sampling_design"));
}
