use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn smoothfuzz(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smoothfuzz"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("SMOOTHFUZZ_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value_of(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.trim_start().strip_prefix('=')))
        .unwrap_or_else(|| panic!("no `{key}` in:\n{text}"))
        .trim()
        .to_string()
}

/// Mackey-Glass dataset in `dir`; returns its path.
fn mg_dataset(dir: &Path) -> String {
    let o = smoothfuzz(dir, &["generate", "mackey-glass", "--duration", "500"]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("mackey-glass_nominal_dataset.csv").display().to_string()
}

#[test]
fn generate_writes_series_sidecar_and_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothfuzz(dir.path(), &["generate", "mackey-glass", "--duration", "1000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let series = fs::read_to_string(dir.path().join("mackey-glass_nominal.csv")).unwrap();
    assert_eq!(series.lines().next(), Some("t,x"));
    assert_eq!(series.lines().count(), 1 + 1001);
    assert!(dir.path().join("mackey-glass_nominal.meta.json").is_file());
    let dataset = fs::read_to_string(dir.path().join("mackey-glass_nominal_dataset.csv")).unwrap();
    assert_eq!(dataset.lines().next(), Some("x(k),x(k-6),x(k-12),x(k-18),x(k+6)"));
}

#[test]
fn generate_cstr_uses_reference_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothfuzz(dir.path(), &["generate", "cstr", "--qc-profile", "paper"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cstr_nominal.meta.json")).unwrap()).unwrap();
    let p = &meta["params"];
    let expected = [
        ("q", 100.0),
        ("v", 100.0),
        ("k0", 7.2e10),
        ("e_over_r", 1e4),
        ("t0", 350.0),
        ("tc0", 350.0),
        ("dh", -2e5),
        ("cp", 1.0),
        ("cpc", 1.0),
        ("rho", 1e3),
        ("rho_c", 1e3),
        ("ha", 7e5),
        ("ca0", 1.0),
    ];
    for (key, want) in expected {
        assert_eq!(p[key].as_f64(), Some(want), "{key}");
    }
    let levels: Vec<f64> = meta["qc_levels"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(levels, [103.0, 105.0, 110.0, 100.0, 99.0, 110.0]);
    let series = fs::read_to_string(dir.path().join("cstr_nominal.csv")).unwrap();
    assert_eq!(series.lines().next(), Some("t,ca,temperature,qc"));
}

#[test]
fn invalid_parameters_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothfuzz(dir.path(), &["generate", "mackey-glass", "--tau", "-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tau"));
    let o = smoothfuzz(dir.path(), &["generate", "cstr", "--scenario", "noise"]);
    assert_eq!(o.status.code(), Some(1));
    let o = smoothfuzz(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_composition_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let data = mg_dataset(dir.path());
    let o = smoothfuzz(dir.path(), &["train", "--data", &data, "--composition", "fuzzy"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for name in ["minmax", "prodsum", "smooth1", "atan", "acos", "smooth4"] {
        assert!(err.contains(name), "{name} missing from: {err}");
    }
}

#[test]
fn predict_on_training_rows_matches_the_training_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = mg_dataset(dir.path());
    let out = dir.path().join("model");
    let o =
        smoothfuzz(&out, &["train", "--data", &data, "--composition", "atan", "--max-epochs", "10", "--alpha", "0.05"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trained_rms = value_of(&stdout(&o), "training_rms");
    let model_text = fs::read_to_string(out.join("model.json")).unwrap();
    assert!(model_text.contains("\"composition\": \"atan\""), "{model_text}");
    let convergence = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(convergence.lines().count(), 1 + 11);

    let model = out.join("model.json").display().to_string();
    let o = smoothfuzz(&dir.path().join("pred"), &["predict", "--model", &model, "--data", &data]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value_of(&stdout(&o), "rms"), trained_rms);
    let manifest = fs::read_to_string(out.join("train_manifest.toml")).unwrap();
    assert_eq!(value_of(&manifest, "training_rms").parse::<f64>().unwrap(), trained_rms.parse::<f64>().unwrap());
}

#[test]
fn flags_override_config_and_env_sets_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let data = mg_dataset(dir.path());
    let config = dir.path().join("run.toml");
    fs::write(&config, "[train]\nmax_epochs = 7\nalpha_c = 0.02\nalpha_delta = 0.02\nalpha_d = 0.02\n").unwrap();
    let out = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_smoothfuzz"))
        .args(["--config", config.to_str().unwrap(), "train", "--data", &data, "--max-epochs", "3"])
        .env("SMOOTHFUZZ_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = fs::read_to_string(out.join("train_manifest.toml")).unwrap();
    assert_eq!(value_of(&manifest, "max_epochs"), "3");
    assert_eq!(value_of(&manifest, "alpha_c"), "0.02");

    fs::write(&config, "[train]\nmax_epoch = 7\n").unwrap();
    let o = smoothfuzz(&out, &["--config", config.to_str().unwrap(), "train", "--data", &data]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_dataset_reports_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "a,b,y\n1,2,3\n4,oops,6\n").unwrap();
    let o = smoothfuzz(dir.path(), &["train", "--data", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

/// Dataset whose targets are the model's own predictions.
fn self_consistent_stream(dir: &Path, data: &str, model: &str) -> String {
    let o = smoothfuzz(&dir.join("pred"), &["predict", "--model", model, "--data", data]);
    assert!(o.status.success(), "{}", stderr(&o));
    let predictions = fs::read_to_string(dir.join("pred/predictions.csv")).unwrap();
    let original = fs::read_to_string(data).unwrap();
    let mut lines = original.lines();
    let mut out = String::from(lines.next().unwrap());
    out.push('\n');
    for (row, pred) in lines.zip(predictions.lines().skip(1)) {
        let inputs = &row[..row.rfind(',').unwrap()];
        let y_hat = pred.split(',').nth(1).unwrap();
        out.push_str(&format!("{inputs},{y_hat}\n"));
    }
    let path = dir.join("stationary.csv");
    fs::write(&path, out).unwrap();
    path.display().to_string()
}

#[test]
fn adapt_is_quiet_on_stationary_streams_and_replays_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = mg_dataset(dir.path());
    let o =
        smoothfuzz(&dir.path().join("m"), &["train", "--data", &data, "--composition", "acos", "--max-epochs", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let model = dir.path().join("m/model.json").display().to_string();

    let stream = self_consistent_stream(dir.path(), &data, &model);
    let o = smoothfuzz(&dir.path().join("quiet"), &["adapt", "--model", &model, "--stream", &stream]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value_of(&stdout(&o), "updates"), "0");
    let trace = fs::read_to_string(dir.path().join("quiet/trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("k,y_hat,y,e,updated"));
    assert!(trace.lines().skip(1).all(|l| l.ends_with(",0")));

    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = smoothfuzz(&out, &["adapt", "--model", &model, "--stream", &data, "--alpha", "0.02"]);
        assert!(o.status.success(), "{}", stderr(&o));
        (fs::read(out.join("trace.csv")).unwrap(), fs::read(out.join("model_adapted.json")).unwrap())
    };
    let (first, second) = (run("a"), run("b"));
    assert_eq!(first, second);
    assert!(String::from_utf8(first.0).unwrap().lines().any(|l| l.ends_with(",1")));
}

#[test]
fn adapt_without_a_model_fails() {
    let dir = tempfile::tempdir().unwrap();
    let data = mg_dataset(dir.path());
    let o = smoothfuzz(dir.path(), &["adapt", "--model", "no-such-model.json", "--stream", &data]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such-model.json"));
}

#[test]
fn reproduce_cstr_builds_81_rule_models() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothfuzz(dir.path(), &["reproduce", "cstr", "--seed", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(results.lines().next(), Some("composition,training,validation,disturbance,error"));
    assert_eq!(results.lines().count(), 1 + 4);
    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("model_acos.json")).unwrap()).unwrap();
    assert_eq!(model["input_arity"], 4);
    assert_eq!(model["rules"].as_array().unwrap().len(), 81);
}

#[test]
fn reproduce_mackey_glass_reports_four_compositions() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothfuzz(dir.path(), &["reproduce", "mackey-glass", "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let names: Vec<&str> = results.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["atan", "acos", "prodsum", "minmax"]);

    let rerun = dir.path().join("rerun");
    let manifest = dir.path().join("manifest.toml");
    let o = smoothfuzz(&rerun, &["--config", manifest.to_str().unwrap(), "reproduce", "mackey-glass"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(rerun.join("results.csv")).unwrap(), results);
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["generate", "train", "adapt", "reproduce", "predict"] {
        let o = smoothfuzz(dir.path(), &[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
}
