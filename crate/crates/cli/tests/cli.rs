use std::path::Path;
use std::process::{Command, Output};

fn mieo(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mieo")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = mieo(args, cwd);
    assert!(out.status.success(), "mieo {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn generate_and_split(d: &Path) {
    ok(&["synth-gen", "--rows", "600", "--seed", "2", "--bayes-mc", "0", "--out-dir", "gen"], d);
    ok(&["split", "--data", "gen/masked.csv", "--seed", "1", "--out-dir", "s"], d);
}

#[test]
fn synth_gen_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth-gen", "--rows", "300", "--seed", "4", "--bayes-mc", "10000", "--out-dir", "gen"], d);
    for f in ["masked.csv", "ground_truth.csv", "spec.json", "schema.json", "reference.json", "manifest.json"] {
        assert!(d.join("gen").join(f).is_file(), "{f} missing");
    }
    let masked = std::fs::read_to_string(d.join("gen/masked.csv")).unwrap();
    assert_eq!(masked.lines().count(), 301);
}

#[test]
fn train_evaluate_encode_impute() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    generate_and_split(d);
    ok(&["train-mieo", "--data", "s/train.csv", "--unlabelled", "s/unlabelled.csv", "--epochs", "2",
         "--embedding-dim", "6", "--out", "m.model"], d);
    ok(&["train-clf", "--mode", "embedding", "--mieo-model", "m.model", "--data", "s/train.csv",
         "--epochs", "2", "--pos-weight", "auto", "--out", "c.model"], d);
    let table = ok(&["evaluate", "--clf", "c.model", "--mieo-model", "m.model", "--data", "s/test.csv",
                     "--report", "r.json"], d);
    assert!(table.contains("balanced accuracy"), "{table}");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["blocks"][0]["dataset"], "test");

    ok(&["encode", "--model", "m.model", "--data", "s/test.csv", "--out", "e.csv"], d);
    let enc = std::fs::read_to_string(d.join("e.csv")).unwrap();
    let header = enc.lines().next().unwrap();
    assert!(header.starts_with("e00,"), "{header}");
    assert_eq!(header.split(',').count(), 7);

    ok(&["impute", "--model", "m.model", "--data", "s/test.csv", "--out", "i.csv"], d);
    let imp = std::fs::read_to_string(d.join("i.csv")).unwrap();
    let body: Vec<&str> = imp.lines().skip(1).collect();
    assert!(body.iter().all(|l| !l.split(',').any(str::is_empty)));
}

#[test]
fn replay_reproduces_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    generate_and_split(d);
    ok(&["train-clf", "--mode", "raw", "--data", "s/train.csv", "--validation", "s/validation.csv",
         "--epochs", "2", "--seed", "9", "--out", "c.model"], d);
    let msg = ok(&["replay", "--manifest", "c.model.manifest.json", "--into", "again"], d);
    assert!(msg.contains("bit-identical"), "{msg}");
    assert_eq!(std::fs::read(d.join("c.model")).unwrap(), std::fs::read(d.join("again/c.model")).unwrap());

    let mut rows = std::fs::read_to_string(d.join("s/train.csv")).unwrap();
    let first = rows.lines().nth(1).unwrap().to_owned();
    rows.push_str(&first);
    rows.push('\n');
    std::fs::write(d.join("s/train.csv"), rows).unwrap();
    let out = mieo(&["replay", "--manifest", "c.model.manifest.json"], d);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}

#[test]
fn replay_detects_a_changed_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    generate_and_split(d);
    let manifest_path = d.join("s/manifest.json");
    let mut manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest_path).unwrap()).unwrap();
    manifest["outputs"][0]["sha256"] = serde_json::Value::String("0".repeat(64));
    std::fs::write(&manifest_path, serde_json::to_vec_pretty(&manifest).unwrap()).unwrap();
    let out = mieo(&["replay", "--manifest", "s/manifest.json"], d);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("differs"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&mieo(&["--help"], d)), 0);
    assert_eq!(code(&mieo(&["no-such-command"], d)), 1);
    assert_eq!(code(&mieo(&["split", "--data", "missing.csv", "--out-dir", "x"], d)), 3);
    assert_eq!(code(&mieo(&["replay", "--manifest", "missing.json"], d)), 3);

    generate_and_split(d);
    assert_eq!(code(&mieo(&["train-clf", "--mode", "embedding", "--data", "s/train.csv", "--out", "c.model"], d)), 1);
    assert_eq!(
        code(&mieo(&["train-mieo", "--data", "s/train.csv", "--embedding-dim", "0", "--out", "m.model"], d)),
        2
    );
    assert_eq!(
        code(&mieo(&["train-clf", "--mode", "raw", "--data", "s/train.csv", "--pos-weight", "lots", "--out", "c.model"], d)),
        1
    );
    assert!(!d.join("m.model").exists());
}

#[test]
fn grid_search_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth-gen", "--rows", "700", "--seed", "3", "--bayes-mc", "0", "--out-dir", "gen"], d);
    std::fs::write(d.join("mg.json"), r#"{"embedding_dim": [4, 8], "epochs": [2]}"#).unwrap();
    std::fs::write(d.join("cg.json"), r#"{"epochs": [2]}"#).unwrap();
    ok(&["--threads", "1", "grid-search", "--data", "gen/masked.csv", "--mieo-grid", "mg.json", "--clf-grid", "cg.json",
         "--seed", "2", "--out-dir", "search"], d);
    let trials: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("search/trials.json")).unwrap()).unwrap();
    assert_eq!(trials.as_array().map(Vec::len), Some(2));
    for f in ["best_mieo.model", "best_clf.model", "report.json", "timings.json", "manifest.json"] {
        assert!(d.join("search").join(f).is_file(), "{f} missing");
    }
    ok(&["replay", "--manifest", "search/manifest.json"], d);
}
