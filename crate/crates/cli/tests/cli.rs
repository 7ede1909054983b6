use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gatecheck"));
    c.env_remove("GATECHECK_DATA_DIR");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_WORLD: &str = r#"version = 1
[data.synthetic]
n_users = 50
n_items = 50
drift_sigma = 0.3
seed = 3
[backbone]
iterations = 4
[confidence]
ensemble_seeds = [0, 1]
[synthetic]
seeds = [0, 1, 2]
sweep_sigmas = [0.0, 0.5]
[synthetic.preregistration]
n_seeds = 3
structural_min_clean = 2
contextual_min_violating = 2
[synthetic.structural]
n_users = 30
n_items = 30
[synthetic.contextual]
n_users = 30
n_items = 30
drift_sigma = 0.5
"#;

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL_WORLD).unwrap();
    p
}

#[test]
fn help_lists_every_subcommand() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for sub in [
        "ingest", "split", "fit", "confidence", "curve", "diagnose", "exceptions", "adaptive", "synth", "claims",
    ] {
        assert!(text.contains(sub), "missing {sub} in help");
    }
    for flag in ["--config", "--seed", "--out", "--format", "GATECHECK_DATA_DIR"] {
        assert!(text.contains(flag), "missing {flag} in help");
    }
}

#[test]
fn diagnose_clinical_zones_is_gate_safe() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "diagnose",
        "--input",
        fixture("clinical_zones.csv").to_str().unwrap(),
        "--bins",
        "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("verdict: GATE-SAFE"), "{text}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("diagnose.json")).unwrap()).unwrap();
    assert_eq!(json["details"]["c2"]["inversion_count"], 0);
    assert_eq!(json["details"]["c2"]["zones"].as_array().unwrap().len(), 5);
}

#[test]
fn diagnose_tier_inversion_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "diagnose",
        "--input",
        fixture("tier_inversion.csv").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("verdict: INVERSION-FOUND"));
}

#[test]
fn diagnose_constant_confidence_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "diagnose",
        "--input",
        fixture("constant_confidence.csv").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("verdict: SIGNAL-DEGENERATE"));
}

#[test]
fn unknown_config_key_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "version = 1\n[backbone]\nrank = 5\nlamda = 0.1\n").unwrap();
    let o = run(&["--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "fit"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lamda"), "{}", stderr(&o));
}

#[test]
fn missing_dataset_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("GATECHECK_DATA_DIR", dir.path())
        .args(["--out", dir.path().to_str().unwrap(), "ingest"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("u.data"), "{}", stderr(&o));
}

#[test]
fn data_dir_env_var_is_used() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("ml-100k")).unwrap();
    std::fs::write(dir.path().join("ml-100k/u.data"), "1\t2\t4\t100\n2\t2\t3\t200\n1\t3\t5\t300\n").unwrap();
    let out = dir.path().join("out");
    let o = bin()
        .env("GATECHECK_DATA_DIR", dir.path())
        .args(["--out", out.to_str().unwrap(), "--format", "csv", "ingest"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("ratings,users,items"));
    let csv = std::fs::read_to_string(out.join("ratings.csv")).unwrap();
    assert!(csv.starts_with("user_id,item_id,rating,timestamp\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn synthetic_claims_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut docs = Vec::new();
    // same output directory both times: it is part of the recorded config
    let out = dir.path().join("run");
    for _ in 0..2 {
        let o = run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "json", "claims"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("claims.json")).unwrap()).unwrap();
        assert!(v["header"]["generated_at"].is_u64());
        v["header"]["generated_at"] = serde_json::Value::Null;
        assert_eq!(v["header"]["seeds"]["split"], 0);
        docs.push(serde_json::to_string(&v).unwrap());
        // stdout carries the same document
        let s: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert!(s["tables"]["rmse_by_model_and_split"].is_object());
    }
    assert_eq!(docs[0], docs[1]);
}

#[test]
fn seed_flag_reaches_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "11",
        "--out",
        dir.path().to_str().unwrap(),
        "--format",
        "json",
        "split",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["header"]["seeds"]["split"], 11);
    assert_eq!(v["header"]["seeds"]["ensemble"][1], 12);
    assert!(dir.path().join("temporal_train.csv").exists());
    assert!(dir.path().join("cold_item_test.csv").exists());
}

#[test]
fn confidence_streams_feed_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let d = dir.path().to_str().unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "--out", d, "confidence"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stream = dir.path().join("confidence_count_based.csv");
    assert!(stream.exists());
    assert!(dir.path().join("confidence_recency.csv").exists());
    let o = run(&["--out", d, "--format", "csv", "curve", "--input", stream.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("fraction,retained,coverage,metric"));
    assert_eq!(text.lines().filter(|l| l.starts_with("0.")).count(), 6);
}

#[test]
fn fit_saves_loadable_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "fit"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = std::fs::read_to_string(dir.path().join("temporal.mf")).unwrap();
    assert!(m.starts_with("gatecheck-mf 1"));
    assert!(stdout(&o).contains("global_mean"));
}

#[test]
fn exceptions_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "exceptions"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["exceptions_residual_distribution_shift.csv", "exceptions_exception_classifier_auc.csv", "exceptions_fp_fn_ratio.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn adaptive_single_block_skips_adaptive_gate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "adaptive", "--blocks", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("adaptive gate skipped"), "{text}");
    assert!(!text.contains("previous_block"));
}

#[test]
fn synth_prints_regime_lines_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let export = dir.path().join("worlds");
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "synth",
        "--export",
        export.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("structural regime: "), "{text}");
    assert!(text.contains("contextual regime: "), "{text}");
    assert!(export.join("contextual_test.csv").exists());
    // exported worlds run through the ordinary ingest path
    let o = run(&["--out", dir.path().join("ing").to_str().unwrap(), "ingest", "--input", export.join("structural_train.csv").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}
