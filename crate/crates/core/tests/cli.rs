use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lts")).args(args).output().expect("spawn lts")
}

fn run_small(out: &Path, extra: &[&str]) -> Output {
    let dir = out.to_str().unwrap();
    let mut args = vec!["--experiment", "tanaka_mean", "--paths", "16", "--dt-exp", "10", "--out", dir];
    args.extend_from_slice(extra);
    lts(&args)
}

#[test]
fn list_names_every_experiment() {
    let o = lts(&["list-experiments"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let names: Vec<&str> = text.lines().filter_map(|l| l.split_whitespace().next()).collect();
    for n in [
        "tanaka_mean",
        "estimator_agreement",
        "occupation_formula",
        "lts_equivalence",
        "cov_residual_abs_t",
        "curve_local_time",
        "ghomrasni_limit",
        "riemann_sums",
        "local_time_convergence",
        "lts_bounded_variation",
        "skew_sign_prob",
        "sdelt_residual",
        "drift_absorption",
        "symmetric_local_time",
    ] {
        assert!(names.contains(&n), "{n} missing from listing");
    }
}

#[test]
fn bad_dt_exponent_exits_2_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = lts(&["--experiment", "tanaka_mean", "--dt-exp", "30", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_config_field_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"experiment": "tanaka_mean", "paths": 3}"#).unwrap();
    let o = lts(&["--config", cfg.to_str().unwrap(), "--out", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spec_on_experiment_without_one_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"experiment": "tanaka_mean", "spec": {"b": {"const": 0}, "sigma": {"const": 1}, "h": {"const": 1}, "nu": {"atoms": []}, "x0": 0}}"#,
    )
    .unwrap();
    let o = lts(&["--config", cfg.to_str().unwrap(), "--out", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn artifacts_are_reproducible_and_manifest_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    let oa = run_small(&a, &["--seed", "9"]);
    assert!(matches!(oa.status.code(), Some(0) | Some(1)), "{oa:?}");
    run_small(&b, &["--seed", "9"]);
    for f in ["result.json", "table.csv", "manifest.json"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    assert_eq!(fs::read(a.join("table.csv")).unwrap(), fs::read(b.join("table.csv")).unwrap());
    assert_eq!(fs::read(a.join("result.json")).unwrap(), fs::read(b.join("result.json")).unwrap());

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["rng"], "chacha8-boxmuller-v1");
    assert_eq!(manifest["config"]["seed"], 9);
    assert_eq!(manifest["config"]["resolution"]["n_paths"], 16);

    let oc = lts(&["--config", a.join("manifest.json").to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert_eq!(oc.status.code(), oa.status.code());
    assert_eq!(fs::read(a.join("table.csv")).unwrap(), fs::read(c.join("table.csv")).unwrap());
    assert_eq!(fs::read(a.join("result.json")).unwrap(), fs::read(c.join("result.json")).unwrap());
}

#[test]
fn different_seeds_differ() {
    let tmp = tempfile::tempdir().unwrap();
    run_small(&tmp.path().join("a"), &["--seed", "1"]);
    run_small(&tmp.path().join("b"), &["--seed", "2"]);
    assert_ne!(
        fs::read(tmp.path().join("a/table.csv")).unwrap(),
        fs::read(tmp.path().join("b/table.csv")).unwrap()
    );
}

#[test]
fn table_uses_full_precision() {
    let tmp = tempfile::tempdir().unwrap();
    run_small(&tmp.path().join("a"), &[]);
    let text = fs::read_to_string(tmp.path().join("a/table.csv")).unwrap();
    let row = text.lines().nth(1).expect("a data row");
    let cell = row.split(',').nth(1).unwrap();
    let back: f64 = cell.parse().unwrap();
    assert_eq!(format!("{back:.16e}"), cell);
}
