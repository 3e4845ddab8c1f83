use std::path::Path;
use std::process::{Command, Output};

use proptest::prelude::*;
use sbrg::cli::ExperimentConfig;

fn sbrg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbrg")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn shipped_config_is_the_default() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/default.json");
    let cfg = ExperimentConfig::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(cfg.to_json(), ExperimentConfig::default().to_json());
    let o = sbrg(&["validate", "--config", path]);
    assert!(o.status.success(), "{}", stdout(&o));
}

#[test]
fn validate_reports_every_violation() {
    let o = sbrg(&["validate", "--set", "lambdas=[0.6]", "--set", "sigmas=[0]", "--set", "rg.rho=0.3"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("mu_0"), "{out}");
    assert!(out.contains("rho = 0.3"), "{out}");
}

#[test]
fn malformed_config_exits_with_two() {
    let o = sbrg(&["validate", "--set", "rg.no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"version": 99}"#).unwrap();
    let o = sbrg(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_lists_give_a_metadata_only_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("meta");
    let o = sbrg(&["run", "--set", "lambdas=[]", "--set", "sigmas=[]", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(files(&out), ["config.json", "results.json"]);
    let res: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(res["metadata_only"], true);
}

#[test]
fn perturb_bundle_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = sbrg(&["perturb", "--workers", "1", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stdout(&o));
        assert!(stdout(&o).contains("PASS C7"));
        out
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(files(&a), files(&b));
    for f in files(&a).iter().filter(|f| *f != "timings.json" && *f != "config.json") {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn overrides_survive_a_json_round_trip(
        rho in 1e-4f64..3e-3,
        n_r in 5usize..40,
        seed in any::<u64>(),
        lambdas in prop::collection::vec(-1e-3f64..1e-3, 0..4),
    ) {
        let mut cfg = ExperimentConfig::default();
        cfg.set(&format!("rg.rho={rho:e}")).unwrap();
        cfg.set(&format!("truncation.n_r={n_r}")).unwrap();
        cfg.set(&format!("seed={seed}")).unwrap();
        cfg.set(&format!("lambdas={}", serde_json::to_string(&lambdas).unwrap())).unwrap();
        prop_assert_eq!(cfg.rg.rho, rho);
        prop_assert_eq!(&cfg.lambdas, &lambdas);
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(back.to_json(), cfg.to_json());
    }
}
