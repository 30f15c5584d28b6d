use std::path::Path;
use std::process::Command;

use cirlt::config::{ExperimentConfig, Tag};
use cirlt::io::read_increments;
use cirlt::manifest::{verify_manifest, RunManifest, MANIFEST_FILE};
use cirlt::run::run_experiment;

fn small(tag: Tag, dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default_for(tag);
    c.grid.steps = 1 << 10;
    c.output_dir = dir.to_path_buf();
    c
}

fn run(c: &ExperimentConfig) -> RunManifest {
    run_experiment(c, &c.output_dir, &mut |_| {}).unwrap()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn simulate_writes_one_path_and_a_manifest() {
    let d = tempfile::tempdir().unwrap();
    let m = run(&small(Tag::Simulate, d.path()));
    assert_eq!(files_in(d.path()), vec![MANIFEST_FILE.to_string(), "path.csv".into()]);
    assert_eq!(m.outputs.len(), 1);
    assert!(verify_manifest(d.path()).unwrap().is_empty());
    assert_eq!(header(&d.path().join("path.csv")), "t,value,dW");
    // the written increments drive an identical forced rerun
    let dw = read_increments(&d.path().join("path.csv")).unwrap();
    assert_eq!(dw.len(), 1 << 10);
    let d2 = tempfile::tempdir().unwrap();
    let mut forced = small(Tag::Simulate, d2.path());
    forced.increments_file = Some(d.path().join("path.csv"));
    let m2 = run(&forced);
    assert_eq!(m2.outputs[0].sha256, m.outputs[0].sha256);
}

#[test]
fn reruns_are_byte_identical() {
    for tag in [Tag::VerifyMain, Tag::ConvergeLeft] {
        let d = tempfile::tempdir().unwrap();
        let mut c = small(tag, d.path());
        c.replications = c.replications.min(4);
        let first = run(&c);
        let again = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run(&c));
        assert_eq!(first.config_hash, again.config_hash);
        assert_eq!(first.outputs, again.outputs, "{tag}");
    }
}

#[test]
fn output_schemas() {
    let d = tempfile::tempdir().unwrap();
    run(&small(Tag::VerifyMain, d.path()));
    assert_eq!(
        header(&d.path().join("singular_terms.csv")),
        "t,R,L_eps_0.001,L_eps_0.0001,L_eps_1e-5,L_hat"
    );
    assert_eq!(header(&d.path().join("occupation.csv")), "y_mid,density");
    let first = std::fs::read_to_string(d.path().join("singular_terms.csv")).unwrap();
    assert_eq!(first.lines().nth(1).unwrap(), "0.0,0.0,0.0,0.0,0.0,0.0");

    for tag in [Tag::ConvergeRight, Tag::ConvergeLeft] {
        let d = tempfile::tempdir().unwrap();
        let mut c = small(tag, d.path());
        c.replications = 3;
        run(&c);
        for f in files_in(d.path()).iter().filter(|f| f.ends_with(".csv")) {
            assert_eq!(header(&d.path().join(f)), "n,delta,median_sup_err,p90_sup_err,monotone_ok_fraction");
        }
    }

    let d = tempfile::tempdir().unwrap();
    run(&small(Tag::TransformRoundtrip, d.path()));
    assert_eq!(header(&d.path().join("rbm.csv")), "tau_or_phi,value");

    let d = tempfile::tempdir().unwrap();
    let mut c = small(Tag::DistTest, d.path());
    c.ks.samples = 2000;
    let m = run(&c);
    assert_eq!(header(&d.path().join("ks.csv")), "k,b,dt,x,n,statistic,threshold,pass");
    assert!(m.summary["all_pass"].as_bool().unwrap());
}

#[test]
fn regime_check_covers_all_three_regimes() {
    for (a, key) in [(1.5, "sup_abs_R_minus_comparator"), (1.0, "sup_abs_R_minus_L0"), (0.5, "excursions")] {
        let d = tempfile::tempdir().unwrap();
        let c = small(Tag::RegimeCheck, d.path())
            .with_overrides(&[format!("params.a={a}")])
            .unwrap();
        let m = run(&c);
        assert!(m.summary.get(key).is_some(), "a={a}: {}", m.summary);
        assert!(verify_manifest(d.path()).unwrap().is_empty());
    }
}

#[test]
fn transform_roundtrip_recovers_the_path() {
    let d = tempfile::tempdir().unwrap();
    let m = run(&small(Tag::TransformRoundtrip, d.path()));
    assert!(m.summary["max_rel_value_error"].as_f64().unwrap() < 1e-6, "{}", m.summary);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cirlt"))
}

#[test]
fn cli_exit_codes_and_error_record() {
    let out = cli().args(["no-such-tag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let rec: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(rec["kind"], "config_invalid");

    let out = cli().args(["simulate", "--set", "params.colour=1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // a path in the positive regime cannot feed the local-time fit at k > 1
    let root = tempfile::tempdir().unwrap();
    let out = cli()
        .args(["verify-main", "--set", "params.a=2", "--set", "grid.steps=256"])
        .env("CIRLT_OUTPUT_ROOT", root.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn cli_runs_with_output_root_and_config_file() {
    let root = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::default_for(Tag::Simulate);
    c.grid.steps = 1 << 10;
    c.output_dir = "run1".into();
    let cfg_path = root.path().join("cfg.json");
    std::fs::write(&cfg_path, c.to_json()).unwrap();
    let out = cli()
        .args(["simulate", "--config"])
        .arg(&cfg_path)
        .args(["--set", "seed=7"])
        .env("CIRLT_OUTPUT_ROOT", root.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = root.path().join("run1");
    assert_eq!(files_in(&dir), vec![MANIFEST_FILE.to_string(), "path.csv".into()]);
    let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(m.config.seed, 7);

    let out = cli().args(["converge-left", "--print-config"]).output().unwrap();
    let printed = ExperimentConfig::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(printed, ExperimentConfig::default_for(Tag::ConvergeLeft));
}
