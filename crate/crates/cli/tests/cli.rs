use std::path::Path;
use std::process::{Command, Output};

use disttest::dist_core::{sample, write_distribution, write_samples, ExplicitDistribution};
use disttest::hard_instances::mi_per_bin;
use disttest::rng::rng_from_seed;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disttest"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_uniform_q(dir: &Path, n: usize) -> String {
    let path = dir.join("q.dist");
    let mut f = std::fs::File::create(&path).unwrap();
    write_distribution(&mut f, ExplicitDistribution::uniform(n).probs()).unwrap();
    path.to_str().unwrap().to_string()
}

fn write_draws(
    dir: &Path,
    name: &str,
    d: &ExplicitDistribution,
    count: usize,
    seed: u64,
) -> String {
    let mut rng = rng_from_seed(seed);
    let s: Vec<usize> = (0..count).map(|_| sample(d, &mut rng)).collect();
    let path = dir.join(name);
    write_samples(&mut std::fs::File::create(&path).unwrap(), &s).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn identity_on_uniform_samples_says_yes() {
    let dir = tempfile::tempdir().unwrap();
    let q = write_uniform_q(dir.path(), 4);
    let s = write_draws(
        dir.path(),
        "s.txt",
        &ExplicitDistribution::uniform(4),
        100_000,
        5,
    );
    let out = run(&[
        "test",
        "--tester",
        "identity-known",
        "--q",
        &q,
        "--samples",
        &s,
        "--eps",
        "0.5",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert_eq!(v["answer"], "YES");
    assert!(v["samples_used"][0]["samples"].as_u64().unwrap() > 0);
}

#[test]
fn out_of_range_index_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let q = write_uniform_q(dir.path(), 4);
    let s = dir.path().join("bad.txt");
    std::fs::write(&s, "1\n2\n9\n").unwrap();
    let out = run(&[
        "test",
        "--tester",
        "identity-known",
        "--q",
        &q,
        "--samples",
        s.to_str().unwrap(),
        "--eps",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn short_sample_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let q = write_uniform_q(dir.path(), 4);
    let s = write_draws(
        dir.path(),
        "s.txt",
        &ExplicitDistribution::uniform(4),
        10,
        5,
    );
    let out = run(&[
        "test",
        "--tester",
        "identity-known",
        "--q",
        &q,
        "--samples",
        &s,
        "--eps",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn closeness_on_far_samples_says_no() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = vec![1.0; 50];
    w[..25].fill(3.0);
    let p = write_draws(
        dir.path(),
        "p.txt",
        &ExplicitDistribution::from_weights(&w).unwrap(),
        200_000,
        1,
    );
    let q = write_draws(
        dir.path(),
        "q.txt",
        &ExplicitDistribution::uniform(50),
        200_000,
        2,
    );
    let out = run(&[
        "test",
        "--tester",
        "closeness-equal",
        "--samples",
        &p,
        "--q-samples",
        &q,
        "--n",
        "50",
        "--eps",
        "0.5",
    ]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(json(&out)["answer"], "NO");
}

#[test]
fn missing_flag_is_usage_error() {
    let out = run(&[
        "test",
        "--tester",
        "closeness-equal",
        "--samples",
        "x",
        "--eps",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn hardgen_paninski_is_exact() {
    let out = run(&[
        "hardgen", "--family", "paninski", "--n", "4", "--eps", "0.5", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let total: f64 = v["measures"][1]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(v["l1_distance"].as_f64().unwrap(), 0.5);
}

#[test]
fn hardgen_writes_measure_files() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("inst");
    let out = run(&[
        "hardgen",
        "--family",
        "histogram",
        "--n",
        "64",
        "--k",
        "4",
        "--eps",
        "0.5",
        "--out-prefix",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("inst.0.dist")).unwrap();
    assert_eq!(text.lines().next(), Some("64"));
    assert!(json(&out)["certified_farness"].as_f64().unwrap() > 0.0);
}

#[test]
fn mi_matches_library_bit_for_bit() {
    let out = run(&[
        "mi",
        "--per-bin",
        "--k",
        "100",
        "--n",
        "100",
        "--m",
        "10",
        "--eps",
        "0",
    ]);
    assert_eq!(json(&out)["value"].as_f64().unwrap(), 0.0);
    let out = run(&[
        "mi",
        "--per-bin",
        "--k",
        "50",
        "--n",
        "200",
        "--m",
        "4",
        "--eps",
        "0.3",
    ]);
    let lib = mi_per_bin(50.0, 200.0, 4.0, 0.3, 1_000_000).unwrap();
    assert_eq!(
        json(&out)["value"].as_f64().unwrap().to_bits(),
        lib.value.to_bits()
    );
    let out = run(&[
        "mi",
        "--heavy-light-row",
        "--k",
        "8",
        "--n",
        "64",
        "--m",
        "2",
        "--eps",
        "0.2",
    ]);
    assert!(json(&out)["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn sweep_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"tester":"identity_known","family":"paninski","cells":[{"n":50,"eps":0.5}],"trials":5,"seed":9}"#,
    )
    .unwrap();
    let stem = dir.path().join("run");
    let out = run(&[
        "sweep",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        stem.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let m: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("run.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["constants_sha256"].as_str().unwrap().len(), 64);
    let again = dir.path().join("again");
    run(&[
        "sweep",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(
        csv,
        std::fs::read_to_string(dir.path().join("again.csv")).unwrap()
    );
}

#[test]
fn sweep_rejects_zero_trials() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"tester":"identity_known","family":"paninski","cells":[{"n":50,"eps":0.5}],"trials":0,"seed":9}"#).unwrap();
    let out = run(&[
        "sweep",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
