use std::path::Path;
use std::process::{Command, Output};

use gp_amis::harness::ExperimentConfig;

fn gp_amis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gp-amis"))
        .args(args)
        .env_remove("GP_AMIS_OUTPUT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Small synthetic regression run; budget leaves room for MCMC tuning.
const SMALL: &[&str] = &[
    "--set",
    "data.synthetic_n=20",
    "--set",
    "run.replicates=3",
    "--set",
    "run.budget=20000",
    "--set",
    "run.grid_points=20",
];

fn with_small<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(SMALL).chain(tail).copied().collect()
}

#[test]
fn missing_dataset_fails_and_names_the_path() {
    let out = gp_amis(&["inspect", "--set", "data.path=/definitely/missing.csv"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("/definitely/missing.csv"), "{}", stderr(&out));
}

#[test]
fn unknown_key_and_bad_override_fail() {
    let out = gp_amis(&["inspect", "--set", "run.nonsense=1"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("run.nonsense"));
    let out = gp_amis(&["inspect", "--set", "no-equals-sign"]);
    assert!(!out.status.success());
}

#[test]
fn run_writes_traces_aggregate_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = gp_amis(&with_small(&["run", "-o", out_dir.to_str().unwrap()], &["--set", "sampler.id=amis"]));
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["trace_000.csv", "aggregate.csv", "manifest.txt"] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    let agg = std::fs::read_to_string(out_dir.join("aggregate.csv")).unwrap();
    assert!(agg.lines().count() > 1);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gp-amis"))
        .args(with_small(&["run"], &[]))
        .env("GP_AMIS_OUTPUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("manifest.txt").is_file());
}

#[test]
fn same_seed_gives_identical_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str, threads: &str| {
        let p = dir.path().join(name);
        let out = gp_amis(&with_small(
            &["run", "--seed", "7", "--threads", threads, "-o", p.to_str().unwrap()],
            &["--set", "sampler.id=mh-h"],
        ));
        assert!(out.status.success(), "{}", stderr(&out));
        (
            std::fs::read_to_string(p.join("manifest.txt")).unwrap(),
            std::fs::read_to_string(p.join("aggregate.csv")).unwrap(),
        )
    };
    let strip = |m: &str| -> String {
        m.lines()
            .filter(|l| !l.starts_with("run.threads") && !l.starts_with("run.output"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let a = read("a", "1");
    let b = read("b", "3");
    assert_eq!(strip(&a.0), strip(&b.0));
    assert_eq!(a.1, b.1);
    assert!(a.0.contains("run.seed = 7"));
}

#[test]
fn sweep_writes_one_column_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let out = gp_amis(&with_small(
        &["sweep", "-o", dir.path().to_str().unwrap()],
        &["--set", "sweep.variants=mh-h,amis"],
    ));
    assert!(out.status.success(), "{}", stderr(&out));
    let cmp = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let header: Vec<&str> = cmp.lines().next().unwrap().split(',').collect();
    assert_eq!(header, ["cubic_ops", "mh-h", "amis"]);
    assert!(dir.path().join("mh-h").join("manifest.txt").is_file());
    assert!(dir.path().join("amis").join("aggregate.csv").is_file());
}

#[test]
fn single_check_runs() {
    let out = gp_amis(&["check", "--only", "pm-unbiasedness"]);
    assert!(out.status.success(), "{}{}", stdout(&out), stderr(&out));
    let s = stdout(&out);
    assert_eq!(s.lines().count(), 1);
    assert!(s.contains("pm-unbiasedness") && s.contains("PASS"));
    let out = gp_amis(&["check", "--only", "no-such-check"]);
    assert!(!out.status.success());
}

#[test]
fn shipped_config_matches_library_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.conf");
    let text = std::fs::read_to_string(path).unwrap();
    let mut shipped = ExperimentConfig::parse_text(&text).unwrap();
    shipped.variants.clear();
    assert_eq!(shipped, ExperimentConfig::default());
}

#[test]
fn inspect_reports_classification_labels() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/breast.csv");
    let out = gp_amis(&[
        "inspect",
        "--set",
        &format!("data.path={}", data.display()),
        "--set",
        "data.task=classification",
        "--set",
        "data.subsample=60",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let s = stdout(&out);
    assert!(s.contains("points      60") && s.contains("positive"));
}
