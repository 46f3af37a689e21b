use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fdiv_align::divergence::FiniteDistribution;
use fdiv_align::metrics::{pgm, GrayImage};
use fdiv_align::policy::DiscreteAlignmentProblem;
use fdiv_align::Divergence;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fdiv-align"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn landscape_defaults_anchor_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["landscape", "--out", path_str(&a)]).status.success());
    assert!(run(&["landscape", "--out", path_str(&b)]).status.success());
    for stem in ["reverse-kl", "forward-kl", "js", "alpha-0.5"] {
        let csv = format!("landscape_{stem}.csv");
        let bytes = fs::read(a.join(&csv)).unwrap();
        assert_eq!(bytes, fs::read(b.join(&csv)).unwrap(), "{csv}");
        assert!(a.join(format!("landscape_{stem}.svg")).exists());
        let rows = csv_rows(&a.join(&csv));
        assert_eq!(rows.len(), 100 * 100);
        assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() > 0.0));
    }
    // JS has the smallest maximum gradient norm.
    let summary = csv_rows(&a.join("summary.csv"));
    let norm = |name: &str| -> f64 {
        summary.iter().find(|r| r[0] == name).unwrap()[4]
            .parse()
            .unwrap()
    };
    for other in ["reverse-kl", "forward-kl", "alpha:0.5"] {
        assert!(norm("js") < norm(other), "{other}");
    }
    for r in &summary {
        let loss: f64 = r[3].parse().unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12, "{r:?}");
    }
}

#[test]
fn echoed_config_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "l.json",
        r#"{"divergences": ["js", "alpha:0.3"], "beta": 2.5, "points": 30, "arrows": 6}"#,
    );
    let first = tmp.path().join("first");
    assert!(run(&[
        "landscape",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&first)
    ])
    .status
    .success());
    let echoed = first.join("effective_config.json");
    let second = tmp.path().join("second");
    assert!(run(&[
        "landscape",
        "--config",
        path_str(&echoed),
        "--out",
        path_str(&second)
    ])
    .status
    .success());
    for name in ["landscape_js.csv", "landscape_alpha-0.3.svg", "summary.csv"] {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap()
        );
    }
    assert_eq!(csv_rows(&first.join("landscape_js.csv")).len(), 900);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write_config(tmp.path(), "u.json", r#"{"betta": 3}"#);
    let out = tmp.path().join("o");
    let res = run(&[
        "landscape",
        "--config",
        path_str(&unknown),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("betta"));

    let empty = write_config(tmp.path(), "e.json", r#"{"grid_points": 0}"#);
    let res = run(&[
        "verify",
        "--config",
        path_str(&empty),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.join("evidence.csv").exists());

    let bad_div = write_config(tmp.path(), "d.json", r#"{"divergence": "hellinger"}"#);
    let res = run(&[
        "policy-solve",
        "--config",
        path_str(&bad_div),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("file");
    fs::write(&file, b"").unwrap();
    let res = run(&["landscape", "--out", path_str(&file.join("sub"))]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn verify_passes_and_detects_faults() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let res = run(&["verify", "--out", path_str(&out)]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let rows = csv_rows(&out.join("evidence.csv"));
    assert!(rows.len() >= 4 * 3 * 400);
    assert!(rows.iter().all(|r| r[8] == "true"));
    assert_eq!(rows.iter().filter(|r| r[0] == "gradient").count(), 4800);

    let fault = write_config(tmp.path(), "f.json", r#"{"fault": "curvature"}"#);
    let res = run(&[
        "verify",
        "--config",
        path_str(&fault),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("first: gradient,0,"), "{err}");
}

#[test]
fn policy_solve_matches_brute_force_maximizer() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("p");
    assert!(run(&["policy-solve", "--out", path_str(&out)])
        .status
        .success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
    let p0 = report["policy"][0].as_f64().unwrap();

    let problem = DiscreteAlignmentProblem::new(
        vec![1.0, 0.0],
        FiniteDistribution::new(vec![0.5, 0.5]).unwrap(),
        1.0,
        Divergence::JensenShannon,
    )
    .unwrap();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 1..100_000 {
        let p = i as f64 * 1e-5;
        let v = problem
            .objective(&FiniteDistribution::new(vec![p, 1.0 - p]).unwrap())
            .unwrap();
        if v > best.0 {
            best = (v, p);
        }
    }
    assert!((p0 - best.1).abs() < 1e-4, "{p0} vs {}", best.1);
}

#[test]
fn categorical_training_is_deterministic_and_sweeps() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "t.json",
        r#"{"divergences": ["reverse-kl", "forward-kl", "js", "alpha:0.5"], "seed": 4}"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let res = run(&["train", "--config", path_str(&cfg), "--out", path_str(dir)]);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
    }
    for stem in ["reverse-kl", "forward-kl", "js", "alpha-0.5"] {
        let trace = format!("{stem}/trace.csv");
        assert_eq!(
            fs::read(a.join(&trace)).unwrap(),
            fs::read(b.join(&trace)).unwrap()
        );
        let rows = csv_rows(&a.join(&trace));
        assert_eq!(rows.len(), 201);
        let last = rows.last().unwrap();
        let (x1, x2): (f64, f64) = (last[2].parse().unwrap(), last[3].parse().unwrap());
        assert!(x1 > 1.0 && x2 < 1.0, "{stem}: {last:?}");
    }
    let table = csv_rows(&a.join("comparison.csv"));
    assert_eq!(table.len(), 4);
    assert_eq!(table[2][0], "js");
}

fn small_stepwise(objective: &str) -> String {
    format!(
        r#"{{
            "mode": "stepwise",
            "samples": 60,
            "stepwise": {{
                "objective": "{objective}",
                "epochs": 4,
                "steps": 10,
                "conditions": 2,
                "train_conditions": [0, 1],
                "pairs_per_epoch": 40,
                "batch_size": 10,
                "eval_samples": 30,
                "dataset_size": 256,
                "pretrain": {{"epochs": 20, "batch_size": 64}}
            }}
        }}"#
    )
}

#[test]
fn stepwise_reverse_kl_reduces_to_direct_objective() {
    let tmp = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for objective in ["generalized", "direct-spo"] {
        let cfg = write_config(tmp.path(), "s.json", &small_stepwise(objective));
        let out = tmp.path().join(objective);
        let res = run(&["train", "--config", path_str(&cfg), "--out", path_str(&out)]);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
        for f in [
            "reference.json",
            "reverse-kl/policy.json",
            "reverse-kl/samples.csv",
        ] {
            assert!(out.join(f).exists(), "{f}");
        }
        traces.push(csv_rows(&out.join("reverse-kl/trace.csv")));
    }
    assert_eq!(traces[0].len(), 5);
    for (a, b) in traces[0].iter().zip(&traces[1]) {
        for (x, y) in a.iter().zip(b) {
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn saved_reference_skips_pretraining() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", &small_stepwise("bound"));
    let first = tmp.path().join("first");
    assert!(run(&[
        "train",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&first)
    ])
    .status
    .success());
    let mut echoed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(first.join("effective_config.json")).unwrap())
            .unwrap();
    echoed["stepwise"]["reference"] = serde_json::json!(first.join("reference.json"));
    let cfg2 = write_config(tmp.path(), "s2.json", &echoed.to_string());
    let second = tmp.path().join("second");
    let res = run(&[
        "train",
        "--config",
        path_str(&cfg2),
        "--out",
        path_str(&second),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert_eq!(
        fs::read(first.join("reverse-kl/trace.csv")).unwrap(),
        fs::read(second.join("reverse-kl/trace.csv")).unwrap()
    );

    // The sample CSV feeds straight into the metrics command.
    let report = tmp.path().join("m");
    let samples = first.join("reverse-kl/samples.csv");
    let res = run(&[
        "metrics",
        "--input",
        path_str(&samples),
        "--out",
        path_str(&report),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let pairs = csv_rows(&report.join("pairwise.csv"));
    assert_eq!(pairs.len(), 1);
    assert_eq!(
        (pairs[0][0].as_str(), pairs[0][1].as_str()),
        ("condition-0", "condition-1")
    );
}

#[test]
fn metrics_golden_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m");
    let input = fixtures().join("golden");
    let res = run(&[
        "metrics",
        "--input",
        path_str(&input),
        "--out",
        path_str(&out),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    for name in ["pairwise.csv", "entropy.csv"] {
        assert_eq!(
            fs::read_to_string(out.join(name)).unwrap(),
            fs::read_to_string(fixtures().join("golden_expected").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn golden_values_agree_with_independent_oracles() {
    let expected = fixtures().join("golden_expected");
    let oracle = csv_rows(&expected.join("oracle.csv"));
    let pairwise = csv_rows(&expected.join("pairwise.csv"));
    let entropy = csv_rows(&expected.join("entropy.csv"));
    let close = |a: &str, b: &str, tol: f64| {
        let (a, b): (f64, f64) = (a.parse().unwrap(), b.parse().unwrap());
        assert!((a - b).abs() < tol, "{a} vs {b}");
    };
    for row in pairwise {
        let o = oracle
            .iter()
            .find(|o| o[0] == "pair" && o[1] == row[0] && o[2] == row[1])
            .unwrap();
        close(&row[2], &o[3], 1e-9);
        close(&row[3], &o[4], 1e-9);
        close(&row[4], &o[5], 1e-6);
        close(&row[5], &o[6], 2e-2);
    }
    for row in entropy {
        let o = oracle
            .iter()
            .find(|o| o[0] == "image" && o[1] == row[0])
            .unwrap();
        close(&row[1], &o[7], 1e-9);
        close(&row[2], &o[8], 1e-9);
    }
}

#[test]
fn metrics_single_and_identical_images() {
    let tmp = tempfile::tempdir().unwrap();
    let img = GrayImage::from_fn(40, 40, |r, c| ((r * 7 + c * 3) % 200) as u8).unwrap();
    let one = tmp.path().join("one");
    fs::create_dir(&one).unwrap();
    pgm::write(&one.join("x.pgm"), &img).unwrap();
    let out = tmp.path().join("o1");
    assert!(run(&[
        "metrics",
        "--input",
        path_str(&one),
        "--out",
        path_str(&out)
    ])
    .status
    .success());
    assert_eq!(csv_rows(&out.join("pairwise.csv")).len(), 0);
    assert_eq!(csv_rows(&out.join("entropy.csv")).len(), 1);

    pgm::write(&one.join("y.pgm"), &img).unwrap();
    let out = tmp.path().join("o2");
    assert!(run(&[
        "metrics",
        "--input",
        path_str(&one),
        "--out",
        path_str(&out)
    ])
    .status
    .success());
    let rows = csv_rows(&out.join("pairwise.csv"));
    assert_eq!(rows, vec![vec!["x.pgm", "y.pgm", "0", "inf", "1", "1"]]);
}

#[test]
fn malformed_pgm_names_file_and_offset() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("imgs");
    fs::create_dir(&dir).unwrap();
    fs::write(dir.join("bad.pgm"), b"P5\n4 4\n65535\n").unwrap();
    let res = run(&[
        "metrics",
        "--input",
        path_str(&dir),
        "--out",
        path_str(&tmp.path().join("o")),
    ]);
    assert_eq!(res.status.code(), Some(3));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("bad.pgm") && err.contains("byte 7"), "{err}");
}

#[test]
fn missing_input_is_reported_before_work() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let res = run(&[
        "metrics",
        "--input",
        path_str(&tmp.path().join("nope")),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(res.status.code(), Some(3));
    assert!(!out.exists());
    let res = run(&["metrics", "--out", path_str(&out)]);
    assert_eq!(res.status.code(), Some(2));
}
