//! End-to-end tests of the `lamp` binary: determinism, config handling,
//! error reporting, and the genie/ga equivalence.

use std::path::Path;
use std::process::{Command, Output};

fn lamp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lamp"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = lamp().args(args).output().expect("spawn lamp");
    assert!(
        out.status.success(),
        "lamp {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "--n-devices",
        "20",
        "--pilot-length",
        "8",
        "--activity-prob",
        "0.15",
        "--snr-db",
        "30",
        "--seed",
        "3",
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn eval_rerun_is_byte_identical() {
    let a = run_ok(&[&["eval"], &small_args(&["--trials", "40", "--iters", "3,5,10"])[..]].concat());
    let b = run_ok(&[&["eval"], &small_args(&["--trials", "40", "--iters", "3,5,10"])[..]].concat());
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn eval_single_trial_runs() {
    let out = run_ok(&[
        "eval",
        "--n-devices",
        "20",
        "--pilot-length",
        "8",
        "--trials",
        "1",
        "--iters",
        "5",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2); // header + one row
}

#[test]
fn dataset_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.lampds");
    let p2 = dir.path().join("b.lampds");
    let mk = |p: &Path| {
        let args = small_args(&["--trials", "40", "--amp-iters", "10"]);
        run_ok(&[&["gen-dataset"], &args[..], &["--out", p.to_str().unwrap()]].concat());
    };
    mk(&p1);
    mk(&p2);
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn roc_rerun_is_byte_identical_and_monotone() {
    let args = small_args(&["--trials", "40", "--iters", "10", "--delta-count", "25"]);
    let a = run_ok(&[&["roc"], &args[..]].concat());
    let b = run_ok(&[&["roc"], &args[..]].concat());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let pfs: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(pfs.len(), 25);
    for w in pfs.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
}

#[test]
fn train_is_deterministic_and_dl_genie_matches_ga() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("train.lampds");
    let m1 = dir.path().join("m1.falnet");
    let m2 = dir.path().join("m2.falnet");
    let gen_args = small_args(&["--trials", "400", "--amp-iters", "10"]);
    run_ok(&[&["gen-dataset"], &gen_args[..], &["--out", ds.to_str().unwrap()]].concat());
    for m in [&m1, &m2] {
        run_ok(&[
            "train",
            "--dataset",
            ds.to_str().unwrap(),
            "--out",
            m.to_str().unwrap(),
            "--max-epochs",
            "3",
            "--batch-size",
            "100",
            "--seed",
            "9",
        ]);
    }
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());

    // dl-lamp with the genie flag must reduce exactly to ga-lamp
    let common = small_args(&["--trials", "40", "--iters", "5,10"]);
    let ga = run_ok(&[&["eval"], &common[..], &["--algorithm", "ga-lamp"]].concat());
    let dl = run_ok(&[
        &["eval"],
        &common[..],
        &["--algorithm", "dl-lamp", "--genie"],
    ]
    .concat());
    let strip = |o: &Output| {
        String::from_utf8(o.stdout.clone())
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let mut cols: Vec<&str> = l.split(',').collect();
                cols.remove(1); // algorithm name differs by construction
                cols.join(",")
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&ga), strip(&dl));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg,
        "n_devices = 20\npilot_length = 8\nactivity_prob = 0.15\nsnr_db = 30\nseed = 3\n",
    )
    .unwrap();
    let from_file = run_ok(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "40",
        "--iters",
        "5",
    ]);
    let from_flags = run_ok(&[&["eval"], &small_args(&["--trials", "40", "--iters", "5"])[..]].concat());
    assert_eq!(from_file.stdout, from_flags.stdout);

    // explicit flag overrides the file value => different seed, different rows
    let overridden = run_ok(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "40",
        "--iters",
        "5",
        "--seed",
        "4",
    ]);
    assert_ne!(from_file.stdout, overridden.stdout);
}

#[test]
fn errors_are_one_line_and_nonzero() {
    let cases: Vec<Vec<&str>> = vec![
        vec!["eval", "--algorithm", "nonsense"],
        vec!["eval", "--algorithm", "dl-lamp"], // missing --model-file
        vec!["eval", "--activity-prob", "1.5"],
        vec!["train", "--dataset", "/nonexistent.lampds", "--out", "/tmp/x.falnet"],
    ];
    for args in cases {
        let out = lamp().args(&args).output().unwrap();
        assert!(!out.status.success(), "expected failure for {args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "stderr: {err}");
        assert!(err.starts_with("error: "), "stderr: {err}");
    }
}
