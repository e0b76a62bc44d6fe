use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nlshrink::io::{load_cimg, load_mask, save_cimg};
use nlshrink::{make_phantom, ComplexImage, SolverTrace};

fn nlshrink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlshrink"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = nlshrink(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key)?.trim().parse().ok())
        .unwrap_or_else(|| panic!("no `{key}` in {stdout}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a phantom, a mask and its k-space; returns (truth, mask, kspace).
fn instance(dir: &Path, dims: &str, mask_args: &[&str]) -> (PathBuf, PathBuf, PathBuf) {
    let (t, m, k) = (dir.join("truth.cimg"), dir.join("mask.cimg"), dir.join("k.cimg"));
    let mut args = vec!["maskgen", "--dims", dims, "--seed", "1", "--out", s(&m)];
    args.extend_from_slice(mask_args);
    ok(&args);
    ok(&[
        "phantom", "--name", "shepp_like", "--dims", dims, "--seed", "0", "--out", s(&t), "--mask", s(&m),
        "--kspace-out", s(&k),
    ]);
    (t, m, k)
}

const DESK: [&str; 10] = [
    "--penalty",
    "lp_thresholded",
    "--p",
    "0.5",
    "--T",
    "100",
    "--beta-init",
    "1e-6",
    "--search-radius",
    "1",
];

#[test]
fn full_mask_reconstruction_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (t, m, k) = instance(dir.path(), "32", &["--kind", "full"]);
    let out = dir.path().join("rec.cimg");
    let mut args = vec!["reconstruct", "--kspace", s(&k), "--mask", s(&m), "--lambda", "1e-3", "--out", s(&out)];
    args.extend_from_slice(&DESK);
    args.extend_from_slice(&["--truth", s(&t)]);
    let stdout = ok(&args);
    assert!(value(&stdout, "snr_db") >= 100.0, "{stdout}");
    assert!(out.with_extension("png").exists());
}

#[test]
fn missing_kspace_is_a_usage_error() {
    let out = nlshrink(&["reconstruct", "--mask", "m.cimg", "--out", "r.cimg", "--lambda", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--kspace") && err.contains("Usage"), "{err}");
}

#[test]
fn unknown_flag_rejected() {
    let out = nlshrink(&["maskgen", "--kind", "full", "--dims", "8", "--seed", "0", "--out", "x", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn io_and_parameter_failures_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (_, m, k) = instance(dir.path(), "16", &["--kind", "random", "--fraction", "0.5"]);
    let out = nlshrink(&["reconstruct", "--kspace", "/no/such/file", "--mask", s(&m), "--penalty", "l1", "--lambda", "1", "--out", "r"]);
    assert_eq!(out.status.code(), Some(3));
    let out = nlshrink(&["reconstruct", "--kspace", s(&k), "--mask", s(&m), "--penalty", "l1", "--out", "r"]);
    assert_eq!(out.status.code(), Some(2), "lambda is required");
    let out = nlshrink(&["reconstruct", "--kspace", s(&k), "--mask", s(&m), "--penalty", "lp", "--lambda", "1", "--out", "r"]);
    assert_eq!(out.status.code(), Some(2), "lp needs p");
    let out = nlshrink(&["phantom", "--name", "brain", "--dims", "8", "--seed", "0", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nls_and_irw_reach_the_same_cost() {
    let dir = tempfile::tempdir().unwrap();
    let (_, m, k) = instance(dir.path(), "64", &["--kind", "random", "--fraction", "0.2"]);
    let run = |alg: &str| {
        let out = dir.path().join(format!("{alg}.cimg"));
        let trace = dir.path().join(format!("{alg}.csv"));
        let mut args = vec![
            "reconstruct", "--kspace", s(&k), "--mask", s(&m), "--lambda", "1e-3", "--out", s(&out), "--algorithm", alg,
            "--trace", s(&trace), "--weight-floor", "1",
        ];
        args.extend_from_slice(&DESK);
        let stdout = ok(&args);
        let cost = value(&stdout, "final_cost");
        let from_trace = SolverTrace::load(&trace).unwrap().final_cost().unwrap();
        assert!((from_trace - cost).abs() <= 1e-9 * cost);
        (cost, trace)
    };
    let (a, ta) = run("nls");
    let (b, tb) = run("irw");
    assert!((a - b).abs() / a.min(b) <= 0.02, "nls {a} irw {b}");

    let joined = dir.path().join("cmp.csv");
    let stdout = ok(&["compare", "--nls", s(&ta), "--irw", s(&tb), "--out", s(&joined)]);
    assert!(stdout.contains("gap"));
    let text = std::fs::read_to_string(&joined).unwrap();
    assert!(text.starts_with("algorithm,outer,inner,seconds,cost,snr_db"));
    assert!(text.lines().any(|l| l.starts_with("irw,")) && text.lines().any(|l| l.starts_with("nls,")));
}

#[test]
fn shrink_table_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    ok(&[
        "shrink-table", "--penalty", "lp_thresholded", "--beta", "2", "--p", "0.5", "--T", "1", "--tmax", "3", "--step",
        "0.01", "--out", s(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 301);
    for r in &rows {
        let (t, shrunk) = (r[0], r[2]);
        assert!((0.0..=t).contains(&shrunk), "{r:?}");
        if t >= 1.0 {
            assert_eq!(shrunk, t);
        }
    }
    let half = rows.iter().find(|r| (r[0] - 0.5).abs() < 1e-9).unwrap();
    assert_eq!(half[2], 0.0);
    let bad = nlshrink(&["shrink-table", "--penalty", "l1", "--beta", "2", "--step", "0", "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn maskgen_cartesian_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.cimg");
    ok(&["maskgen", "--kind", "cartesian", "--R", "4", "--dims", "256", "--seed", "3", "--out", s(&out)]);
    let mask = load_mask(&out).unwrap();
    assert_eq!(mask.sampled_rows(), 64);
    assert!(mask.is_sampled(0, 0));
}

#[test]
fn phantom_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.cimg"), dir.path().join("b.cimg"));
    for p in [&a, &b] {
        ok(&["phantom", "--name", "piecewise_blocks", "--dims", "64", "--seed", "1", "--out", s(p)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(load_cimg(&a).unwrap(), make_phantom("piecewise_blocks", 64, 64, 1).unwrap().image);
}

#[test]
fn degenerate_denoise_returns_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.cimg");
    let img = make_phantom("textured", 32, 32, 4).unwrap().image;
    save_cimg(&input, &img, true).unwrap();
    let out = dir.path().join("out.cimg");
    ok(&["denoise", "--input", s(&input), "--penalty", "l1", "--lambda", "1e-20", "--search-radius", "1", "--out", s(&out)]);
    let f: ComplexImage = load_cimg(&out).unwrap();
    let err: f64 = f.as_slice().iter().zip(img.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum();
    assert!((err / img.norm_sqr()).sqrt() <= 1e-8);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let (_, m, k) = instance(dir.path(), "16", &["--kind", "random", "--fraction", "0.5"]);
    let cfg = dir.path().join("solver.toml");
    std::fs::write(&cfg, "lambda = 0.01\npenalty = \"l1\"\nouter_iters = 2\ninner_iters = 3\nsearch_radius = 1\n").unwrap();
    let trace = dir.path().join("trace.csv");
    let out = dir.path().join("r.cimg");
    ok(&[
        "reconstruct", "--kspace", s(&k), "--mask", s(&m), "--config", s(&cfg), "--outer-iters", "4", "--out", s(&out),
        "--trace", s(&trace),
    ]);
    let t = SolverTrace::load(&trace).unwrap();
    assert_eq!(t.blocks().len(), 4);
    assert_eq!(t.len(), 4 * (3 + 1));

    std::fs::write(&cfg, "lamda = 0.01\n").unwrap();
    let bad = nlshrink(&["reconstruct", "--kspace", s(&k), "--mask", s(&m), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn experiment_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("exp.toml");
    std::fs::write(
        &spec,
        r#"
lambdas = [1e-3, 1e-2]
[phantom]
name = "piecewise_blocks"
width = 16
[mask]
kind = "random"
fraction = 0.5
seed = 2
[solver]
outer_iters = 3
inner_iters = 2
search_radius = 1
[[penalties]]
kind = "lp_thresholded"
p = 0.5
T = 100.0
[[runs]]
algorithm = "nls"
"#,
    )
    .unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&["experiment", "--spec", s(&spec), "--out", s(&out), "--no-timing"]);
        std::fs::read_to_string(out.join("results.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert_eq!(a.lines().count(), 1 + 3);
    assert!(a.lines().nth(1).unwrap().starts_with("0,zero_filled,"));
    assert!(dir.path().join("a/images/001_nls_error.png").exists());
}
