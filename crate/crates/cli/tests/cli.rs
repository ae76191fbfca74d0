use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use orbitpool_core::geometry::VerificationReport;

fn orbitpool(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_orbitpool"));
    cmd.args(args);
    match threads {
        Some(n) => cmd.env("ORBITPOOL_THREADS", n),
        None => cmd.env_remove("ORBITPOOL_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ];
    args.extend_from_slice(extra);
    orbitpool(&args, None)
}

fn reports_in(dir: &Path) -> Vec<VerificationReport> {
    let mut all = Vec::new();
    for entry in walk(dir) {
        if entry.file_name().is_some_and(|n| n == "reports.json") {
            let text = fs::read_to_string(&entry).unwrap();
            all.extend(serde_json::from_str::<Vec<VerificationReport>>(&text).unwrap());
        }
    }
    all
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn assert_same_tree(a: &Path, b: &Path) {
    let fa = walk(a);
    let fb = walk(b);
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(a).unwrap(), y.strip_prefix(b).unwrap());
        assert!(fs::read(x).unwrap() == fs::read(y).unwrap(), "{} differs", x.display());
    }
}

const SMALL: &str = r#""grid": {"half_width": 6.0, "resolution": 96}, "sweep": {"instances": 2}, "monte_carlo": {"sample_count": 20000, "seed": 3, "batch": 4096}"#;

#[test]
fn each_experiment_passes_and_reports_revalidate() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [
        "theorem1_sweep",
        "theorem2_check",
        "curvature_se2",
        "signature_invariance",
        "contraction_profile",
    ] {
        let cfg = write_config(
            dir.path(),
            &format!("{kind}.json"),
            &format!(r#"{{"experiment": "{kind}", {SMALL}}}"#),
        );
        let out = dir.path().join(kind);
        let res = run(&cfg, &out, &[]);
        assert_eq!(
            res.status.code(),
            Some(0),
            "{kind}: {}",
            String::from_utf8_lossy(&res.stderr)
        );
        let reports = reports_in(&out);
        assert!(!reports.is_empty(), "{kind}");
        for r in &reports {
            assert_eq!(r.recompute_pass(), r.pass);
            assert!(r.pass);
        }
        assert!(out.join("summary.json").exists());
    }
}

#[test]
fn full_suite_writes_one_directory_per_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "suite.json",
        &format!(r#"{{"experiment": "full_suite", {SMALL}}}"#),
    );
    let out = dir.path().join("suite");
    let res = run(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for sub in [
        "theorem1_sweep",
        "theorem2_check",
        "curvature_se2",
        "signature_invariance",
        "contraction_profile",
    ] {
        assert!(out.join(sub).join("reports.json").exists(), "{sub}");
    }
    assert!(out.join("contraction_profile/profile.svg").exists());
    assert!(out.join("signature_invariance/signature.csv").exists());
}

#[test]
fn default_curvature_config_meets_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"experiment": "curvature_se2"}"#);
    let out = dir.path().join("c");
    let res = run(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let reports = reports_in(&out);
    let closed = reports.iter().find(|r| r.id == "curvature_closed_form").unwrap();
    assert!(closed.measured_lhs >= 0.0 && closed.measured_lhs <= 1.0);
    assert!((closed.analytic_rhs - 1.0).abs() < 1e-2);
}

#[test]
fn tiny_grid_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "tiny.json",
        r#"{"experiment": "theorem1_sweep", "grid": {"half_width": 6.0, "resolution": 8}}"#,
    );
    let res = run(&cfg, &dir.path().join("o"), &[]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("degenerate input") && err.contains("resolution"), "{err}");
    let res = orbitpool(&["validate", cfg.to_str().unwrap()], None);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn malformed_config_names_the_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        "{\n  \"experiment\": \"theorem1_sweep\",\n  \"grdi\": {}\n}\n",
    );
    let res = orbitpool(&["validate", cfg.to_str().unwrap()], None);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("grdi") && err.contains("line 3"), "{err}");
    let good = write_config(dir.path(), "good.json", r#"{"experiment": "full_suite"}"#);
    let res = orbitpool(&["validate", good.to_str().unwrap()], None);
    assert_eq!(res.status.code(), Some(0));
    assert_eq!(orbitpool(&["frobnicate"], None).status.code(), Some(1));
    assert_eq!(
        orbitpool(&["run", "/nonexistent/config.json"], None).status.code(),
        Some(1)
    );
}

#[test]
fn violated_bound_exits_two_and_names_the_report() {
    let dir = tempfile::tempdir().unwrap();
    // No rotation leaves the quadrature exactly invariant at 1e-14.
    let cfg = write_config(
        dir.path(),
        "strict.json",
        &format!(r#"{{"experiment": "signature_invariance", "signature": {{"tolerance": 1e-14}}, {SMALL}}}"#),
    );
    let out = dir.path().join("strict");
    let res = run(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(
        err.contains("reports.json#0") && err.contains("signature_invariance"),
        "{err}"
    );
    let reports = reports_in(&out);
    assert!(reports.iter().any(|r| !r.pass));
}

#[test]
fn identical_seeds_give_identical_bytes_under_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "suite.json",
        &format!(r#"{{"experiment": "full_suite", {SMALL}}}"#),
    );
    let mut outs = Vec::new();
    for (k, threads) in [Some("1"), Some("3"), None].into_iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        let res = orbitpool(
            &[
                "run",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--quiet",
                "--seed",
                "17",
            ],
            threads,
        );
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        outs.push(out);
    }
    assert_same_tree(&outs[0], &outs[1]);
    assert_same_tree(&outs[0], &outs[2]);
    let other = dir.path().join("other");
    let res = orbitpool(
        &[
            "run",
            cfg.to_str().unwrap(),
            "--out",
            other.to_str().unwrap(),
            "--quiet",
            "--seed",
            "18",
        ],
        None,
    );
    assert_eq!(res.status.code(), Some(0));
    assert_ne!(
        fs::read(outs[0].join("theorem1_sweep/reports.json")).unwrap(),
        fs::read(other.join("theorem1_sweep/reports.json")).unwrap()
    );
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"experiment": "curvature_se2"}"#);
    let res = orbitpool(&["validate", cfg.to_str().unwrap()], Some("zero"));
    assert_eq!(res.status.code(), Some(1));
}
