use std::path::Path;
use std::process::{Command, Output};

use interfactor::io::Manifest;

fn interfactor(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_interfactor"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .env_remove("INTERFACTOR_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = interfactor(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    Manifest::read(out).unwrap().verify(out).unwrap();
    String::from_utf8(o.stdout).unwrap()
}

fn pipeline(root: &Path, family: &str) {
    let sim = root.join("sim");
    let fit = root.join("fit");
    let sum = root.join("sum");
    ok(
        &sim,
        &[
            "simulate",
            "--set",
            "simulate.m=30",
            "--set",
            "simulate.n=20",
            "--seed",
            "4",
        ],
    );
    let data = sim.join("data.csv");
    let groups = sim.join("seed_groups.json");
    let family_arg = format!("model.family={family}");
    let data_arg = format!("paths.data={}", data.display());
    let groups_arg = format!("paths.seed_groups={}", groups.display());
    ok(
        &fit,
        &[
            "fit",
            "--set",
            &family_arg,
            "--set",
            &data_arg,
            "--set",
            &groups_arg,
            "--set",
            "mcmc.iters=80",
            "--set",
            "mcmc.burn_in=20",
            "--set",
            "mcmc.chains=2",
            "--seed",
            "11",
        ],
    );
    let manifest = Manifest::read(&fit).unwrap();
    let names: Vec<&str> = manifest.artifacts.iter().map(|a| a.path.as_str()).collect();
    assert_eq!(names, ["draws_chain0.bin", "draws_chain1.bin"]);
    let c0 = fit.join("draws_chain0.bin");
    let c1 = fit.join("draws_chain1.bin");
    assert_ne!(std::fs::read(&c0).unwrap(), std::fs::read(&c1).unwrap());
    ok(
        &sum,
        &[
            "summarize",
            "--draws",
            c0.to_str().unwrap(),
            "--draws",
            c1.to_str().unwrap(),
        ],
    );
}

#[test]
fn simulate_fit_summarize_is_deterministic() {
    for family in ["mult2", "gp"] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        pipeline(a.path(), family);
        pipeline(b.path(), family);
        for f in [
            "sim/data.csv",
            "fit/draws_chain0.bin",
            "fit/draws_chain1.bin",
            "sum/summary.csv",
        ] {
            let x = std::fs::read(a.path().join(f)).unwrap();
            let y = std::fs::read(b.path().join(f)).unwrap();
            assert!(x == y, "{family}: {f} differs between runs");
        }
    }
}

#[test]
fn overlap_test_reports_small_p_value() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["test-overlap", "--seed", "3"]);
    let p: f64 = stdout.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(p < 0.001, "{stdout}");
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("overlap.json")).unwrap()).unwrap();
    assert_eq!(json["n_replicates"], 100_000);
}

#[test]
fn detect_and_surface_follow_a_fit() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(
        &root.join("sim"),
        &[
            "simulate",
            "--set",
            "simulate.m=30",
            "--set",
            "simulate.n=20",
            "--set",
            "simulate.frac_affected=0.3",
        ],
    );
    let data_arg = format!("paths.data={}", root.join("sim/data.csv").display());
    let groups_arg = format!("paths.seed_groups={}", root.join("sim/seed_groups.json").display());
    ok(
        &root.join("fit"),
        &[
            "fit",
            "--set",
            "model.family=mult2",
            "--set",
            &data_arg,
            "--set",
            &groups_arg,
            "--set",
            "mcmc.iters=200",
            "--set",
            "mcmc.burn_in=100",
        ],
    );
    let draws_arg = format!("paths.draws={}", root.join("fit/draws_chain0.bin").display());
    ok(&root.join("det"), &["detect", "--set", &draws_arg, "--set", &data_arg]);
    let det = std::fs::read_to_string(root.join("det/detections.csv")).unwrap();
    assert!(det.starts_with("feature,feature_id,probability"));
    ok(
        &root.join("surf"),
        &["export-surface", "--set", &draws_arg, "--set", "surface.grid_size=5"],
    );
    let surf = std::fs::read_to_string(root.join("surf/surface.csv")).unwrap();
    assert_eq!(surf.lines().filter(|l| l.ends_with(",grid")).count(), 25);
}

#[test]
fn compare_scores_every_model() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "compare",
            "--set",
            "simulate.m=30",
            "--set",
            "simulate.n=20",
            "--set",
            "compare.length_scales=[0.2, 0.5]",
            "--set",
            "mcmc.iters=60",
            "--set",
            "mcmc.burn_in=30",
            "--threads",
            "2",
        ],
    );
    let text = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let labels: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["mult2", "gp1_ls0.2", "gp1_ls0.5"]);
}

#[test]
fn failures_print_one_coded_line() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&[&str], &str); 4] = [
        (&["fit"], "error CONFIG:"),
        (&["summarize", "--set", "model.bogus=1"], "error CONFIG:"),
        (
            &[
                "fit",
                "--set",
                "model.family=gp",
                "--set",
                "model.nu=1.0",
                "--set",
                "paths.data=missing.csv",
            ],
            "error IO:",
        ),
        (
            &["test-overlap", "--set", "overlap.replicates=0"],
            "error INVALID_INPUT:",
        ),
    ];
    for (args, prefix) in cases {
        let o = interfactor(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8(o.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with(prefix), "{args:?}: {err}");
    }

    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, b"IFDRAWS\0\x01\0\0\0garbage").unwrap();
    let o = interfactor(dir.path(), &["summarize", "--draws", bad.to_str().unwrap()]);
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("error CORRUPT_FILE:"));
}
