use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn dermacal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dermacal"))
        .args(args)
        .env_remove("DERMACAL_CONFIG")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small simulated cohort written to `dir/cohort.csv`.
fn cohort(dir: &Path, subjects: usize) -> PathBuf {
    let csv = dir.join("cohort.csv");
    let out = dermacal(&["simulate", "--subjects", &subjects.to_string(), "--output", s(&csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    csv
}

fn report_json(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn help_and_version_succeed_and_bad_usage_is_validation() {
    assert_eq!(code(&dermacal(&["--help"])), 0);
    assert_eq!(code(&dermacal(&["report", "--help"])), 0);
    assert_eq!(code(&dermacal(&["--version"])), 0);
    assert_eq!(code(&dermacal(&[])), 1);
    assert_eq!(code(&dermacal(&["frobnicate"])), 1);
    assert_eq!(code(&dermacal(&["deltae", "--folds", "many"])), 1);
    assert_eq!(code(&dermacal(&["report", "--format", "pdf"])), 1);
}

#[test]
fn report_writes_outputs_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let csv = cohort(dir.path(), 10);
    let out_dir = dir.path().join("out");
    let out = dermacal(&["report", "--input", s(&csv), "--out-dir", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in ["report.json", "report.md", "ccm_tablet_to_dslr.json", "ccm_smartphone_to_dslr.json"] {
        assert!(out_dir.join(name).is_file(), "{name}");
    }
    let report = report_json(&out_dir);
    assert_eq!(report["report_version"], 1);
    assert_eq!(report["config"]["folds"], 5);
    assert_eq!(report["config"]["seed"], 42);
    assert_eq!(report["config"]["threshold"], 2.0);
    assert_eq!(report["config"]["reference_device"], "dslr");
    assert_eq!(report["config"]["inputs"][0], s(&csv));
    assert_eq!(report["config"]["analyses"].as_array().unwrap().len(), 7);

    let only = dir.path().join("only");
    let out = dermacal(&[
        "report", "--input", s(&csv), "--out-dir", s(&only), "--analyses", "deltae,icc", "--format", "json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(!only.join("report.md").exists());
    let report = report_json(&only);
    assert_eq!(report["deltae"]["status"], "ok");
    assert_eq!(report["icc"]["status"], "ok");
    assert_eq!(report["ccm"]["status"], "skipped");
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    cohort(dir.path(), 10);
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "config_version = 1\ninput = [\"cohort.csv\"]\nfolds = 3\nseed = 7\nthreshold = 1.5\n\
         analyses = [\"deltae\", \"ccm\"]\nout_dir = \"from-file\"\n",
    )
    .unwrap();

    let out = dermacal(&["report", "--config", s(&config), "--seed", "9"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = report_json(&dir.path().join("from-file"));
    assert_eq!(report["config"]["folds"], 3);
    assert_eq!(report["config"]["seed"], 9);
    assert_eq!(report["config"]["threshold"], 1.5);
    assert_eq!(report["config"]["analyses"], serde_json::json!(["deltae", "ccm"]));
    assert_eq!(report["config"]["inputs"][0], s(&dir.path().join("cohort.csv")));
    assert_eq!(report["ccm"]["devices"][0]["crossval"]["fold_count"], 3);

    // The environment variable names the file when --config is absent.
    let flagged = dir.path().join("flagged");
    let out = Command::new(env!("CARGO_BIN_EXE_dermacal"))
        .args(["report", "--out-dir", s(&flagged), "--analyses", "deltae"])
        .env("DERMACAL_CONFIG", &config)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = report_json(&flagged);
    assert_eq!(report["config"]["seed"], 7);
    assert_eq!(report["config"]["analyses"], serde_json::json!(["deltae"]));

    // An explicit --config wins over the environment.
    let other = dir.path().join("other.toml");
    std::fs::write(&other, "input = [\"cohort.csv\"]\nfolds = 4\nout_dir = \"other-out\"\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dermacal"))
        .args(["report", "--config", s(&other), "--analyses", "none"])
        .env("DERMACAL_CONFIG", &config)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(report_json(&dir.path().join("other-out"))["config"]["folds"], 4);
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "subject_id,device,region,angle,r,g,b\ns1,dslr,chin,0,10,20,30\ns1,tablet,chin,0,256,20,30\n",
    )
    .unwrap();
    let out = dermacal(&["deltae", "--input", s(&bad)]);
    assert_eq!(code(&out), 1);
    let msg = stderr(&out);
    assert!(msg.contains("row 3") && msg.contains("column r"), "{msg}");

    let csv = cohort(dir.path(), 6);
    assert_eq!(code(&dermacal(&["deltae", "--input", s(&csv), "--folds", "1"])), 1);
    assert_eq!(code(&dermacal(&["deltae", "--input", s(&csv), "--threshold", "-1"])), 1);
    assert_eq!(code(&dermacal(&["report", "--input", s(&csv), "--analyses", "colour"])), 1);
    assert_eq!(code(&dermacal(&["deltae"])), 1, "no input");

    let config = dir.path().join("typo.toml");
    std::fs::write(&config, "fold = 3\n").unwrap();
    let out = dermacal(&["deltae", "--config", s(&config), "--input", s(&csv)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("typo.toml"));

    let sim = dir.path().join("sim.toml");
    std::fs::write(&sim, "config_version = 2\n").unwrap();
    assert_eq!(code(&dermacal(&["simulate", "--simulator-config", s(&sim), "--output", "x.csv"])), 1);
}

#[test]
fn infeasible_analyses_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = cohort(dir.path(), 4);
    let out = dermacal(&["deltae", "--input", s(&csv), "--reference-device", "colorimeter"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("colorimeter"));
    let out = dermacal(&["ccm", "crossval", "--input", s(&csv), "--folds", "9"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("ccm"));

    let disjoint = dir.path().join("disjoint.csv");
    std::fs::write(
        &disjoint,
        "subject_id,device,region,angle,r,g,b\ns1,dslr,chin,0,10,20,30\ns2,tablet,chin,0,12,20,30\n",
    )
    .unwrap();
    assert_eq!(code(&dermacal(&["deltae", "--input", s(&disjoint)])), 2);
    // Indices need no reference, so the same file succeeds there.
    assert_eq!(code(&dermacal(&["indices", "--input", s(&disjoint)])), 0);
}

#[test]
fn io_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = dermacal(&["deltae", "--input", s(&missing)]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("missing.csv"));
    assert_eq!(code(&dermacal(&["deltae", "--config", s(&dir.path().join("none.toml"))])), 3);

    let csv = cohort(dir.path(), 6);
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let out = dermacal(&["report", "--input", s(&csv), "--out-dir", s(&blocker.join("out"))]);
    assert_eq!(code(&out), 3);
}

#[test]
fn single_analysis_commands_print_their_section() {
    let dir = tempfile::tempdir().unwrap();
    let csv = cohort(dir.path(), 10);
    let cases: [&[&str]; 7] = [
        &["deltae"],
        &["indices"],
        &["icc"],
        &["bland-altman"],
        &["anova"],
        &["sensitivity"],
        &["ccm", "crossval"],
    ];
    for args in cases {
        let mut full = args.to_vec();
        full.extend(["--input", s(&csv)]);
        let out = dermacal(&full);
        assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["status"], "ok", "{args:?}");
    }
    let icc: Value = serde_json::from_slice(&dermacal(&["icc", "--input", s(&csv)]).stdout).unwrap();
    assert_eq!(icc["basis"], "corrected");
    assert_eq!(icc["measures"].as_array().unwrap().len(), 6);
    let raw: Value =
        serde_json::from_slice(&dermacal(&["icc", "--raw", "--input", s(&csv), "--icc-form", "absolute-agreement"]).stdout)
            .unwrap();
    assert_eq!(raw["basis"], "raw");
    assert_eq!(raw["form"], "absolute_agreement");
}

#[test]
fn ccm_fit_then_apply() {
    let dir = tempfile::tempdir().unwrap();
    let csv = cohort(dir.path(), 10);
    let fits = dir.path().join("fits");
    let out = dermacal(&["ccm", "fit", "--input", s(&csv), "--out-dir", s(&fits)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ccm = fits.join("ccm_tablet_to_dslr.json");
    let fitted: Value = serde_json::from_str(&std::fs::read_to_string(&ccm).unwrap()).unwrap();
    assert_eq!(fitted["a"].as_array().unwrap().len(), 9);

    let corrected = dir.path().join("corrected.csv");
    let out = dermacal(&[
        "ccm", "apply", "--ccm", s(&ccm), "--input", s(&csv), "--device", "tablet", "--output", s(&corrected),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&corrected).unwrap();
    let tablet_rows = std::fs::read_to_string(&csv).unwrap().lines().filter(|l| l.contains(",tablet,")).count();
    assert_eq!(text.lines().count(), tablet_rows + 1);
    assert!(text.lines().skip(1).all(|l| l.contains(",tablet,")));
    // The corrected file is itself valid input.
    assert_eq!(code(&dermacal(&["indices", "--input", s(&corrected)])), 0);

    assert_eq!(
        code(&dermacal(&["ccm", "apply", "--ccm", s(&ccm), "--input", s(&csv), "--device", "camera"])),
        2
    );
    assert_eq!(
        code(&dermacal(&["ccm", "apply", "--ccm", s(&csv), "--input", s(&csv), "--device", "tablet"])),
        1
    );
}

#[test]
fn convert_emits_lab_and_indices_per_record() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("two.csv");
    std::fs::write(
        &csv,
        "subject_id,device,region,angle,r,g,b\ns1,dslr,chin,0,255,255,255\ns1,dslr,forehead,0,200,150,120\n",
    )
    .unwrap();
    let out = dermacal(&["convert", "--input", s(&csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("subject_id,device,region,angle,l_star,a_star,b_star"));
    let white: Vec<&str> = lines[1].split(',').collect();
    assert!((white[4].parse::<f64>().unwrap() - 100.0).abs() < 0.01);
    assert_eq!(white[10], "true", "white has b* = 0 so ITA is degenerate");
}

#[test]
fn simulate_is_deterministic_and_config_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let toml = dir.path().join("sim.toml");
    assert_eq!(code(&dermacal(&["simulate", "--subjects", "8", "--seed", "5", "--output", s(&a)])), 0);
    assert_eq!(code(&dermacal(&["simulate", "--subjects", "8", "--seed", "5", "--output", s(&b)])), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let out = dermacal(&["simulate", "--subjects", "8", "--seed", "5", "--write-config", s(&toml)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(code(&dermacal(&["simulate", "--simulator-config", s(&toml), "--output", s(&c)])), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());

    let tuned = dir.path().join("tuned.toml");
    let out = dermacal(&[
        "simulate", "--subjects", "30", "--tune-gains", "--tune-iterations", "2", "--write-config", s(&tuned),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(std::fs::read_to_string(&tuned).unwrap().contains("config_version = 1"));
}

#[test]
fn repeated_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let csv = cohort(dir.path(), 12);
    let out_dir = dir.path().join("out");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let out = dermacal(&["report", "--input", s(&csv), "--out-dir", s(&out_dir)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        runs.push(std::fs::read(out_dir.join("report.json")).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
}
