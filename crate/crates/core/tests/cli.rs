use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_fusion-coag");

fn fusion_coag(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn run_small_scenario_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, stderr) = fusion_coag(&[
        "run",
        "ramification",
        "--particles",
        "500",
        "--replicas",
        "2",
        "--seed",
        "3",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code, 0, "{stdout}{stderr}");
    assert!(stdout.contains("ramification: PASS"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert!(dir.path().join("series_mean.csv").exists());
}

#[test]
fn run_rejects_unknown_scenario_and_wrong_frame() {
    let (code, _, stderr) = fusion_coag(&["run", "no-such-thing"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("error"));
    let (code, _, _) = fusion_coag(&["run", "fast-fusion", "--frame", "physical", "--particles", "10"]);
    assert_eq!(code, 2);
}

#[test]
fn simulate_then_analyze_then_profile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{
          "kernel": { "k0": 1.0, "alpha": 0.5, "beta": 0.5 },
          "fusion": { "r": 1.0, "mu": 1.0 },
          "initial": { "kind": "monodisperse_sphere", "n": 800 },
          "engine": { "t_end": 4.0, "record_every": 0.5, "snapshot_times": [1.0, 2.0] }
        }"#,
    )
    .unwrap();
    let out = dir.path().join("sim");
    let (code, stdout, stderr) =
        fusion_coag(&["simulate", p(&cfg), "--replicas", "2", "--seed", "9", "--out", p(&out)]);
    assert_eq!(code, 0, "{stdout}{stderr}");
    for f in ["series_mean.csv", "series_sem.csv", "series_r0.csv", "series_r1.csv", "events.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }

    let an = dir.path().join("an");
    let (code, stdout, stderr) = fusion_coag(&[
        "analyze",
        p(&out.join("series_r0.csv")),
        p(&out.join("series_r1.csv")),
        "--out",
        p(&an),
    ]);
    // a 4-unit run is too short for every plateau; the exit code must follow the table
    assert_eq!(code, if stdout.contains("FAIL") { 1 } else { 0 }, "{stdout}{stderr}");
    assert!(stdout.contains("area_non_increasing"));
    assert!(stdout.contains("M_0_1_plateau"));
    assert!(an.join("analysis.json").exists());

    let snaps = ["ensemble_r0_t1.csv", "ensemble_r0_t2.csv", "ensemble_r0_t4.csv"];
    let args: Vec<String> = snaps.iter().map(|s| out.join(s).to_str().unwrap().to_owned()).collect();
    let prof = dir.path().join("prof");
    let mut argv = vec!["profile"];
    argv.extend(args.iter().map(String::as_str));
    argv.extend(["--out", p(&prof)]);
    let (code, stdout, stderr) = fusion_coag(&argv);
    assert_eq!(code, 0, "{stdout}{stderr}");
    assert_eq!(stdout.lines().count(), 4);
    assert!(prof.join("profile_t4.csv").exists());
}

#[test]
fn simulate_reports_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{ "kernel": { "k0": 1.0, "alpha": 0.5, "beta": 0.5 } }"#).unwrap();
    let (code, _, stderr) = fusion_coag(&["simulate", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(code, 2);
    assert!(stderr.contains("bad.json"), "{stderr}");
}

#[test]
fn profile_needs_clocks() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("snapshot.csv");
    std::fs::write(&f, "a,v,w\n4.835975862049408,1,1\n").unwrap();
    let (code, _, stderr) = fusion_coag(&["profile", p(&f)]);
    assert_eq!(code, 2);
    assert!(stderr.contains("--times"));
    let (code, _, _) = fusion_coag(&["profile", p(&f), "--times", "1.0,2.0"]);
    assert_eq!(code, 2);
}
