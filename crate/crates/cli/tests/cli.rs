use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn idyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idyn")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = idyn(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_noise_filter_id_chain() {
    let dir = tempdir().unwrap();
    let walk = dir.path().join("walk.motion.json");
    let noisy = dir.path().join("noisy.motion.json");
    let filtered = dir.path().join("filtered.motion.json");
    let csv = dir.path().join("torques.csv");

    ok(&["synth", "--duration", "2", "--fps", "30", "--out", p(&walk)]);
    let m = read_json(&walk);
    assert_eq!(m["fps"], 30.0);
    assert_eq!(m["frames"].as_array().unwrap().len(), 60);

    ok(&["noise", "--input", p(&walk), "--out", p(&noisy), "--sigma", "0.05", "--seed", "3"]);
    assert_ne!(fs::read_to_string(&walk).unwrap(), fs::read_to_string(&noisy).unwrap());
    ok(&["filter", "--input", p(&noisy), "--out", p(&filtered), "--cutoff-hz", "6"]);
    ok(&["id", "--input", p(&filtered), "--out", p(&csv), "--mode", "com"]);

    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "frame,joint_name,fx,fy,fz,tx,ty,tz");
    assert_eq!(lines.count(), (60 - 4) * 24);

    let manifest = read_json(&dir.path().join("torques.csv.manifest.json"));
    assert_eq!(manifest["command"], "id");
    assert_eq!(manifest["parameters"]["body"]["mode"], "com");
}

#[test]
fn noise_is_reproducible_per_seed() {
    let dir = tempdir().unwrap();
    let walk = dir.path().join("w.json");
    ok(&["synth", "--duration", "1", "--out", p(&walk)]);
    let run = |name: &str, seed: &str, profile: &str| {
        let out = dir.path().join(name);
        ok(&["noise", "--input", p(&walk), "--out", p(&out), "--seed", seed, "--profile", profile]);
        fs::read_to_string(out).unwrap()
    };
    assert_eq!(run("a", "7", "uniform"), run("b", "7", "uniform"));
    assert_ne!(run("c", "7", "uniform"), run("d", "8", "uniform"));
    assert_eq!(run("e", "7", "realistic"), run("f", "7", "realistic"));
}

#[test]
fn analyze_writes_csv_with_header() {
    let dir = tempdir().unwrap();
    let walk = dir.path().join("w.json");
    ok(&["synth", "--duration", "2", "--out", p(&walk)]);
    for (exp, header) in [
        ("amplification", "sigma,mean_nm,std_nm,n"),
        ("sensitivity", "joint,error_nm"),
        ("cutoff", "cutoff_hz,noise_error_nm,distortion_nm"),
        ("realistic", "model,filtered,error_nm"),
    ] {
        let out = dir.path().join(format!("{exp}.csv"));
        ok(&["--jobs", "2", "analyze", exp, "--input", p(&walk), "--out", p(&out), "--seeds", "2"]);
        let text = fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().next().unwrap(), header, "{exp}");
        assert!(text.lines().count() > 1);
    }
}

#[test]
fn refine_reports_lower_torque_error() {
    let dir = tempdir().unwrap();
    let clean = dir.path().join("clean.json");
    let noisy = dir.path().join("noisy.json");
    let refined = dir.path().join("refined.json");
    let report = dir.path().join("report.json");
    ok(&["synth", "--duration", "1", "--out", p(&clean)]);
    ok(&["noise", "--input", p(&clean), "--out", p(&noisy)]);
    ok(&[
        "refine", "--input", p(&noisy), "--clean", p(&clean), "--out", p(&refined), "--report", p(&report),
        "--iterations", "30",
    ]);
    let r = read_json(&report);
    assert_eq!(r["iterations"], 30);
    assert_eq!(r["loss"].as_array().unwrap().len(), 31);
    assert!(r["torque_error_final_nm"].as_f64().unwrap() < r["torque_error_initial_nm"].as_f64().unwrap());
    assert!(refined.exists());
}

#[test]
fn repro_writes_all_artifacts() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("results");
    let stdout = ok(&["repro", "--out", p(&out), "--seeds", "2", "--iterations", "20"]);
    assert!(stdout.contains("amplification"));
    for f in [
        "amplification.csv",
        "sensitivity.csv",
        "cutoff.csv",
        "realistic.csv",
        "refinement_report.json",
        "summary.json",
        "manifest.json",
        "torques_clean.csv",
        "torques_noisy.csv",
        "torques_refined.csv",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["parameters"]["seeds"], 2);
    assert_eq!(m["parameters"]["refinement"]["iterations"], 20);
}

#[test]
fn missing_input_is_usage_error() {
    let dir = tempdir().unwrap();
    let out = idyn(&["id", "--input", "/definitely/not/here.json", "--out", p(&dir.path().join("t.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/definitely/not/here.json"));
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(idyn(&["synth", "--bogus"]).status.code(), Some(2));
    assert_eq!(idyn(&["filter"]).status.code(), Some(2));
}

#[test]
fn schema_violation_names_the_frame() {
    let dir = tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let mut frame = serde_json::json!({"pose": vec![[0.0, 0.0, 0.0]; 24], "root_trans": [0.0, 0.0, 0.0]});
    let frames = vec![frame.clone(), frame.clone(), frame.clone()];
    frame["pose"] = serde_json::json!(vec![[0.0, 0.0, 0.0]; 23]);
    let mut all = frames;
    all.push(frame);
    fs::write(&bad, serde_json::json!({"fps": 30.0, "frames": all}).to_string()).unwrap();
    let out = idyn(&["id", "--input", p(&bad), "--out", p(&dir.path().join("t.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frame 3"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn divergence_is_computation_failure() {
    let dir = tempdir().unwrap();
    let clean = dir.path().join("clean.json");
    let noisy = dir.path().join("noisy.json");
    ok(&["synth", "--duration", "0.5", "--out", p(&clean)]);
    ok(&["noise", "--input", p(&clean), "--out", p(&noisy)]);
    let out = idyn(&[
        "refine", "--input", p(&noisy), "--clean", p(&clean), "--out", p(&dir.path().join("r.json")), "--report",
        p(&dir.path().join("rep.json")), "--step-size", "1e300", "--iterations", "5",
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_matches_snapshot() {
    let mut text = String::new();
    for sub in ["", "synth", "noise", "filter", "id", "analyze", "refine", "repro"] {
        let args: Vec<&str> = if sub.is_empty() { vec!["--help"] } else { vec![sub, "--help"] };
        text.push_str(&format!("$ idyn {}\n", args.join(" ")));
        text.push_str(&ok(&args));
        text.push('\n');
    }
    let snap = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots/help.txt");
    if std::env::var_os("UPDATE_SNAPSHOTS").is_some() {
        fs::create_dir_all(snap.parent().unwrap()).unwrap();
        fs::write(&snap, &text).unwrap();
    }
    let expected = fs::read_to_string(&snap).expect("snapshot exists; run with UPDATE_SNAPSHOTS=1 to create it");
    assert_eq!(text, expected);
}

#[test]
fn results_do_not_depend_on_jobs() {
    let dir = tempdir().unwrap();
    let walk = dir.path().join("w.json");
    ok(&["synth", "--duration", "2", "--out", p(&walk)]);
    let run = |jobs: &str| {
        let out = dir.path().join(format!("amp{jobs}.csv"));
        ok(&["--jobs", jobs, "analyze", "amplification", "--input", p(&walk), "--out", p(&out), "--seeds", "3"]);
        fs::read_to_string(out).unwrap()
    };
    assert_eq!(run("1"), run("3"));
}
