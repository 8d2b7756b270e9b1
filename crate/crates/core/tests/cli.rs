use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_signcons"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(name: &str) -> String {
    scenario(name).display().to_string()
}

#[test]
fn analyze_exit_codes_follow_the_prediction() {
    let o = run(&["analyze", &path("continuous_root_triangle")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("prediction = ConsensusGuaranteed"));

    let o = run(&["analyze", &path("relay_two_cycle")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("prediction = SlidingPossible"));

    let o = run(&["analyze", &path("saturation_pair")]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("prediction = NoGuarantee"));
}

#[test]
fn analyze_json_is_valid() {
    let o = run(&["analyze", "--json", &path("sign_triangle")]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["prediction"], "SlidingPossible");
}

#[test]
fn bad_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = run(&["analyze", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(66));

    let broken = dir.path().join("broken.toml");
    fs::write(&broken, "x0 = [0.0, 1.0]\n").unwrap();
    let o = run(&["analyze", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(64));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));

    let o = run(&["simulate"]);
    assert_eq!(o.status.code(), Some(64));
    let o = run(&["reproduce", "11"]);
    assert_eq!(o.status.code(), Some(64));
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn simulate_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = run(&["simulate", &path("relay_two_cycle"), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with("t,x_1,x_2,"), "{}", &text[..40.min(text.len())]);
}

#[test]
fn simulate_reports_summary() {
    let o = run(&["simulate", &path("sign_leader_follower"), "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["classification"]["kind"], "consensus");
}

#[test]
fn filippov_at_a_point() {
    let o = run(&["filippov", &path("sign_triangle"), "--at", "0,0,0", "--samples", "2000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("vertices"), "{text}");

    let o = run(&["filippov", &path("sign_triangle"), "--at", "0,0"]);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn reproduce_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    for id in 1..=10 {
        let out = dir.path().join(format!("ex{id}"));
        let o = run(&["reproduce", &id.to_string(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "example {id}: {}{}", stdout(&o), stderr(&o));
        assert!(!stdout(&o).contains("FAIL"));
        assert!(fs::read_dir(&out).unwrap().count() > 0);
    }
}

#[test]
fn sweep_grid() {
    let o = run(&[
        "sweep",
        &path("sign_leader_follower"),
        "--h",
        "1e-3,5e-4",
        "--epsilon",
        "1e-2,1e-3",
        "--json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 4);
}
