use std::path::PathBuf;
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn moby(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moby"))
        .args(args)
        .output()
        .expect("spawn moby")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("moby-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn path(rel: &str) -> String {
    root().join(rel).to_string_lossy().into_owned()
}

#[test]
fn run_writes_report_and_trajectory_then_replay_verifies() {
    let report = scratch("report.json");
    let traj = scratch("trajectory.csv");
    let out = moby(&[
        "run",
        "--config",
        &path("scenarios/night_routine.cfg"),
        "--report",
        report.to_str().unwrap(),
        "--trajectory",
        traj.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["completed"], true);
    assert_eq!(json["collision_count"], 0);
    assert_eq!(json["phases"].as_array().unwrap().len(), 7);

    let out = moby(&["replay", "--trajectory", traj.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("verified"), "{text}");
    assert!(text.contains(json["trajectory_hash"].as_str().unwrap()));

    let out = moby(&[
        "replay",
        "--trajectory",
        traj.to_str().unwrap(),
        "--config",
        &path("scenarios/night_routine.cfg"),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv = std::fs::read_to_string(&traj).unwrap();
    let tampered = scratch("tampered.csv");
    std::fs::write(&tampered, csv.replacen("Docked", "Manual", 1)).unwrap();
    let out = moby(&["replay", "--trajectory", tampered.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn csv_report_goes_to_stdout() {
    let out = moby(&[
        "run",
        "--config",
        &path("scenarios/night_routine.cfg"),
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<_> = text.lines().filter(|l| !l.is_empty()).collect();
    assert_eq!(lines.len(), 9);
    assert!(lines[0].starts_with("kind,name,"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(moby(&["run"]).status.code(), Some(2));
    assert_eq!(moby(&["run", "--bogus"]).status.code(), Some(2));
    assert_eq!(moby(&["launch"]).status.code(), Some(2));
    let missing = moby(&["run", "--config", "/nonexistent/none.cfg"]);
    assert_eq!(missing.status.code(), Some(2));
    let bad = scratch("bad.cfg");
    std::fs::write(&bad, "speed_level = 9\n").unwrap();
    assert_eq!(
        moby(&["run", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn plan_reports_the_dock_to_toilet_length() {
    let out = moby(&[
        "plan",
        "--map",
        &path("maps/living_lab.map"),
        "--from",
        "DOCK",
        "--to",
        "TOILET",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    let metres: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("path length: "))
        .and_then(|v| v.trim_end_matches(" m").parse().ok())
        .expect("path length line");
    assert!((19.0..=21.0).contains(&metres), "{metres}");

    let out = moby(&[
        "plan",
        "--map",
        &path("maps/living_lab.map"),
        "--from",
        "DOCK",
        "--to",
        "KITCHEN",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
