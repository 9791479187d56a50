use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use eotrack_core::evaluation::{ground_truth_as_tracks, read_ground_truth};
use eotrack_core::event_io::{read_tracks, write_tracks};
use eotrack_core::RunConfig;

fn eotrack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eotrack"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = eotrack(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn listing(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect()
}

#[test]
fn eot_on_single_object_keeps_one_id() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--scene", "S1", "-o", "s1.evs"]);
    ok(dir.path(), &["track", "--algo", "eot", "s1.evs", "-o", "tracks.csv"]);
    let tracks = read_tracks(fs::File::open(dir.path().join("tracks.csv")).unwrap()).unwrap();
    assert!(tracks.len() > 20);
    assert!(tracks.iter().all(|s| s.id == tracks[0].id));
}

#[test]
fn ground_truth_scored_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--scene", "S2", "-o", "s2.evs", "--gt", "gt.csv"]);
    let gt = read_ground_truth(fs::File::open(dir.path().join("gt.csv")).unwrap()).unwrap();
    write_tracks(&ground_truth_as_tracks(&gt), fs::File::create(dir.path().join("gt_tracks.csv")).unwrap()).unwrap();
    let out = ok(dir.path(), &["eval", "gt_tracks.csv", "gt.csv"]);
    let report = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 19);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(&cols[1..], ["1.000000"; 4], "{row}");
    }
}

#[test]
fn csv_binary_csv_round_trip_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--scene", "S5", "-o", "a.csv"]);
    ok(dir.path(), &["convert", "a.csv", "-o", "b.evs", "--width", "240", "--height", "180"]);
    ok(dir.path(), &["convert", "b.evs", "-o", "c.csv"]);
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert!(a.starts_with(b"t_us,x,y,p\n"));
    assert_eq!(a, fs::read(dir.path().join("c.csv")).unwrap());
}

#[test]
fn seed_defaults_to_seven_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let default = ok(p, &["synth", "--scene", "S4"]).stdout;
    assert_eq!(default, ok(p, &["synth", "--scene", "S4", "--seed", "7"]).stdout);
    assert_ne!(default, ok(p, &["synth", "--scene", "S4", "--seed", "8"]).stdout);

    fs::write(p.join("s6.evs"), ok(p, &["synth", "--scene", "S6"]).stdout).unwrap();
    let track = |seed: &str| ok(p, &["track", "--algo", "ceot", "s6.evs", "--seed", seed]).stdout;
    assert_eq!(ok(p, &["track", "--algo", "ceot", "s6.evs"]).stdout, track("7"));
    assert_ne!(track("7"), track("11"));
}

#[test]
fn data_goes_to_stdout_and_diagnostics_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--scene", "S1", "-o", "s1.evs"]);
    let before = listing(p);
    let quiet = ok(p, &["track", "--algo", "ceot", "s1.evs"]);
    let loud = ok(p, &["-v", "track", "--algo", "ceot", "s1.evs"]);
    assert_eq!(quiet.stdout, loud.stdout);
    assert!(quiet.stdout.starts_with(b"track_id,"));
    assert!(quiet.stderr.is_empty());
    assert!(String::from_utf8_lossy(&loud.stderr).contains("tick t="));
    let eot = ok(p, &["track", "--algo", "eot", "s1.evs", "--verbose"]);
    assert!(String::from_utf8_lossy(&eot.stderr).contains("frame ["));
    assert_eq!(listing(p), before, "a subcommand wrote an unnamed file");
}

#[test]
fn interp_reports_live_tracks() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--scene", "S5", "-o", "s5.evs"]);
    ok(p, &["track", "--algo", "eot", "s5.evs", "-o", "tracks.csv"]);
    let out = String::from_utf8(ok(p, &["interp", "tracks.csv", "--t", "500000"]).stdout).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "track_id,t_us,x,y,w,h");
    assert_eq!(lines.len(), 9);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(1) == Some("500000")));
    let late = String::from_utf8(ok(p, &["interp", "tracks.csv", "--t", "99000000"]).stdout).unwrap();
    assert_eq!(late.lines().count(), 1);
}

#[test]
fn default_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["--print-default-config"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(RunConfig::from_json(&text).unwrap(), RunConfig::default());
    fs::write(dir.path().join("cfg.json"), &text).unwrap();
    ok(dir.path(), &["synth", "--scene", "S1", "-o", "s1.evs"]);
    let with_cfg = ok(dir.path(), &["track", "--algo", "eot", "--config", "cfg.json", "s1.evs"]).stdout;
    assert_eq!(with_cfg, ok(dir.path(), &["track", "--algo", "eot", "s1.evs"]).stdout);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let code = |args: &[&str]| eotrack(p, args).status.code().unwrap();
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["track", "--algo", "kalman", "x.evs"]), 1);
    assert_eq!(code(&["synth", "--scene", "S9"]), 1);
    assert_eq!(code(&["--help"]), 0);

    assert_eq!(code(&["track", "--algo", "eot", "missing.evs"]), 2);
    fs::write(p.join("short.evs"), b"EVS0").unwrap();
    assert_eq!(code(&["track", "--algo", "eot", "short.evs"]), 2);
    fs::write(p.join("events.csv"), "t_us,x,y,p\n0,1,1,1\n").unwrap();
    assert_eq!(code(&["convert", "events.csv", "-o", "e.evs"]), 2);
    assert_eq!(code(&["convert", "events.csv", "-o", "e.evs", "--width", "4", "--height", "4"]), 0);

    ok(p, &["synth", "--scene", "S1", "-o", "s1.evs"]);
    fs::write(p.join("unknown.json"), r#"{"tracker": {}}"#).unwrap();
    assert_eq!(code(&["track", "--algo", "eot", "--config", "unknown.json", "s1.evs"]), 2);
    fs::write(p.join("invalid.json"), r#"{"ceot": {"alpha": 2.0}}"#).unwrap();
    assert_eq!(code(&["track", "--algo", "ceot", "--config", "invalid.json", "s1.evs"]), 2);
    fs::write(p.join("bad_tracks.csv"), "id,t\n1,2\n").unwrap();
    assert_eq!(code(&["interp", "bad_tracks.csv", "--t", "0"]), 2);
}
