mod common;

use std::fs;
use std::path::{Path, PathBuf};

use common::fault_fixture;
use sfcm_core::cli::{main_with, EXIT_INPUT, EXIT_INTEGRITY, EXIT_OK, EXIT_VIOLATIONS, LOG_FILE, REPORT_FILE, SNAPSHOT_FILE};
use sfcm_core::event::{read_log, write_log};
use sfcm_core::report::RunReport;
use sfcm_core::ConstraintId;

struct Output {
    code: i32,
    out: String,
    err: String,
}

fn sfcm(args: &[&str]) -> Output {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("sfcm").chain(args.iter().copied());
    let code = main_with(argv, &mut out, &mut err);
    Output {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn run_into(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["run", "--out", out];
    args.extend_from_slice(extra);
    sfcm(&args)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_log_snapshot_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let result = run_into(tmp.path(), &[]);
    assert_eq!(result.code, EXIT_OK, "{}", result.err);
    assert!(result.out.contains("seed 42"));
    for file in [LOG_FILE, SNAPSHOT_FILE, REPORT_FILE] {
        assert!(tmp.path().join(file).is_file(), "{file}");
    }

    let log = read_log(fs::File::open(tmp.path().join(LOG_FILE)).map(std::io::BufReader::new).unwrap())
        .unwrap()
        .unwrap();
    let rebuilt = RunReport::from_log(&log).unwrap();
    let written = fs::read_to_string(tmp.path().join(REPORT_FILE)).unwrap();
    assert_eq!(written, rebuilt.to_json());
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run_into(a.path(), &["--seed", "7"]).code, EXIT_OK);
    assert_eq!(run_into(b.path(), &["--seed", "7"]).code, EXIT_OK);
    for file in [LOG_FILE, SNAPSHOT_FILE, REPORT_FILE] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn config_file_and_flags_are_applied() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("scenario.toml");
    fs::write(&config, "seed = 3\n[agents]\nworkflows = 2\n").unwrap();
    let out = tmp.path().join("out");
    let result = sfcm(&["run", "--config", path(&config), "--out", path(&out), "--limit", "1.5"]);
    assert_eq!(result.code, EXIT_OK, "{}", result.err);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(report["meta"]["seed"], 3);
    assert_eq!(report["workflows"].as_array().unwrap().len(), 2);
}

#[test]
fn bad_input_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent.toml");
    assert_eq!(sfcm(&["run", "--config", path(&missing)]).code, EXIT_INPUT);

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "no_such_key = 1\n").unwrap();
    let result = sfcm(&["run", "--config", path(&bad), "--out", path(tmp.path())]);
    assert_eq!(result.code, EXIT_INPUT);
    assert!(result.err.contains("no_such_key"), "{}", result.err);

    assert_eq!(sfcm(&["run", "--weights", "1,2"]).code, EXIT_INPUT);
    assert_eq!(sfcm(&["frobnicate"]).code, EXIT_INPUT);
    assert_eq!(sfcm(&["replay", path(&missing)]).code, EXIT_INPUT);
    assert_eq!(sfcm(&["validate", path(&missing)]).code, EXIT_INPUT);
    assert_eq!(sfcm(&["audit", path(&missing)]).code, EXIT_INPUT);
    assert_eq!(sfcm(&["--help"]).code, EXIT_OK);
}

#[test]
fn clean_log_replays_and_validates() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_into(tmp.path(), &[]).code, EXIT_OK);
    let log = tmp.path().join(LOG_FILE);

    let replay = sfcm(&["replay", path(&log)]);
    assert_eq!(replay.code, EXIT_OK, "{}", replay.err);
    assert!(replay.out.contains("0 violations"));

    let validate = sfcm(&["validate", path(&log)]);
    assert_eq!(validate.code, EXIT_OK);
    assert!(validate.out.is_empty());
}

fn tampered(dir: &Path, seq: usize) -> PathBuf {
    let log = dir.join(LOG_FILE);
    let text = fs::read_to_string(&log).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let line = &mut lines[seq];
    let at = line.find("\"tick\":").expect("tick field") + "\"tick\":".len();
    let digit = line.as_bytes()[at];
    let flipped = if digit == b'9' { b'8' } else { digit + 1 };
    line.replace_range(at..at + 1, std::str::from_utf8(&[flipped]).unwrap());
    let out = dir.join("tampered.jsonl");
    fs::write(&out, lines.join("\n") + "\n").unwrap();
    out
}

#[test]
fn a_flipped_byte_is_reported_at_its_record() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_into(tmp.path(), &[]).code, EXIT_OK);
    for seq in [1, 40, 100] {
        let forged = tampered(tmp.path(), seq);
        for command in ["replay", "validate"] {
            let result = sfcm(&[command, path(&forged)]);
            assert_eq!(result.code, EXIT_INTEGRITY, "{command} seq {seq}");
            assert!(result.err.contains(&format!("seq {seq}")), "{}", result.err);
        }
    }
}

#[test]
fn undecodable_line_is_an_integrity_failure() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_into(tmp.path(), &[]).code, EXIT_OK);
    let log = tmp.path().join(LOG_FILE);
    let mut text = fs::read_to_string(&log).unwrap();
    text.push_str("{\"seq\": oops}\n");
    fs::write(&log, text).unwrap();
    let result = sfcm(&["replay", path(&log)]);
    assert_eq!(result.code, EXIT_INTEGRITY);
    assert!(result.err.contains("undecodable"));
}

#[test]
fn fault_logs_exit_5_with_one_line_per_violation() {
    let tmp = tempfile::tempdir().unwrap();
    for constraint in ConstraintId::ALL {
        let engine = fault_fixture(constraint);
        let log = tmp.path().join(format!("{constraint}.jsonl"));
        write_log(fs::File::create(&log).unwrap(), engine.log()).unwrap();

        let result = sfcm(&["validate", path(&log)]);
        assert_eq!(result.code, EXIT_VIOLATIONS, "{constraint}");
        let lines: Vec<serde_json::Value> = result.out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 1, "{constraint}: {}", result.out);
        assert_eq!(lines[0]["constraint"], constraint.to_string());
        assert!(lines[0]["measured"].is_object());

        assert_eq!(sfcm(&["replay", path(&log)]).code, EXIT_VIOLATIONS);
    }
}

#[test]
fn audit_prints_claims_and_scores() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_into(tmp.path(), &[]).code, EXIT_OK);
    let log = tmp.path().join(LOG_FILE);

    let result = sfcm(&["audit", path(&log), "--suspicion-rate", "0"]);
    assert_eq!(result.code, EXIT_OK, "{}", result.err);
    let rows: Vec<serde_json::Value> = result.out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let claims: Vec<_> = rows.iter().filter_map(|r| r.get("suspicion")).collect();
    assert!(!claims.is_empty());
    assert!(claims.iter().all(|c| c["flagged"] == false));
    assert!(rows.iter().any(|r| r.get("score").is_some()));
    assert!(result.err.starts_with("0 of"));

    // A rate far above any ratio flags every claim.
    let result = sfcm(&["audit", path(&log), "--suspicion-rate", "1000"]);
    let flagged = result
        .out
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .filter(|r| r["suspicion"]["flagged"] == true)
        .count();
    assert_eq!(flagged, claims.len());
}

#[test]
fn sweep_writes_one_directory_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let result = run_into(tmp.path(), &["--seed", "10", "--sweep", "3"]);
    assert_eq!(result.code, EXIT_OK, "{}", result.err);
    for seed in 10..13 {
        let dir = tmp.path().join(format!("seed-{seed}"));
        assert!(dir.join(LOG_FILE).is_file(), "{}", dir.display());
    }
    assert_eq!(result.out.lines().count(), 3);

    // A sweep member matches a single run with the same seed.
    let single = tempfile::tempdir().unwrap();
    assert_eq!(run_into(single.path(), &["--seed", "11"]).code, EXIT_OK);
    assert_eq!(
        fs::read(single.path().join(LOG_FILE)).unwrap(),
        fs::read(tmp.path().join("seed-11").join(LOG_FILE)).unwrap()
    );
}

#[test]
fn binary_exit_status_matches_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_sfcm");
    let status = std::process::Command::new(bin)
        .args(["run", "--out", path(tmp.path()), "--seed", "2"])
        .env("SFCM_LOG_LEVEL", "error")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_OK));

    let forged = tampered(tmp.path(), 3);
    let status = std::process::Command::new(bin).args(["validate", path(&forged)]).output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_INTEGRITY));
}

#[test]
fn shipped_config_spells_out_the_defaults() {
    let shipped = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml");
    let config = sfcm_core::config::ScenarioConfig::load(Path::new(shipped)).unwrap();
    assert_eq!(config, sfcm_core::config::ScenarioConfig::default());
}
