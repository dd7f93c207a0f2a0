use std::f64::consts::TAU;
use std::path::Path;
use std::process::Command;

use cdd_core::cli::{apply_override, parse_config, parse_config_str, run, serialize_config};
use cdd_core::scenarios::{CddShift, Scenario, ScenarioConfig};
use cdd_core::Error;

fn parse(text: &str) -> cdd_core::Result<ScenarioConfig> {
    parse_config_str(text, Path::new("test.ini"))
}

fn config_error(text: &str) -> (usize, String) {
    match parse(text) {
        Err(Error::Config { line, msg, .. }) => (line, msg),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn defaults_round_trip() {
    let cfg = ScenarioConfig::default();
    let text = serialize_config(&cfg);
    assert_eq!(parse(&text).unwrap(), cfg);
}

#[test]
fn round_trip_with_custom_sensitivity() {
    let mut cfg = ScenarioConfig::default();
    for o in [
        "alpha=0.4",
        "t2rho=1.5ms",
        "tau=0.7ms",
        "n_ph=0.1",
        "contrast=0.2",
        "c=0.6",
        "drive.cdd_shift=1.9MHz",
    ] {
        apply_override(&mut cfg, o).unwrap();
    }
    assert_eq!(cfg.drive.cdd_shift, CddShift::Explicit(TAU * 1.9e6));
    assert_eq!(parse(&serialize_config(&cfg)).unwrap(), cfg);
}

#[test]
fn frequency_units_are_cycles() {
    let cfg = parse("[drive]\nomega1 = 2MHz\nomega2 = 150 kHz\n").unwrap();
    assert_eq!(cfg.drive.omega1, TAU * 2e6);
    assert_eq!(cfg.drive.omega2, TAU * 150e3);
    let cfg = parse("[drive]\nomega1 = 1e7 rad/s\n").unwrap();
    assert_eq!(cfg.drive.omega1, 1e7);
    let (line, msg) = config_error("[drive]\nomega1 = 2\n");
    assert_eq!(line, 2);
    assert!(msg.contains("unit"), "{msg}");
}

#[test]
fn times_and_lists() {
    let cfg = parse("[noise]\ntau_delta = 25us\n[run]\ntaus = 1us, 10 us\ndelta_omegas = 0.01, 0.02\nn_list = 2,4\nscenario = shift_scan\n").unwrap();
    assert_eq!(cfg.noise.tau_delta, 25e-6);
    assert_eq!(cfg.run.taus, vec![1e-6, 10e-6]);
    assert_eq!(cfg.run.n_list, vec![2, 4]);
    assert_eq!(cfg.scenario, Scenario::ShiftScan);
}

#[test]
fn correlation_out_of_range_names_bound() {
    let (line, msg) = config_error("# comment\n[noise]\nc = 1.2\n");
    assert_eq!(line, 3);
    assert!(msg.contains("|c| <= 1"), "{msg}");
}

#[test]
fn unknown_key_reports_line() {
    let (line, msg) = config_error("[drive]\nomega1 = 2MHz\n\nomega3 = 1MHz\n");
    assert_eq!(line, 4);
    assert!(msg.contains("omega3"), "{msg}");
    let full = parse("[drive]\nomega3 = 1MHz\n").unwrap_err().to_string();
    assert!(full.contains("test.ini") && full.contains('2'), "{full}");
}

#[test]
fn structural_errors() {
    assert_eq!(config_error("[drivez]\n").0, 1);
    assert_eq!(config_error("omega1 = 2MHz\n").0, 1);
    assert_eq!(config_error("[run]\nseed = 1\nseed = 2\n").0, 3);
    assert_eq!(config_error("[run]\nseed\n").0, 2);
    assert_eq!(config_error("[run]\neps_max = 0.6\n").0, 2);
    // cross-field check happens after the whole file is read
    let (line, msg) = config_error("[run]\ntaus = 1us\n");
    assert_eq!(line, 0);
    assert!(msg.contains("taus"), "{msg}");
}

#[test]
fn override_rules() {
    let mut cfg = ScenarioConfig::default();
    assert!(apply_override(&mut cfg, "omega1=3MHz").is_err(), "ambiguous bare key");
    apply_override(&mut cfg, "lindblad.omega1=3MHz").unwrap();
    assert_eq!(cfg.lindblad.omega1, TAU * 3e6);
    apply_override(&mut cfg, "seed=9").unwrap();
    assert_eq!(cfg.run.seed, 9);
    assert!(apply_override(&mut cfg, "nonsense=1").is_err());
    assert!(apply_override(&mut cfg, "seed").is_err());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ini");
    let m = missing.to_str().unwrap();
    assert_eq!(run(["cdd", "simulate", "pulse_scan", "--config", m]), 1);
    assert!(matches!(parse_config(&missing), Err(Error::ConfigIo { .. })));

    let bad = dir.path().join("bad.ini");
    std::fs::write(&bad, "[run]\neps_max = 0.6\n").unwrap();
    assert_eq!(
        run(["cdd", "simulate", "pulse_scan", "--config", bad.to_str().unwrap()]),
        1
    );
    assert_eq!(run(["cdd", "simulate", "no_such_scenario"]), 1);
    assert_eq!(run(["cdd", "--bogus-flag"]), 1);
    assert_eq!(run(["cdd", "shift", "2MHz", "0.2MHz", "1.5"]), 1);

    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    assert_eq!(
        run([
            "cdd",
            "simulate",
            "pulse_scan",
            "--out",
            o,
            "--override",
            "eps_points=5"
        ]),
        0
    );
    assert!(out.join("pulse_scan.csv").exists());
    assert!(out.join("summary.csv").exists());
}

#[test]
fn runtime_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // output directory path is occupied by a regular file
    let blocker = dir.path().join("taken");
    std::fs::write(&blocker, "x").unwrap();
    let code = run(["cdd", "simulate", "pulse_scan", "--out", blocker.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn binary_happy_path() {
    let exe = env!("CARGO_BIN_EXE_cdd");
    let out = Command::new(exe)
        .args(["shift", "2MHz", "0.2MHz", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let shift = text.lines().find(|l| l.starts_with("shift,")).unwrap();
    let mhz: f64 = shift.split(',').nth(2).unwrap().parse().unwrap();
    assert!((mhz - 0.02).abs() < 1e-9, "{mhz}");

    let out = Command::new(exe).arg("defaults").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(parse(&text).unwrap(), ScenarioConfig::default());

    let out = Command::new(exe)
        .args(["--workers", "2", "sensitivity"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4, "{text}");

    let out = Command::new(exe)
        .args(["simulate", "pulse_scan", "--override", "c=2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("|c| <= 1"));
}
