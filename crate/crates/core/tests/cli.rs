use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use entconc::cli::{run, Command as Cmd, ConfigError, ExperimentConfig};

fn entconc(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entconc"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .filter(|(n, _)| n.ends_with(".csv"))
        .collect();
    files.sort();
    files
}

#[test]
fn every_command_is_deterministic_under_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    for cmd in ["concentrate", "repeater", "repeater-filtered", "bell-swap", "chsh", "delay-scan", "table1"] {
        let (a, b) = (tmp.path().join(format!("{cmd}-a")), tmp.path().join(format!("{cmd}-b")));
        let ra = entconc(&[cmd, "--seed", "42"], &a);
        let rb = entconc(&[cmd, "--seed", "42"], &b);
        assert!(ra.status.success(), "{cmd}: {}", String::from_utf8_lossy(&ra.stderr));
        assert!(rb.status.success());
        let (fa, fb) = (read_dir(&a), read_dir(&b));
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{cmd}");
    }
}

#[test]
fn seeds_change_sampled_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(entconc(&["chsh", "--seed", "1"], &a).status.success());
    assert!(entconc(&["chsh", "--seed", "2"], &b).status.success());
    assert_ne!(fs::read(a.join("counts.csv")).unwrap(), fs::read(b.join("counts.csv")).unwrap());
}

#[test]
fn csv_schema_and_line_endings() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    assert!(entconc(&["concentrate", "--seed", "3"], &out).status.success());
    let counts = fs::read_to_string(out.join("counts.csv")).unwrap();
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    for text in [&counts, &summary] {
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
    }
    assert_eq!(counts.lines().next().unwrap(), "setting_id,theta1,theta2,outcome,probability,counts");
    assert_eq!(counts.lines().count(), 1 + 16);
    assert_eq!(summary.lines().next().unwrap(), "S,sigma,visibility,fidelity,success_prob");
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row.len(), 5);
    for field in row {
        let mantissa = field.trim_start_matches('-').split('e').next().unwrap();
        let significant = mantissa.trim_start_matches(['0', '.']).chars().filter(char::is_ascii_digit).count();
        assert!(significant <= 12, "{field}");
        field.parse::<f64>().unwrap();
    }
}

#[test]
fn report_reparses_to_the_same_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let out = entconc(&["repeater-filtered", "--seed", "11", "--branch", "mp"], &first);
    assert!(out.status.success());
    let report = fs::read_to_string(first.join("report.txt")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), report);

    let cfg = ExperimentConfig::parse(&report).unwrap();
    assert_eq!(cfg.seed, 11);
    assert_eq!(cfg.branch.label(), "mp");

    // rerun from the report alone, into another directory
    let cfg_path = tmp.path().join("again.cfg");
    fs::write(&cfg_path, &report).unwrap();
    let second = tmp.path().join("second");
    let again = Command::new(env!("CARGO_BIN_EXE_entconc"))
        .args(["repeater-filtered", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&second)
        .output()
        .unwrap();
    assert!(again.status.success());
    assert_eq!(read_dir(&first), read_dir(&second));
}

#[test]
fn report_round_trip_in_process() {
    let cfg = ExperimentConfig::parse("windows = 2\ngamma = 0.7\nseed = 5\nscan_points = 11\n").unwrap();
    for cmd in [Cmd::Concentrate, Cmd::DelayScan, Cmd::Table1] {
        let first = run(cmd, &cfg).unwrap();
        let reparsed = ExperimentConfig::parse(&first.report).unwrap();
        assert_eq!(reparsed, cfg);
        assert_eq!(run(cmd, &reparsed).unwrap(), first);
    }
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, text) in [("range", "t_v = 1.5\n"), ("unknown", "colour = red\n"), ("syntax", "windows 2\n")] {
        let path = tmp.path().join(format!("{name}.cfg"));
        fs::write(&path, text).unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_entconc"))
            .args(["concentrate", "--config"])
            .arg(&path)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(1), "{name}");
        assert!(!out.stderr.is_empty());
    }
    let missing = Command::new(env!("CARGO_BIN_EXE_entconc"))
        .args(["concentrate", "--config", "/nonexistent/entconc.cfg"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let bad_flag = Command::new(env!("CARGO_BIN_EXE_entconc")).args(["concentrate", "--branch", "xx"]).output().unwrap();
    assert_eq!(bad_flag.status.code(), Some(1));
}

#[test]
fn impossible_branch_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("product.cfg");
    fs::write(&path, "alpha = 1.0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_entconc"))
        .args(["concentrate", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("impossible branch"));
}

#[test]
fn range_error_names_key() {
    match ExperimentConfig::parse("t_v = 1.5") {
        Err(ConfigError::Range { key, .. }) => assert_eq!(key, "t_v"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn windows_four_reports_pair_ratio() {
    let cfg = ExperimentConfig::parse("windows = 4").unwrap();
    let out = run(Cmd::Concentrate, &cfg).unwrap();
    let line = out.report.lines().find(|l| l.starts_with("# pair_a_ratio = ")).unwrap();
    let ratio: f64 = line.trim_start_matches("# pair_a_ratio = ").parse().unwrap();
    assert!((ratio - (0.98f64 / 0.73).powi(4)).abs() < 1e-10);
    assert!((ratio - 3.25).abs() < 0.005);
}

#[test]
fn table1_defaults() {
    let cfg = ExperimentConfig::default();
    let out = run(Cmd::Table1, &cfg).unwrap();
    let table = &out.files[0].1;
    let rows: Vec<Vec<f64>> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for (r, (pre, s)) in rows.iter().zip([(1.34, 2.58), (1.80, 2.43), (3.25, 2.42)]) {
        assert!((r[1] - pre).abs() < 0.005);
        assert_eq!(r[2], 1.0);
        assert!((r[4] - 2.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!((r[7] - s).abs() < 1e-9);
        // sampled S within four standard errors of the model
        assert!((r[10] - s).abs() < 4.0 * r[11], "{} +- {}", r[10], r[11]);
    }
}

#[test]
fn delay_scan_dip_after_sampling() {
    let cfg = ExperimentConfig::parse("gamma = 0.83\nseed = 1").unwrap();
    let out = run(Cmd::DelayScan, &cfg).unwrap();
    let dip = &out.files.iter().find(|(n, _)| n == "dip.csv").unwrap().1;
    let v: f64 = dip.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((v - 0.83).abs() <= 0.03, "{v}");
}

#[test]
fn bell_swap_with_two_windows() {
    let cfg = ExperimentConfig::parse("windows = 2\nideal = true").unwrap();
    let out = run(Cmd::BellSwap, &cfg).unwrap();
    let summary = &out.files.iter().find(|(n, _)| n == "summary.csv").unwrap().1;
    let fid: f64 = summary.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    let fractions = &out.files.iter().find(|(n, _)| n == "fractions.csv").unwrap().1;
    assert!(fractions.contains("input_a"));
    // closed form for the phase-corrected output, (a + b)^2 / 2(a^2 + b^2)
    let r = (0.98f64 / 0.73).powi(2);
    let (a, b) = (r / (1.0 + r), 1.0 / (1.0 + r));
    assert!((fid - 1.0 / (2.0 * (a * a + b * b))).abs() < 1e-9, "{fid}");
    assert!(fid < 0.98);
}
