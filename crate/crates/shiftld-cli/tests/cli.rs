//! End-to-end runs of the `shiftld` binary: exit codes, artifact shapes, and
//! reproducibility contracts.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shiftld"))
}

fn tmp(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("shiftld-test-{}-{name}", std::process::id()));
    p
}

fn write_config(name: &str, text: &str) -> PathBuf {
    let path = tmp(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const MARKOV: &str = "[measure]\nkind = markov\ntransition = 0.9 0.1 ; 0.5 0.5\n";

#[test]
fn hmc_example1_grid_shape_and_values() {
    let out_csv = tmp("ex1.csv");
    run_ok(&[
        "hmc",
        "--example",
        "1",
        "--alpha-min",
        "-1.2",
        "--alpha-max",
        "0",
        "--alpha-step",
        "0.02",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "alpha,rho,kappa,q");
    assert_eq!(lines.len(), 62, "header + 61 rows");
    // the α = −0.5 row carries the plotted value
    let row: Vec<f64> = lines[36]
        .split(',')
        .map(|s| {
            if s == "inf" {
                f64::INFINITY
            } else {
                s.parse().unwrap()
            }
        })
        .collect();
    assert!((row[0] + 0.5).abs() < 1e-12);
    assert!((row[3] - (-0.0303276)).abs() < 1e-3, "q(-0.5) = {}", row[3]);
    assert_eq!(row[2], f64::INFINITY, "kappa(-0.5) = +inf");
}

#[test]
fn hmc_positive_alpha_is_flagged_infinite() {
    let out = run_ok(&[
        "hmc",
        "--example",
        "1",
        "--alpha-min",
        "0.1",
        "--alpha-max",
        "0.5",
        "--alpha-step",
        "0.2",
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    for line in text.lines().skip(1) {
        assert!(line.ends_with(",inf"), "expected q = inf: {line}");
    }
}

#[test]
fn fr_check_markov_reversal_passes() {
    let cfg = write_config(
        "fr.ini",
        &format!("{MARKOV}[involution]\nkind = reversal\n"),
    );
    let report = tmp("fr.json");
    let out = run_ok(&[
        "fr-check",
        "--config",
        cfg.to_str().unwrap(),
        "--t",
        "8",
        "--alpha-min",
        "-2",
        "--alpha-max",
        "2",
        "--alpha-step",
        "1",
        "--out",
        report.to_str().unwrap(),
    ]);
    let j: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(j["gc_defect"].as_f64().unwrap() <= 1e-12);
    let footer: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(footer["status"], "ok");
}

#[test]
fn decoupling_reducible_chain_exits_2_with_violations() {
    let cfg = write_config(
        "red.ini",
        "[measure]\nkind = markov\ntransition = 1 0 ; 0 1\nstationary = 0.5, 0.5\n",
    );
    let report = tmp("red.json");
    let out = bin()
        .args([
            "decoupling",
            "--kind",
            "sld",
            "--tau",
            "0",
            "--t",
            "2",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let j: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(j["c_star"], "inf");
    assert!(!j["violations"].as_array().unwrap().is_empty());
    let footer: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(footer["status"], "error");
    assert!(footer["reason"].as_str().unwrap().contains("violating"));
}

#[test]
fn non_convergence_exits_3() {
    let cfg = write_config(
        "flat.ini",
        "[measure]\nkind = hidden-renewal\ngamma = linear 0.000000001\nepsilon = 0.000000001\n[observable]\nr = 1\nvalues = 1, 0\n",
    );
    let out = bin()
        .args(["pressure", "--config", cfg.to_str().unwrap(), "--t", "4"])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let footer: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(footer["reason"].as_str().unwrap().contains("truncation"));
}

#[test]
fn config_errors_exit_1_with_reason() {
    let cfg = write_config("bad.ini", "[measure]\nkind = bernoulli\np = 0.5, 0.6\n");
    let out = bin()
        .args(["pressure", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let footer: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(footer["reason"].as_str().unwrap().contains("sum"));

    let cfg = write_config("bad2.ini", "[measure]\nknid = bernoulli\n");
    let out = bin()
        .args(["pressure", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pressure_and_rate_csv_shapes() {
    let cfg = write_config(
        "press.ini",
        &format!("{MARKOV}[observable]\nr = 1\nvalues = 1, 0\n"),
    );
    let csv = tmp("press.csv");
    run_ok(&[
        "pressure",
        "--config",
        cfg.to_str().unwrap(),
        "--t",
        "8",
        "--alpha-min",
        "-1",
        "--alpha-max",
        "1",
        "--alpha-step",
        "0.5",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "alpha,q");
    assert_eq!(lines.len(), 6);
    // q(0) = 0 exactly
    assert!(lines[3].starts_with("1.0") || lines[3].contains(",0.0"));

    let rate_csv = tmp("rate.csv");
    run_ok(&[
        "rate",
        "--config",
        cfg.to_str().unwrap(),
        "--t",
        "8",
        "--alpha-min",
        "-4",
        "--alpha-max",
        "4",
        "--alpha-step",
        "0.02",
        "--out",
        rate_csv.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&rate_csv).unwrap();
    assert!(text.starts_with("s,I\n"));
    for line in text.lines().skip(1) {
        let i: f64 = line.split(',').nth(1).map(|s| s.parse().unwrap()).unwrap();
        assert!(i >= -1e-12, "rate function must be nonnegative: {line}");
    }
}

#[test]
fn chernoff_symmetric_pair_reports_half() {
    // P and P̂ = ΘP over a product-pair-free setup: two Bernoulli measures
    // swapped by the letter map give a symmetric e-curve
    let cfg = write_config(
        "cher.ini",
        "[measure]\nkind = bernoulli\np = 0.75, 0.25\n[hat_measure]\nkind = bernoulli\np = 0.25, 0.75\n",
    );
    let out_csv = tmp("cher.csv");
    let out = run_ok(&[
        "chernoff",
        "--config",
        cfg.to_str().unwrap(),
        "--t",
        "8",
        "--alpha-step",
        "0.05",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    let footer: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(footer["symmetric"], true);
    assert!((footer["minimizer"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn level3_sweep_csv() {
    let cfg = write_config(
        "lvl3.ini",
        &format!("{MARKOV}[q_measure]\nkind = uniform\n[involution]\nkind = reversal\n"),
    );
    let csv = tmp("lvl3.csv");
    run_ok(&[
        "level3",
        "--config",
        cfg.to_str().unwrap(),
        "--t-max",
        "6",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,h_rate,varsigma_rate,ent_rate");
    assert_eq!(lines.len(), 7);
}

#[test]
fn psi_check_reports_layout_and_bounds() {
    let cfg = write_config("psi.ini", MARKOV);
    let sweep = write_config("psi2.ini", &format!("{MARKOV}[sweep]\nn = 2\n"));
    let _ = cfg;
    let report = tmp("psi.json");
    run_ok(&[
        "psi-check",
        "--config",
        sweep.to_str().unwrap(),
        "--t",
        "6",
        "--tau",
        "0",
        "--out",
        report.to_str().unwrap(),
    ]);
    let j: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(j["n"], 2);
    assert_eq!(j["N"], 2);
    assert!(j["g_min"].as_f64().unwrap().is_finite());
    assert_eq!(j["multiplicity"], 1);
}

#[test]
fn probe_csv_and_reproducibility() {
    let cfg = write_config(
        "probe.ini",
        "[measure]\nkind = uniform\n[observable]\nr = 1\nvalues = 1, 0\n[probe]\na = 0.7\nb = 1.0\n",
    );
    let csv1 = tmp("probe1.csv");
    let csv2 = tmp("probe2.csv");
    for (csv, threads) in [(&csv1, "1"), (&csv2, "4")] {
        run_ok(&[
            "probe",
            "--config",
            cfg.to_str().unwrap(),
            "--t",
            "16",
            "--samples",
            "50000",
            "--seed",
            "42",
            "--threads",
            threads,
            "--alpha-min",
            "-6",
            "--alpha-max",
            "6",
            "--alpha-step",
            "0.05",
            "--out",
            csv.to_str().unwrap(),
        ]);
    }
    let a = std::fs::read(&csv1).unwrap();
    let b = std::fs::read(&csv2).unwrap();
    assert_eq!(
        a, b,
        "probe output must be byte-identical at any thread count"
    );
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("t,emp_rate,ref_rate,ci_low,ci_high\n"));
}

#[test]
fn hmc_golden_first_rows() {
    // frozen bytes: the emitted grid is a pure function of the preset
    let out = run_ok(&[
        "hmc",
        "--example",
        "1",
        "--alpha-min",
        "-1.2",
        "--alpha-max",
        "-1.18",
        "--alpha-step",
        "0.02",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text,
        "alpha,rho,kappa,q\n\
         -1.200000000000e0,9.826040742315e-1,inf,1.754901287768e-2\n\
         -1.180000000000e0,9.844241446258e-1,inf,1.569843351516e-2\n"
    );
}

#[test]
fn hmc_runs_are_byte_identical() {
    let a = run_ok(&[
        "hmc",
        "--example",
        "5",
        "--alpha-min",
        "-1",
        "--alpha-max",
        "1.4",
        "--alpha-step",
        "0.1",
    ]);
    let b = run_ok(&[
        "hmc",
        "--example",
        "5",
        "--alpha-min",
        "-1",
        "--alpha-max",
        "1.4",
        "--alpha-step",
        "0.1",
    ]);
    assert_eq!(a.stdout, b.stdout);
}
