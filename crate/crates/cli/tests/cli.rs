use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use drc_core::hadamard::{verify_certificates, CertificateKind};
use drc_core::io::{parse_matrix_csv, write_xyz, Report};
use drc_core::matrix::Spectrum;
use drc_core::protein::random_cloud;

fn drc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drc")).args(args).output().expect("run drc")
}

fn report(out: &Output) -> Report {
    Report::parse(&String::from_utf8_lossy(&out.stdout)).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn correlation_completion() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.csv");
    fs::write(&input, "# symmetric\n1,?,?\n?,1,?\n?,?,1\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = drc(&["complete", "correlation", path(&input), "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out).get("status"), Some("solved"));
    assert_eq!(report(&out).get("seed"), Some("0"));
    let m = parse_matrix_csv(&fs::read_to_string(out_dir.join("completed.csv")).unwrap()).unwrap();
    for i in 0..3 {
        assert!((m[(i, i)] - 1.0).abs() < 1e-8);
    }
    assert!(Spectrum::of(&m).unwrap().min() >= -1e-8);
    assert_eq!(fs::read_to_string(out_dir.join("report.txt")).unwrap(), String::from_utf8_lossy(&out.stdout));
}

#[test]
fn doubly_stochastic_completion() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.csv");
    fs::write(&input, "0.3,?\n?,?\n").unwrap();
    let out = drc(&["complete", "doubly-stochastic", path(&input), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let m = parse_matrix_csv(&fs::read_to_string(dir.path().join("completed.csv")).unwrap()).unwrap();
    let expected = [[0.3, 0.7], [0.7, 0.3]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((m[(i, j)] - expected[i][j]).abs() < 1e-6);
        }
    }
}

#[test]
fn min_rank_report_and_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("r.csv");
    fs::write(&input, "1,2\n2,?\n").unwrap();
    let out = drc(&["complete", "min-rank", path(&input), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("min_rank=1"));
    let ladder = fs::read_to_string(dir.path().join("rank_ladder.csv")).unwrap();
    assert_eq!(ladder, "rank,solved\n0,false\n1,true\n");
}

#[test]
fn unsolved_run_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("p.csv");
    // A known negative diagonal entry makes the PSD completion infeasible.
    fs::write(&input, "# symmetric\n-1,?\n?,1\n").unwrap();
    let out = drc(&["complete", "psd", path(&input), "--max-iter", "50"]);
    assert_eq!(out.status.code(), Some(2));
    assert_ne!(report(&out).get("status"), Some("solved"));
}

#[test]
fn input_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n3\n").unwrap();
    for args in [
        vec!["complete", "psd", path(&bad)],
        vec!["complete", "nope", path(&bad)],
        vec!["complete", "psd", "/definitely/missing.csv"],
        vec!["protein", path(&bad)],
        vec!["hadamard", "plain", "--order", "4", "--formulation", "c9"],
        vec!["hadamard", "plain"],
        vec!["frobnicate"],
    ] {
        let out = drc(&args);
        assert_eq!(out.status.code(), Some(3), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(drc(&["--help"]).status.code(), Some(0));
}

#[test]
fn protein_points_and_matrix_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = random_cloud(12, 10.0, 4);
    let xyz = dir.path().join("cloud.xyz");
    fs::write(&xyz, write_xyz(&cloud)).unwrap();
    let out_dir = dir.path().join("out");
    let out = drc(&["protein", path(&xyz), "--cutoff", "9", "--iters", "2000", "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let rmse: f64 = r.get("rmse").unwrap().parse().unwrap();
    let max: f64 = r.get("max_error").unwrap().parse().unwrap();
    assert!(rmse <= max);
    assert!(r.get("relative_error_db").is_some());
    assert!(out_dir.join("points.xyz").exists());

    let completed = fs::read_to_string(out_dir.join("completed.csv")).unwrap();
    let matrix = dir.path().join("d.csv");
    let mut text = String::from("# symmetric\n");
    for (i, line) in completed.lines().enumerate() {
        let cells: Vec<&str> = line.split(',').enumerate().map(|(j, c)| if (i + j) % 5 == 1 && i != j { "?" } else { c }).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    // Hide a symmetric pattern: (i + j) % 5 is symmetric in i and j.
    fs::write(&matrix, text).unwrap();
    let out = drc(&["protein", path(&matrix), "--iters", "200"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!(r.get("rmse").is_none() && r.get("max_error").is_none());
    assert!(r.get("relative_error_db").is_some());
}

#[test]
fn protein_single_block_two_phase_matches_default() {
    let dir = tempfile::tempdir().unwrap();
    let xyz = dir.path().join("cloud.xyz");
    fs::write(&xyz, write_xyz(&random_cloud(10, 10.0, 8))).unwrap();
    let plain = drc(&["protein", path(&xyz), "--iters", "300", "--seed", "5", "--cutoff", "8"]);
    let two = drc(&["protein", path(&xyz), "--iters", "300", "--seed", "5", "--cutoff", "8", "--two-phase", "--blocks", "1"]);
    assert_eq!(plain.status.code(), Some(0));
    assert_eq!(plain.stdout, two.stdout);
}

#[test]
fn hadamard_plain_order_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = drc(&["hadamard", "plain", "--order", "2", "--restarts", "1", "--seed", "3", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let h = parse_matrix_csv(&fs::read_to_string(dir.path().join("solution_000.csv")).unwrap()).unwrap();
    assert!(verify_certificates(&h, CertificateKind::Hadamard).unwrap());
    let hist = fs::read_to_string(dir.path().join("histogram.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some("bin_lo,bin_hi,count"));
    assert_eq!(hist.lines().count(), 2);
}

#[test]
fn hadamard_order_twelve_c2_finds_nothing() {
    let out = drc(&["hadamard", "plain", "--order", "12", "--formulation", "c2", "--restarts", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&out).get("solved"), Some("0"));
}

#[test]
fn skew_order_twelve() {
    let out = drc(&["hadamard", "skew", "--order", "12", "--formulation", "c3", "--restarts", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let solved: usize = report(&out).get("solved").unwrap().parse().unwrap();
    assert!(solved >= 4);
}
