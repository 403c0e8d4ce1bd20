use std::fs;

use bulksurf_cli::commands::{self, Axis, CliError, EXIT_INVALID, EXIT_OK, EXIT_SOLVER};
use bulksurf_cli::config::parse_config_str;
use bulksurf_cli::presets::InitialPreset;
use bulksurf_cli::RunConfig;
use bulksurf_core::diagnostics::{DiagError, CSV_HEADER};

fn small(extra: &str) -> RunConfig {
    parse_config_str(&format!("potential = regular\nmesh_rings = 4\nmesh_sectors = 16\nh = 1e-3\nt_final = 4e-3\n{extra}"))
        .unwrap()
}

#[test]
fn stationary_run_has_constant_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("");
    assert_eq!(commands::cmd_run(&cfg, dir.path()), EXIT_OK);
    let csv = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    // every column except n, t and the iteration count is constant
    for col in 2..rows[0].len() - 1 {
        assert!(rows.iter().all(|r| r[col] == rows[0][col]), "column {col}");
    }
    let ck = fs::read_to_string(dir.path().join("checkpoints.txt")).unwrap();
    assert_eq!(ck.lines().filter(|l| l.starts_with("state")).count(), 5);
}

#[test]
fn invalid_mean_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("initial = constant(1)\n");
    cfg.potential = "obstacle".parse().unwrap();
    cfg.potential_bdry = cfg.potential;
    assert_eq!(commands::cmd_run(&cfg, dir.path()), EXIT_INVALID);
    assert!(!dir.path().join("diagnostics.csv").exists());
}

#[test]
fn guard_is_fatal_only_in_strict_mode() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("initial = radial-bump(0.3, 0.5)\n");
    cfg.h = 0.2;
    cfg.t_final = 0.4;
    cfg.strict_guard = true;
    assert_eq!(commands::cmd_run(&cfg, dir.path()), EXIT_INVALID);
    cfg.strict_guard = false;
    let s = commands::setup(&cfg).unwrap();
    let out = commands::execute_run(&cfg, &s, dir.path()).unwrap();
    assert_eq!(out.warnings.len(), 1);
    assert_eq!(out.trajectory.len(), 3);
}

#[test]
fn solver_failure_writes_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("initial = random(0.5, 3)\nnewton_max = 1\nnewton_tol = 1e-30\n");
    assert_eq!(commands::cmd_run(&cfg, dir.path()), EXIT_SOLVER);
    let csv = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "header and the initial state");
    assert!(dir.path().join("checkpoints.txt").exists());
}

#[test]
fn contdep_identical_configs_give_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("initial = radial-bump(0.4, 0.5)\n");
    let rep = commands::contdep(&cfg, &cfg, dir.path()).unwrap();
    assert_eq!((rep.lhs, rep.rhs), (0.0, 0.0));
    assert_eq!(commands::cmd_contdep(&cfg, &cfg, dir.path()), EXIT_OK);
}

#[test]
fn contdep_rejects_mean_shift() {
    let dir = tempfile::tempdir().unwrap();
    let a = small("initial = radial-bump(0.4, 0.5)\n");
    let mut b = a.clone();
    b.perturb = Some(InitialPreset::Constant(1e-3));
    let err = commands::contdep(&a, &b, dir.path()).unwrap_err();
    assert!(matches!(err, CliError::Diag(DiagError::MeanMismatch { .. })), "{err}");
    assert_eq!(commands::cmd_contdep(&a, &b, dir.path()), EXIT_INVALID);
    // a zero-mean perturbation is accepted
    b.perturb = Some(InitialPreset::Mode { a: 1e-2, k: 1 });
    assert_eq!(commands::cmd_contdep(&a, &b, dir.path()), EXIT_OK);
}

#[test]
fn stationary_h_sweep_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("");
    cfg.t_final = 8e-3;
    let table = commands::sweep(&cfg, Axis::H, &[4e-3, 2e-3, 1e-3], 2, dir.path()).unwrap();
    assert!(table.rows.iter().all(|r| r.error.is_none()));
    assert_eq!(table.sup_distances(), vec![Some(0.0), Some(0.0)]);
    let text = table.render();
    assert_eq!(text.matches("exact").count(), 2, "{text}");
    for k in 0..3 {
        assert!(dir.path().join(format!("h_{k}/diagnostics.csv")).exists());
    }
    assert!(dir.path().join("sweep_h.csv").exists());
}

#[test]
fn sweep_validates_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("");
    assert!(matches!(commands::sweep(&cfg, Axis::Eps, &[0.4, 0.2], 1, dir.path()), Err(CliError::Usage(_))));
    assert!(matches!(commands::sweep(&cfg, Axis::Eps, &[0.4, 0.4, 0.1], 1, dir.path()), Err(CliError::Usage(_))));
}

#[test]
fn sweep_records_member_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("initial = radial-bump(0.3, 0.5)\n");
    // tau = 1.5 fails the range check; the table is still produced
    let table = commands::sweep(&cfg, Axis::Visc, &[1.5, 0.2, 0.1], 1, dir.path()).unwrap();
    assert!(table.rows[0].error.is_some());
    assert!(table.rows[1].error.is_none() && table.rows[1].distance.is_some());
}

#[test]
fn selftest_passes_and_detects_corrupt_mesh() {
    assert_eq!(bulksurf_cli::selftest::cmd_selftest(None), EXIT_OK);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mesh");
    fs::write(&bad, "vertices 3\n0 0\n1 0\n").unwrap();
    let results = bulksurf_cli::selftest::run_selftest(Some(&bad));
    let fem = results.iter().find(|r| r.name == "diskfem").unwrap();
    assert!(!fem.passed);
    assert!(results.iter().filter(|r| r.name != "diskfem").all(|r| r.passed));
    assert_eq!(bulksurf_cli::selftest::cmd_selftest(Some(&bad)), 1);
}

#[test]
fn mesh_round_trips_through_text() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("disk.mesh");
    let spec = bulksurf_cli::MeshSpec::Disk { rings: 3, sectors: 12 };
    assert_eq!(commands::cmd_mesh_info(&spec, Some(&path)), EXIT_OK);
    let a = commands::load_mesh(&spec).unwrap();
    let b = commands::load_mesh(&bulksurf_cli::MeshSpec::File(path)).unwrap();
    assert_eq!(a, b);
}
