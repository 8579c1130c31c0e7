//! End-to-end runs of the `kryrec` binary: generate a sequence directory,
//! re-solve it, and compare solvers with CSV output and exit codes.

use std::path::Path;
use std::process::Command;

fn kryrec() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kryrec"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn generate_then_compare_from_the_dumped_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let seq_dir = dir.path().join("seq");
    let gen_cfg = write_config(
        dir.path(),
        "gen.cfg",
        "problem.kind = poisson\n\
         problem.nx = 12\n\
         problem.ny = 12\n\
         problem.bc = periodic_x\n\
         sequence.kind = fractional_step\n\
         sequence.steps = 4\n\
         sequence.dt = 0.002\n\
         sequence.nu = 0.02\n\
         sequence.perturbation = 0.4\n\
         seed = 3\n",
    );
    let out = kryrec()
        .args(["generate", "--config"])
        .arg(&gen_cfg)
        .arg("--out")
        .arg(&seq_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "generate failed: {}", String::from_utf8_lossy(&out.stderr));
    assert!(seq_dir.join("matrix.stencil").is_file());
    assert!(seq_dir.join("b_0000.vec").is_file());
    assert!(seq_dir.join("b_0003.vec").is_file());
    assert!(seq_dir.join("meta").is_file());
    let meta = std::fs::read_to_string(seq_dir.join("meta")).unwrap();
    assert!(meta.contains("generator = fractional_step"));
    assert!(meta.contains("seed = 3"));

    // compare over the dumped systems
    let out_dir = dir.path().join("reports");
    let cmp_cfg = write_config(
        dir.path(),
        "cmp.cfg",
        &format!(
            "problem.kind = sequence_dir\n\
             problem.path = {}\n\
             solvers = gmres,bicgstab,rgcrot,hybrid\n\
             gmres.m = 12\n\
             rgcrot.m = 8\n\
             rgcrot.k = 10\n\
             hybrid.n_switch = 2\n\
             solver.tol = 1e-8\n\
             solver.tol_mode = relative\n\
             solver.max_matvecs = 100000\n",
            seq_dir.display()
        ),
    );
    let out = kryrec()
        .args(["compare", "--config"])
        .arg(&cmp_cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "compare failed: {}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4);
    for label in ["gmres12", "bicgstab", "rgcrot8x10", "hybrid2_8x10"] {
        assert!(summary.contains(label), "summary missing {label}:\n{summary}");
        assert!(out_dir.join(format!("history_{label}.csv")).is_file());
        assert!(out_dir.join(format!("trace_{label}.csv")).is_file());
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("reports written"));
}

#[test]
fn solve_runs_only_the_first_solver() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("solo");
    let cfg = write_config(
        dir.path(),
        "solve.cfg",
        &format!(
            "problem.kind = convection_diffusion\n\
             problem.nx = 10\n\
             problem.ny = 10\n\
             problem.peclet = 3\n\
             sequence.steps = 3\n\
             solvers = rgcrot,gmres\n\
             rgcrot.m = 6\n\
             rgcrot.k = 8\n\
             solver.max_matvecs = 100000\n\
             out = {}\n",
            out_dir.display()
        ),
    );
    let out = kryrec().args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("history_rgcrot6x8.csv").is_file());
    assert!(!out_dir.join("history_gmres30.csv").exists());
}

#[test]
fn nonconverged_run_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "hard.cfg",
        &format!(
            "problem.kind = poisson\n\
             problem.nx = 24\n\
             problem.ny = 24\n\
             sequence.steps = 2\n\
             solvers = gmres\n\
             gmres.m = 4\n\
             solver.tol = 1e-12\n\
             solver.max_matvecs = 12\n\
             out = {}\n",
            dir.path().join("o").display()
        ),
    );
    let out = kryrec().args(["compare", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success(), "a capped run must exit nonzero");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_config_reports_error_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "problem.kind = warp_drive\n");
    let out = kryrec().args(["compare", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("warp_drive"), "stderr: {err}");
}

#[test]
fn seed_override_changes_the_generated_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "gen.cfg",
        "problem.kind = poisson\n\
         problem.nx = 8\n\
         problem.ny = 8\n\
         sequence.kind = perturbed_rhs\n\
         sequence.steps = 2\n\
         sequence.amplitude = 0.5\n\
         sequence.jitter = 0.5\n\
         seed = 1\n",
    );
    let (d1, d2, d3) = (
        dir.path().join("s1"),
        dir.path().join("s2"),
        dir.path().join("s3"),
    );
    for (out_dir, seed) in [(&d1, "1"), (&d2, "2"), (&d3, "1")] {
        let out = kryrec()
            .args(["generate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out_dir)
            .args(["--seed", seed])
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let b1 = std::fs::read_to_string(d1.join("b_0001.vec")).unwrap();
    let b2 = std::fs::read_to_string(d2.join("b_0001.vec")).unwrap();
    let b3 = std::fs::read_to_string(d3.join("b_0001.vec")).unwrap();
    assert_ne!(b1, b2, "different seeds must differ");
    assert_eq!(b1, b3, "same seed must reproduce bit-identical output");
}
