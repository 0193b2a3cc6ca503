use cgolab::harness::{cmd_quasimode, cmd_reconstruct, cmd_verify, GridDump, RunConfig};
use cgolab::Error;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cgolab"))
}

const SMALL: &str = "seed = 3\n[grid]\nh = 0.0625\ncells = 16\nmodes = 40\n[reconstruct]\ny0_radius = 0.3\ny0_spacing = 0.3\nlambda_half = 1\n";

fn small(out: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::from_toml(SMALL).unwrap();
    cfg.out = out.display().to_string();
    cfg
}

#[test]
fn verify_passes_with_enough_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.out = dir.path().display().to_string();
    let rep = cmd_verify(&cfg).unwrap();
    let failed: Vec<_> = rep.checks.iter().filter(|c| !c.passed).collect();
    assert!(failed.is_empty(), "{failed:#?}");
    assert!(rep.checks.len() >= 20);
    let csv = std::fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert_eq!(csv.lines().count(), rep.checks.len() + 1);
}

#[test]
fn quasimode_report_and_lambda_growth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let mut big = RunConfig::default();
    big.out = cfg.out.clone();
    let r0 = cmd_quasimode(&big, 20.0, 1.0, 0.0).unwrap();
    assert!((r0.varsigma - 401f64.sqrt()).abs() < 1e-12);
    assert!(r0.relative_residual > 0.0 && r0.relative_residual < 1.0);
    let r1 = cmd_quasimode(&big, 20.0, 1.0, 1.0).unwrap();
    let sigma = 5f64.sqrt() * 2.0;
    assert!(r1.l4_norm / r0.l4_norm <= sigma.exp());
    let dump = GridDump::read_from(&mut std::fs::File::open(dir.path().join("quasimode.bin")).unwrap()).unwrap();
    assert_eq!(dump.name, "quasimode");
    assert_eq!(dump.data.len() as u64, dump.dims.iter().product::<u64>());
}

#[test]
fn inadmissible_quasimode_is_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    assert!(matches!(cmd_quasimode(&cfg, 1.0, 1.0, 2.0), Err(Error::Domain(_))));
}

#[test]
fn zero_coefficient_reconstructs_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&dir.path().join("nested/out"));
    cfg.reconstruct.amplitude = 0.0;
    let r = cmd_reconstruct(&cfg, 3.0, 0.0).unwrap();
    assert_eq!(r.metrics.failed, 0);
    assert!(r.metrics.l2_error <= 1e-12, "{}", r.metrics.l2_error);
    for name in ["c_true.bin", "c_rec.bin", "fourier_slice.bin"] {
        assert!(dir.path().join("nested/out").join(name).exists(), "{name}");
    }
}

#[test]
fn unwritable_output_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    std::fs::write(&file, b"x").unwrap();
    let cfg = small(&file.join("out"));
    assert!(matches!(cmd_quasimode(&cfg, 3.0, 1.0, 0.0), Err(Error::Io(_))));
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[grid]\nh = -1.0\n").unwrap();
    let o = bin().args(["--config", bad.to_str().unwrap(), "verify"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.h"));

    let good = dir.path().join("small.toml");
    std::fs::write(&good, SMALL).unwrap();
    let out = dir.path().join("o");
    let o = bin()
        .args(["--config", good.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(["quasimode", "--k", "1", "--tau", "1", "--lambda", "2"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));

    let o = bin()
        .args(["--config", good.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "2"])
        .args(["quasimode", "--k", "3"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for key in ["varsigma", "relative_residual", "l4_norm", "l4_ratio"] {
        assert!(text.contains(key), "{text}");
    }
}

#[test]
fn cli_sweep_writes_documented_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.toml");
    std::fs::write(&cfg_path, format!("{SMALL}[sweep]\nk = [3.0]\neps = [0.0]\ntiming = false\n")).unwrap();
    let out = dir.path().join("sweep");
    let o = bin()
        .args(["--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "sweep"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,eps,case,tau,lambda_window,l2_error,wall_ms"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 7);
    assert_eq!(row[2], "1");
    assert_eq!(row[6], "0");
    assert!(out.join("sweep.dat").exists());
    assert!(std::fs::read_to_string(out.join("sweep.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
