//! Black-box tests of the binary surface: exit codes, file layout, exact CSV
//! headers, and bit-for-bit reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const ENERGY_HEADER: &str = "t,e_mix,e_bulk,e_kin,e_el,e_lyap,e_tot,d_cross,d_relax,d_qdiff,\
                             d_visc,d_cdiff,d_peterlin,r_remainder,residual";
const TWIN_HEADER: &str = "t,e_mix_rel,e_bulk_rel,e_kin_rel,e_el_rel,e_rel_total,d_rel_total,g_raw,B";
const SWEEP_HEADER: &str = "eps,E0,Esup,ratio,chat,slope";

fn vpsep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vpsep"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    let body = format!(
        "[grid]\nnx = 32\nny = 32\n\n[scheme]\ndt = 1e-3\nt_end = 0.01\n\n\
         [output]\ndir = {:?}\n\n{extra}",
        dir.join("out").display().to_string()
    );
    fs::write(&path, body).expect("config written");
    path
}

fn first_line(path: &Path) -> String {
    let text = fs::read_to_string(path).expect("file readable");
    text.lines().next().expect("nonempty").to_string()
}

#[test]
fn run_writes_outputs_and_is_bit_reproducible() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg = small_config(tmp.path(), "");
    let out = vpsep(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let out_dir = tmp.path().join("out");
    let energy = out_dir.join("energy.csv");
    assert_eq!(first_line(&energy), ENERGY_HEADER);
    assert!(out_dir.join("manifest.toml").exists());
    let manifest = fs::read_to_string(out_dir.join("manifest.toml")).expect("manifest");
    assert!(manifest.contains("version ="));
    assert!(manifest.contains("[grid]"));

    // identical invocation into a second directory must reproduce every byte
    let first = fs::read(&energy).expect("energy bytes");
    let tmp2 = tempfile::tempdir().expect("tempdir");
    let out2 = vpsep(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp2.path().to_str().unwrap(),
    ]);
    assert_eq!(out2.status.code(), Some(0));
    let second = fs::read(tmp2.path().join("energy.csv")).expect("energy bytes");
    assert_eq!(first, second, "re-run is not bit-identical");
}

#[test]
fn run_with_snapshots_round_trips() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg = tmp.path().join("snap.toml");
    fs::write(
        &cfg,
        format!(
            "[grid]\nnx = 32\nny = 32\n\n[scheme]\ndt = 1e-3\nt_end = 0.005\n\n\
             [output]\ndir = {:?}\nsnapshots = true\n",
            tmp.path().join("out").display().to_string()
        ),
    )
    .expect("config written");
    let out = vpsep(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let final_dir = tmp.path().join("out").join("final");
    let phi = fs::read(final_dir.join("phi.vpsf")).expect("snapshot exists");
    assert_eq!(&phi[..4], b"VPSF", "snapshot magic");
    assert!(final_dir.join("state.json").exists());
}

#[test]
fn twin_eps_zero_reports_zero_relative_energy() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg = small_config(tmp.path(), "");
    let out = vpsep(&["twin", "--config", cfg.to_str().unwrap(), "--eps", "0"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("out").join("twin.csv")).expect("twin.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), TWIN_HEADER);
    let mut rows = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 9, "row arity: {line}");
        // e_mix_rel .. e_rel_total are exactly zero for identical twins
        for c in &cols[1..=5] {
            assert_eq!(c.parse::<f64>().unwrap(), 0.0, "nonzero relative energy: {line}");
        }
        rows += 1;
    }
    assert!(rows >= 2, "expected at least initial and final samples");
}

#[test]
fn sweep_writes_summary_rows() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg = small_config(
        tmp.path(),
        "[experiment]\namplitudes = [1e-2, 1e-3]\n",
    );
    let out = vpsep(&["sweep", "--config", cfg.to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("out").join("sweep.csv")).expect("sweep.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], SWEEP_HEADER);
    assert_eq!(lines.len(), 3, "header plus one row per amplitude");
    for row in &lines[1..] {
        assert_eq!(row.split(',').count(), 6);
    }
}

#[test]
fn validate_passes_for_defaults() {
    let out = vpsep(&["validate"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("PASS"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn config_errors_exit_two() {
    // missing file
    let out = vpsep(&["run", "--config", "/nonexistent/nope.toml"]);
    assert_eq!(out.status.code(), Some(2));

    let tmp = tempfile::tempdir().expect("tempdir");
    // unknown key
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[scheme]\nddt = 1e-3\n").unwrap();
    let out = vpsep(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    // invalid value
    fs::write(&bad, "[scheme]\nt_end = -1.0\n").unwrap();
    let out = vpsep(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // violated assumptions without test_mode
    fs::write(&bad, "[model.coefficients.n]\nconstant = 0.0\n").unwrap();
    let out = vpsep(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_abort_exits_three_with_diagnostic() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out_dir = tmp.path().join("out");
    let cfg = tmp.path().join("blow.toml");
    // concave potential (backward diffusion) only admissible in test mode
    fs::write(
        &cfg,
        format!(
            "[grid]\nnx = 32\nny = 32\n\n[scheme]\ndt = 1.0\nt_end = 5.0\n\n\
             [model]\ntest_mode = true\n\n[model.potential]\nfamily = \"custom\"\n\
             coeffs = [0.0, 0.0, -50.0]\n\n[output]\ndir = {:?}\n",
            out_dir.display().to_string()
        ),
    )
    .unwrap();
    let out = vpsep(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let diag = fs::read_to_string(out_dir.join("diagnostic.json")).expect("diagnostic.json");
    let v: serde_json::Value = serde_json::from_str(&diag).expect("valid json");
    assert_eq!(v["kind"], "numerical");
    assert!(v["time"].as_f64().is_some());
}

#[test]
fn check_suite_passes() {
    let out = vpsep(&["check"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.matches("PASS").count(), 4, "stdout: {text}");
}
