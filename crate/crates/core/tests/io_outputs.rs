//! Field and series output, and the command-line entry point.

use std::path::Path;
use std::process::Command;

use nematic::io::config::Experiment;
use nematic::io::run::run_to_disk;
use nematic::io::vtu::read_point_array;
use nematic::io::{render_vtu, VtuLayout, ENERGY_COLUMNS};
use nematic::scheme::{initial_state, Discretization};
use nematic::verify::reduced;

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn initial_defect_director_is_unit_and_round_trips() {
    let disc = Discretization::new(reduced(Experiment::Defects, 4, 1).setup()).unwrap();
    let state = initial_state(&disc).unwrap();
    let text = render_vtu(&disc, &state, VtuLayout::Vertices);
    assert!(text.starts_with("<?xml") && text.contains("<VTKFile type=\"UnstructuredGrid\""));
    assert!(text.contains(&format!("NumberOfPoints=\"{}\"", disc.mesh.num_vertices())));
    let d = read_point_array(&text, "d").unwrap();
    let nv = disc.mesh.num_vertices();
    assert_eq!(d.len(), 3 * nv);
    for z in 0..nv {
        let m2: f64 = (0..3).map(|i| d[3 * z + i] * d[3 * z + i]).sum();
        assert!((m2.sqrt() - 1.0).abs() < 1e-14, "vertex {z}: |d| = {}", m2.sqrt());
        for i in 0..3 {
            assert_eq!(d[3 * z + i].to_bits(), state.d.values()[i * nv + z].to_bits());
        }
    }
    let defect = read_point_array(&text, "unit_norm_defect").unwrap();
    assert!(defect.iter().all(|x| x.abs() < 1e-14));
}

#[test]
fn quadratic_layout_exports_every_velocity_node() {
    let disc = Discretization::new(reduced(Experiment::Smooth, 4, 1).setup()).unwrap();
    let state = initial_state(&disc).unwrap();
    let text = render_vtu(&disc, &state, VtuLayout::Quadratic);
    let nn = disc.velocity.num_nodes();
    let v = read_point_array(&text, "v").unwrap();
    assert_eq!(v.len(), 3 * nn);
    for node in 0..nn {
        for i in 0..2 {
            assert_eq!(v[3 * node + i].to_bits(), state.v.values()[i * nn + node].to_bits());
        }
        assert_eq!(v[3 * node + 2], 0.0);
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut outputs = Vec::new();
    for dir in [a.path(), b.path()] {
        let mut cfg = reduced(Experiment::Smooth, 4, 4);
        cfg.output_dir = dir.to_path_buf();
        cfg.save_every = 2;
        let summary = run_to_disk(&cfg, |_| {}).unwrap();
        // the written config names its own directory, so only that line may differ
        let bytes: Vec<Vec<u8>> = summary
            .files
            .iter()
            .map(|f| {
                let text = read(f);
                text.lines().filter(|l| !l.starts_with("output_dir")).collect::<Vec<_>>().join("\n").into_bytes()
            })
            .collect();
        outputs.push(bytes);
        let names: Vec<_> = summary.files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(
            names,
            [
                "config.toml",
                "energy.csv",
                "fields_000000.vtu",
                "fields_000002.vtu",
                "fields_000004.vtu",
                "fields.pvd"
            ]
        );
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn zero_step_run_writes_header_and_initial_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reduced(Experiment::Smooth, 4, 0);
    cfg.output_dir = dir.path().to_path_buf();
    let summary = run_to_disk(&cfg, |_| {}).unwrap();
    assert_eq!(summary.steps, 0);
    let csv = read(&dir.path().join("energy.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], ENERGY_COLUMNS.join(","));
    assert!(lines[1].starts_with("0,0"));
}

#[test]
fn short_run_energy_column_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reduced(Experiment::Smooth, 8, 10);
    cfg.output_dir = dir.path().to_path_buf();
    run_to_disk(&cfg, |_| {}).unwrap();
    let csv = read(&dir.path().join("energy.csv"));
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (e, res) = (col("E"), col("energy_residual"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 11);
    let e0 = rows[0][e];
    let bound = 10.0 * cfg.theta * (1.0 + e0);
    for w in rows.windows(2) {
        assert!(w[1][e] <= w[0][e] + bound, "{} -> {}", w[0][e], w[1][e]);
    }
    for r in &rows {
        assert!(r[res].abs() <= bound * rows.len() as f64, "residual {}", r[res]);
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nematic"))
}

#[test]
fn cli_simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli()
        .args(["simulate", "--experiment", "1", "--n", "4", "--t-end", "5e-4", "--quiet", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("2 steps"));
    let cfg = read(&dir.path().join("config.toml"));
    assert!(cfg.contains("n = 4"), "{cfg}");
    assert_eq!(read(&dir.path().join("energy.csv")).lines().count(), 4);
    assert!(dir.path().join("fields.pvd").exists());
}

#[test]
fn cli_rejects_bad_input() {
    let custom = cli().args(["simulate", "--experiment", "custom"]).output().unwrap();
    assert_eq!(custom.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&custom.stderr).contains("domain"));
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    std::fs::write(&file, "experiment = 1\nmu7 = 1.0\n").unwrap();
    let unknown = cli().args(["simulate", "--config"]).arg(&file).output().unwrap();
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("mu7"));
    let suite = cli().args(["verify", "--suite", "bogus"]).output().unwrap();
    assert_eq!(suite.status.code(), Some(2));
}

#[test]
fn cli_verify_lumping_passes() {
    let out = cli().args(["verify", "--suite", "lumping"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("[lumping]"));
    assert!(!text.contains("FAIL"));
}
