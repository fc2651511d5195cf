use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gravphase"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Data rows of a CSV written by the tool, after the hash line and header.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    lines.next().unwrap();
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn col(rows: &[Vec<String>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn with_edit(dir: &Path, name: &str, from: &str, to: &str) -> PathBuf {
    let text = fs::read_to_string(scenario(name)).unwrap();
    assert!(text.contains(from));
    let p = dir.join(name);
    fs::write(&p, text.replace(from, to)).unwrap();
    p
}

#[test]
fn quantum_run_is_flat_in_p1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&run(&["run", "--config", scenario("fig2_quantum.toml").to_str().unwrap(), "--out-dir", d]));
    let r = rows(&dir.path().join("fig2_quantum_phase.csv"));
    assert_eq!(r.len(), 3);
    assert!(r.iter().all(|row| row[3] == r[0][3]));
    for f in ["fringes", "trajectories"] {
        assert!(dir.path().join(format!("fig2_quantum_{f}.csv")).exists());
    }
}

#[test]
fn semiclassical_run_tracks_published_values() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cfg = scenario("appendix2_semiclassical.toml");
    ok(&run(&["run", "--config", cfg.to_str().unwrap(), "--out-dir", d]));
    let phi = col(&rows(&dir.path().join("appendix2_semiclassical_phase.csv")), 3);
    for (v, target) in phi.iter().zip([-0.198, -0.374, -0.394]) {
        assert!((v / target - 1.0).abs() < 0.15, "{v} vs {target}");
    }
    assert!(phi[0].abs() < phi[1].abs() && phi[1].abs() < phi[2].abs());
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let cfg = scenario("fig2_quantum.toml");
    let mut texts = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        ok(&run(&["run", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]));
        let mut names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        texts.push(names.iter().map(|p| fs::read(p).unwrap()).collect::<Vec<_>>());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn key_without_unit_suffix_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let p = with_edit(dir.path(), "frames_default.toml", "separation_m = 0.25", "T=1");
    let out = run(&["run", "--config", p.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`T`") && err.contains("T_s") && err.contains("line"), "{err}");
}

#[test]
fn sweep_p1_quantum_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("fig2_quantum.toml");
    ok(&run(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(),
        "--key", "interferometer.P1_frac", "--values", "0.25,0.5,0.75",
    ]));
    let r = rows(&dir.path().join("fig2_quantum_sweep.csv"));
    assert_eq!(col(&r, 0), vec![0.25, 0.5, 0.75]);
    assert!(r.iter().all(|row| row[4] == r[0][4]));
}

#[test]
fn sweep_p1_semiclassical_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("appendix2_semiclassical.toml");
    ok(&run(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(),
        "--key", "interferometer.P1_frac", "--values", "0.25,0.5,0.75", "--steps", "1000",
    ]));
    let phi = col(&rows(&dir.path().join("appendix2_semiclassical_sweep.csv")), 4);
    assert!(phi[0] > phi[1] && phi[1] > phi[2], "{phi:?}");
}

#[test]
fn sweep_standoff_shrinks_the_quantum_phase() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("frames_default.toml");
    ok(&run(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(),
        "--key", "source_trajectory.xs0_m[0]", "--values", "0.05,0.1,0.2,0.4",
    ]));
    let phi = col(&rows(&dir.path().join("frames_default_sweep.csv")), 4);
    assert!(phi.windows(2).all(|w| w[1].abs() < w[0].abs()), "{phi:?}");
}

#[test]
fn sweep_rejects_non_numeric_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("frames_default.toml");
    let out = run(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(),
        "--key", "source.kind", "--values", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn frames_default_passes_and_reports_entanglement() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("frames_default.toml");
    let s = ok(&run(&["frames", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]));
    assert!(s.contains("verdict = 1/1 PASS"), "{s}");
    assert!(s.contains("schmidt_rank 1, product"));
    assert!(s.contains("schmidt_rank 2, entangled"));
}

#[test]
fn frames_massless_source_gives_zero() {
    let dir = tempfile::tempdir().unwrap();
    let p = with_edit(dir.path(), "frames_default.toml", "mass_kg = 1.25", "mass_kg = 0.0");
    let s = ok(&run(&["frames", "--config", p.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]));
    assert!(s.contains("delta_phi_frame_D_rad = 0.0000000000000000e0"), "{s}");
    assert!(s.contains("delta_phi_frame_A_rad = 0.0000000000000000e0"), "{s}");
}

#[test]
fn frames_seeded_hundred_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("frames_default.toml");
    let s = ok(&run(&[
        "frames", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(), "--seed", "2024",
    ]));
    assert!(s.contains("verdict = 100/100 PASS"), "{s}");
    let r = rows(&dir.path().join("frames_default_frames_seed2024.csv"));
    assert_eq!(r.len(), 100);
}

#[test]
fn fit_reports_note_and_values() {
    let dir = tempfile::tempdir().unwrap();
    let s = ok(&run(&[
        "fit", "--input", scenario("fig2_demo_phases.csv").to_str().unwrap(),
        "--out-dir", dir.path().to_str().unwrap(), "--model-rad", "-0.25",
    ]));
    assert!(s.contains("not acceptance targets"));
    assert!(s.contains("slope_rad = "));
    assert!(s.contains("chi2_red_model = "));
    assert!(dir.path().join("fig2_demo_phases_fit_report.txt").exists());
}

#[test]
fn energy_matches_potential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("frames_default.toml");
    let s = ok(&run(&["energy", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]));
    let rel: f64 = s
        .lines()
        .find_map(|l| l.strip_prefix("rel_diff = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(rel < 1e-6);
}

#[test]
fn backaction_deflection_below_uncertainty() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("fig2_quantum.toml");
    let s = ok(&run(&["backaction", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]));
    assert!(s.contains("deflection_below_uncertainty = true"), "{s}");
}

#[test]
fn missing_config_is_a_validation_failure() {
    let out = run(&["run", "--config", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(2));
}
