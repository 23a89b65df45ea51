//! End-to-end tests of the binary: exit codes, output files, manifests,
//! bit-identical reruns, and the bundled synthetic dataset.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_needletrap"))
}

fn data(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(file)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn needletrap");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header
        .iter()
        .position(|h| *h == name)
        .unwrap_or_else(|| panic!("no column {name} in {}", path.display()));
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let field = l.split(',').nth(idx).unwrap();
            field.parse().unwrap_or(f64::NAN)
        })
        .collect()
}

#[test]
fn stability_emits_map_and_boundary_with_canonical_edge() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(bin().args([
        "stability",
        "--out",
        dir.path().to_str().unwrap(),
        "--na",
        "5",
        "--nq",
        "13",
    ]));
    assert!(dir.path().join("manifest.toml").exists());
    let a = read_csv_column(&dir.path().join("stability_boundary.csv"), "a");
    let q = read_csv_column(&dir.path().join("stability_boundary.csv"), "q_boundary");
    let found = a
        .iter()
        .zip(&q)
        .any(|(&a, &q)| a == 0.0 && (0.90..=0.92).contains(&q));
    assert!(found, "no a=0 boundary crossing near 0.908 in {q:?}");
    // map has na*nq rows
    let stable = read_csv_column(&dir.path().join("stability_map.csv"), "stable");
    assert_eq!(stable.len(), 5 * 13);
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[trap]\nv0_wolts = 163.0\n").unwrap();
    let out = bin()
        .args([
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("v0_wolts"), "stderr: {stderr}");
}

#[test]
fn simulate_is_bit_identical_for_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &Path, seed: &str| {
        run_ok(bin().args([
            "simulate",
            "--config",
            data("paper_trap.toml").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]));
        std::fs::read(out.join("trajectory.csv")).unwrap()
    };
    let a = run(&dir.path().join("a"), "42");
    let b = run(&dir.path().join("b"), "42");
    assert_eq!(a, b, "same seed must reproduce byte-identical output");
    let c = run(&dir.path().join("c"), "43");
    assert_ne!(a, c, "different seed must differ");
    // manifest records the seed
    let manifest = std::fs::read_to_string(dir.path().join("a").join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 42"));
    assert!(manifest.contains("command = \"simulate\""));
}

#[test]
fn scan_with_constant_eta_follows_inverse_square() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("const_eta.toml");
    std::fs::write(
        &cfg,
        r#"
[trap]
v0_volts = 163.0
f_rf_khz = 114.0
u0_volts = 0.0
d_um = 100.0
epsilon = 0.0
eta = 0.25

[particle]
mass_kg = 2.65e-19
charge_e = 0.2
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    run_ok(bin().args([
        "scan",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--d-min-um",
        "100",
        "--d-max-um",
        "800",
        "--points",
        "9",
    ]));
    let d = read_csv_column(&out.join("scan.csv"), "d_um");
    let f = read_csv_column(&out.join("scan.csv"), "f_khz");
    let q = read_csv_column(&out.join("scan.csv"), "q_z");
    let f0d0 = f[0] * d[0] * d[0];
    let q0d0 = q[0] * d[0] * d[0];
    for i in 1..d.len() {
        let fd = f[i] * d[i] * d[i];
        assert!(
            ((fd - f0d0) / f0d0).abs() < 1e-4,
            "f·d² drifted: {fd} vs {f0d0}"
        );
        let qd = q[i] * d[i] * d[i];
        assert!(((qd - q0d0) / q0d0).abs() < 1e-9, "q·d² drifted");
    }
}

#[test]
fn fit_recovers_bundled_dataset_parameters() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(bin().args([
        "fit",
        "--config",
        data("paper_trap.toml").to_str().unwrap(),
        "--scan",
        data("synthetic_scan.csv").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    let report = std::fs::read_to_string(dir.path().join("fit_report.txt")).unwrap();
    let charge_e: f64 = report
        .lines()
        .find(|l| l.starts_with("charge_e = "))
        .and_then(|l| l.split(['=', '#']).nth(1))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    let u0: f64 = report
        .lines()
        .find(|l| l.starts_with("u0_volts = "))
        .and_then(|l| l.split(['=', '#']).nth(1))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(
        ((charge_e - 4.85) / 4.85).abs() < 0.05,
        "recovered charge {charge_e} e"
    );
    assert!(((u0 - 9.0) / 9.0).abs() < 0.10, "recovered U0 {u0} V");
    assert!(dir.path().join("manifest.toml").exists());
}

#[test]
fn psd_of_simulated_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let sim_out = dir.path().join("sim");
    // a longer, z-only run for spectral use
    let cfg = dir.path().join("sim.toml");
    std::fs::write(
        &cfg,
        r#"
[trap]
v0_volts = 163.0
f_rf_khz = 114.0
u0_volts = 0.0
d_um = 50.0
epsilon = 0.04
eta = 0.25

[particle]
radius_nm = 26.25
density_kg_m3 = 3500.0
charge_e = 4.85

[environment]
temperature_k = 300.0
pressure_torr = 0.2

[simulate]
duration_rf_periods = 3000.0
steps_per_rf_period = 60.0
x0_um = [0.0, 0.0, 0.5]
axes = ["z"]
sample_every = 3

[psd]
segment_len = 8192
"#,
    )
    .unwrap();
    run_ok(bin().args([
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        sim_out.to_str().unwrap(),
        "--seed",
        "7",
    ]));
    let psd_out = dir.path().join("spec");
    run_ok(bin().args([
        "psd",
        "--config",
        cfg.to_str().unwrap(),
        "--input",
        sim_out.join("trajectory.csv").to_str().unwrap(),
        "--column",
        "z_m",
        "--out",
        psd_out.to_str().unwrap(),
    ]));
    let f = read_csv_column(&psd_out.join("spectrum.csv"), "f_Hz");
    let p = read_csv_column(&psd_out.join("spectrum.csv"), "psd");
    assert_eq!(f.len(), 8192 / 2 + 1);
    assert!(p.iter().all(|v| *v >= 0.0));
    // dominant motion line sits at the secular frequency ≈ 31 kHz, well
    // below the 114 kHz drive
    let (k, _) = p
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    assert!(
        f[k] > 20e3 && f[k] < 45e3,
        "dominant line at {} Hz, expected the secular peak",
        f[k]
    );
    assert!(psd_out.join("manifest.toml").exists());
}

#[test]
fn libration_report_from_spheroids() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(bin().args([
        "libration",
        "--config",
        data("libration_dumbbell.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    let report = std::fs::read_to_string(dir.path().join("libration.txt")).unwrap();
    assert!(report.contains("q_alpha = "), "{report}");
    assert!(report.contains("omega_alpha_rad_per_s = "), "{report}");
    let q_alpha: f64 = report
        .lines()
        .find(|l| l.starts_with("q_alpha = "))
        .and_then(|l| l.split('=').nth(1))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(q_alpha > 0.0, "prolate spheroid must have angular stiffness");
}

#[test]
fn vpp_flag_halves_the_amplitude() {
    // scans at --v0-volts 326 --vpp and at 163 (zero-to-peak) must agree
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        r#"
[trap]
v0_volts = 163.0
f_rf_khz = 114.0
d_um = 100.0
eta = 0.25

[particle]
mass_kg = 2.65e-19
charge_e = 1.0
"#,
    )
    .unwrap();
    let run = |out: &Path, extra: &[&str]| {
        let mut cmd = bin();
        cmd.args([
            "scan",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--points",
            "5",
            "--d-min-um",
            "100",
            "--d-max-um",
            "400",
        ]);
        cmd.args(extra);
        run_ok(&mut cmd);
        std::fs::read(out.join("scan.csv")).unwrap()
    };
    let plain = run(&dir.path().join("a"), &[]);
    let vpp = run(&dir.path().join("b"), &["--v0-volts", "326", "--vpp"]);
    assert_eq!(plain, vpp);
}
