//! Subcommand implementations: each is a thin wrapper over one library
//! pipeline, emitting result files plus a manifest into the output
//! directory.

use crate::config::{self, RawConfig};
use crate::manifest::RunManifest;
use crate::Common;
use anyhow::{anyhow, bail, Context, Result};
use needletrap::analysis::{self, WelchOptions};
use needletrap::constants::{angular_to_khz, charge_e_to_coulomb, m_to_um};
use needletrap::dynamics::{integrate, InitialState, IntegrationOptions};
use needletrap::fitting::{
    fit_scan, log_spaced, FitGuess, FitMode, FrequencyScan, ScanModel,
};
use needletrap::floquet::{stability_boundary, stability_map};
use needletrap::io;
use needletrap::libration::{largest_inertia, libration_mode, quadrupole_eigenvalues};
use needletrap::Axis;
use std::fmt::Write as _;
use std::path::Path;

struct Setup {
    raw: RawConfig,
    config_dir: std::path::PathBuf,
}

fn setup(common: &Common) -> Result<Setup> {
    std::fs::create_dir_all(&common.out)
        .with_context(|| format!("creating output directory {}", common.out.display()))?;
    let raw = config::load(common.config.as_deref())?;
    let config_dir = common
        .config
        .as_deref()
        .and_then(Path::parent)
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    Ok(Setup { raw, config_dir })
}

fn config_input(manifest: RunManifest, common: &Common) -> RunManifest {
    match &common.config {
        Some(p) => manifest.input("config", p.display().to_string()),
        None => manifest,
    }
}

pub fn stability(
    common: &Common,
    a_range: (f64, f64),
    na: usize,
    q_range: (f64, f64),
    nq: usize,
) -> Result<()> {
    let _ = setup(common)?;
    let map = stability_map(a_range, na, q_range, nq)?;
    let boundary = stability_boundary(a_range, na, q_range, nq)?;
    io::write_stability_map(&common.out.join("stability_map.csv"), &map)?;
    io::write_boundary(&common.out.join("stability_boundary.csv"), &boundary)?;

    let stable = map.iter().filter(|p| p.stable).count();
    println!(
        "stability: {}x{} grid, {} stable points, {} boundary crossings",
        na,
        nq,
        stable,
        boundary.len()
    );

    config_input(RunManifest::new("stability"), common)
        .parameter("a_min", a_range.0)
        .parameter("a_max", a_range.1)
        .parameter("q_min", q_range.0)
        .parameter("q_max", q_range.1)
        .parameter("na", na as i64)
        .parameter("nq", nq as i64)
        .output("stability_map.csv")
        .output("stability_boundary.csv")
        .write(&common.out)
}

pub fn simulate(common: &Common) -> Result<()> {
    let s = setup(common)?;
    let cfg = config::resolve_trap(&s.raw, &common.overrides(), &s.config_dir)?;
    let particle = config::resolve_particle(&s.raw)?;
    let env = config::resolve_environment(&s.raw)?;
    let sim = s
        .raw
        .simulate
        .as_ref()
        .ok_or_else(|| anyhow!("config is missing the [simulate] section"))?;

    let duration = match (sim.duration_s, sim.duration_rf_periods) {
        (Some(_), Some(_)) => bail!("simulate.duration_s and duration_rf_periods are exclusive"),
        (Some(d), None) => d,
        (None, Some(n)) => n * cfg.rf_period(),
        (None, None) => bail!("simulate.duration_s (or duration_rf_periods) is required"),
    };
    let dt = match (sim.dt_s, sim.steps_per_rf_period) {
        (Some(_), Some(_)) => bail!("simulate.dt_s and steps_per_rf_period are exclusive"),
        (Some(dt), None) => dt,
        (None, Some(n)) => cfg.rf_period() / n,
        (None, None) => cfg.rf_period() / 100.0,
    };
    let mut opts = IntegrationOptions::new(duration, dt, common.seed);
    if let Some(k) = sim.sample_every {
        opts = opts.with_sample_every(k);
    }
    if let Some(axes) = &sim.axes {
        let axes: Result<Vec<Axis>> = axes.iter().map(|a| config::parse_axis(a)).collect();
        opts = opts.with_axes(axes?);
    }
    let init = InitialState {
        position: sim.x0_um.map_or([0.0; 3], |x| x.map(|v| v * 1e-6)),
        velocity: sim.v0_m_s.unwrap_or([0.0; 3]),
    };

    let outcome = integrate(&cfg, &particle, &env, &init, &opts)?;
    let trajectory = outcome.trajectory();
    io::write_trajectory(&common.out.join("trajectory.csv"), trajectory)?;

    let mut manifest = config_input(RunManifest::new("simulate"), common)
        .with_trap(&cfg)
        .with_particle(&particle)
        .with_environment(&env)
        .with_seed(common.seed)
        .parameter("duration_s", duration)
        .parameter("dt_s", dt)
        .parameter("sample_every", opts.sample_every as i64)
        .parameter(
            "x0_m",
            toml::Value::Array(init.position.iter().map(|&v| v.into()).collect()),
        )
        .parameter(
            "v0_m_s",
            toml::Value::Array(init.velocity.iter().map(|&v| v.into()).collect()),
        )
        .output("trajectory.csv");
    match &outcome {
        needletrap::dynamics::IntegrationOutcome::Completed(_) => {
            println!(
                "simulate: {} samples over {:.3e} s",
                trajectory.sample_count(),
                trajectory.duration()
            );
        }
        needletrap::dynamics::IntegrationOutcome::Escaped {
            escape_time, axis, ..
        } => {
            manifest = manifest
                .parameter("escaped_axis", axis.to_string())
                .parameter("escape_time_s", *escape_time);
            println!("simulate: UNSTABLE — escaped on {axis} at t = {escape_time:.6e} s");
        }
    }
    manifest.write(&common.out)
}

pub fn psd(
    common: &Common,
    input: Option<&Path>,
    column: Option<&str>,
    raw_stream: Option<&Path>,
    sample_rate_hz: Option<f64>,
    peak_window_khz: Option<(f64, f64)>,
) -> Result<()> {
    let s = setup(common)?;
    let (series, fs, input_desc) = match (input, raw_stream) {
        (Some(path), None) => {
            let (series, fs) = io::read_time_series(path, column)?;
            (series, fs, path.display().to_string())
        }
        (None, Some(path)) => {
            let fs = sample_rate_hz.expect("clap enforces --sample-rate-hz with --raw");
            (io::read_f64_stream(path)?, fs, path.display().to_string())
        }
        _ => bail!("exactly one of --input or --raw is required"),
    };

    let psd_cfg = s.raw.psd.clone().unwrap_or_default();
    let opts = WelchOptions {
        segment_len: psd_cfg.segment_len,
        overlap: psd_cfg.overlap.unwrap_or(0.5),
        ..Default::default()
    };
    let spectrum = analysis::psd(&series, fs, &opts)?;
    io::write_spectrum(&common.out.join("spectrum.csv"), &spectrum)?;
    println!(
        "psd: {} samples at {:.6e} Hz -> {} bins, RBW {:.3} Hz, {} segments",
        series.len(),
        fs,
        spectrum.psd.len(),
        spectrum.resolution_bandwidth,
        spectrum.segments_averaged
    );

    let mut manifest = config_input(RunManifest::new("psd"), common)
        .input("series", input_desc)
        .parameter("sample_rate_hz", fs)
        .parameter("segment_len", spectrum.segment_len as i64)
        .parameter("overlap", opts.overlap)
        .parameter("resolution_bandwidth_hz", spectrum.resolution_bandwidth)
        .output("spectrum.csv");

    if let Some((lo_khz, hi_khz)) = peak_window_khz {
        let fit = analysis::fit_peak(&spectrum, (lo_khz * 1e3, hi_khz * 1e3))?;
        let mut report = String::new();
        writeln!(report, "peak fit")?;
        writeln!(report, "========")?;
        writeln!(report, "f0_hz = {}", fit.f0)?;
        writeln!(report, "gamma_hz = {}  # full width Γ/2π", fit.gamma_hz)?;
        writeln!(report, "amplitude = {}", fit.amplitude)?;
        writeln!(report, "background = {}", fit.background)?;
        writeln!(report, "residual_norm = {}", fit.residual_norm)?;
        std::fs::write(common.out.join("peak.txt"), report)?;
        println!(
            "peak: f0 = {:.3} kHz, Γ/2π = {:.3} Hz",
            fit.f0 / 1e3,
            fit.gamma_hz
        );
        manifest = manifest
            .parameter("peak_window_khz_lo", lo_khz)
            .parameter("peak_window_khz_hi", hi_khz)
            .output("peak.txt");
    }
    manifest.write(&common.out)
}

fn scan_model(common: &Common, s: &Setup) -> Result<(ScanModel, f64, f64)> {
    let cfg = config::resolve_trap(&s.raw, &common.overrides(), &s.config_dir)?;
    let particle = config::resolve_particle(&s.raw)?;
    let model = ScanModel {
        v0: cfg.v0,
        omega_rf: cfg.omega_rf,
        epsilon: cfg.epsilon,
        mass: particle.mass,
        eta: cfg.eta.clone(),
        eta_dc: cfg.eta_dc.clone(),
    };
    Ok((model, particle.charge, cfg.u0))
}

pub fn scan(
    common: &Common,
    exact: bool,
    d_min_um: Option<f64>,
    d_max_um: Option<f64>,
    points: Option<usize>,
) -> Result<()> {
    let s = setup(common)?;
    let (model, charge, u0) = scan_model(common, &s)?;
    let scan_cfg = s.raw.scan.clone().unwrap_or_default();
    let d_min = d_min_um.or(scan_cfg.d_min_um).unwrap_or(50.0) * 1e-6;
    let d_max = d_max_um.or(scan_cfg.d_max_um).unwrap_or(800.0) * 1e-6;
    let n = points.or(scan_cfg.points).unwrap_or(25);
    let spacing = scan_cfg.spacing.as_deref().unwrap_or("log");
    let distances = match spacing {
        "log" => log_spaced(d_min, d_max, n)?,
        "linear" => (0..n)
            .map(|i| d_min + (d_max - d_min) * i as f64 / (n - 1) as f64)
            .collect(),
        other => bail!("scan.spacing must be 'log' or 'linear', got '{other}'"),
    };
    let mode = if exact { FitMode::Exact } else { FitMode::Series };
    let rows = needletrap::fitting::scan_distance(&model, charge, u0, &distances, mode)?;
    io::write_scan_rows(&common.out.join("scan.csv"), &rows)?;
    let n_stable = rows.iter().filter(|r| r.stable).count();
    println!(
        "scan: {} points over [{:.1}, {:.1}] μm, {} stable",
        rows.len(),
        m_to_um(d_min),
        m_to_um(d_max),
        n_stable
    );

    config_input(RunManifest::new("scan"), common)
        .parameter("d_min_m", d_min)
        .parameter("d_max_m", d_max)
        .parameter("points", n as i64)
        .parameter("spacing", spacing)
        .parameter("mode", if exact { "exact" } else { "series" })
        .parameter("charge_c", charge)
        .parameter("u0_volts", u0)
        .output("scan.csv")
        .write(&common.out)
}

pub fn fit(
    common: &Common,
    scan_csv: &Path,
    exact: bool,
    guess_charge_e: Option<f64>,
    guess_u0_volts: Option<f64>,
) -> Result<()> {
    let s = setup(common)?;
    let (model, _, _) = scan_model(common, &s)?;
    let points = io::read_frequency_scan(scan_csv)?;
    let scan = FrequencyScan::new(points, model.clone())
        .map_err(|e| anyhow!("invalid scan: {e}"))?;

    let fit_cfg = s.raw.fit.clone().unwrap_or_default();
    let guess = FitGuess {
        charge: charge_e_to_coulomb(
            guess_charge_e
                .or(fit_cfg.guess_charge_e)
                .ok_or_else(|| anyhow!("--guess-charge-e (or fit.guess_charge_e) is required"))?,
        ),
        u0: guess_u0_volts
            .or(fit_cfg.guess_u0_volts)
            .ok_or_else(|| anyhow!("--guess-u0-volts (or fit.guess_u0_volts) is required"))?,
    };
    let mode = if exact { FitMode::Exact } else { FitMode::Series };
    let result = fit_scan(&scan, guess, mode)?;

    let mut report = String::new();
    writeln!(report, "frequency-scan fit")?;
    writeln!(report, "==================")?;
    writeln!(report, "mode = {}", if exact { "exact" } else { "series" })?;
    writeln!(report, "points = {}", scan.points.len())?;
    writeln!(report, "iterations = {}", result.iterations)?;
    writeln!(report, "charge_c = {}", result.charge)?;
    writeln!(
        report,
        "charge_e = {}  # 1 sigma: {}",
        result.charge_in_e(),
        result.charge_sigma_in_e()
    )?;
    writeln!(
        report,
        "u0_volts = {}  # 1 sigma: {}",
        result.u0, result.u0_sigma
    )?;
    writeln!(report, "residual_norm = {}", result.residual_norm)?;
    writeln!(report, "objective = {}", result.objective)?;
    writeln!(report)?;
    writeln!(report, "# per-point residuals")?;
    writeln!(report, "# d_um, f_meas_khz, f_model_khz, residual_over_sigma")?;
    for p in &scan.points {
        let modeled = model
            .frequency(p.d, result.charge, result.u0, mode)?
            .omega()
            .map_or(f64::NAN, |w| w);
        let sigma = p.sigma_omega.unwrap_or(1.0);
        writeln!(
            report,
            "{}, {}, {}, {}",
            m_to_um(p.d),
            angular_to_khz(p.omega),
            angular_to_khz(modeled),
            (modeled - p.omega) / sigma
        )?;
    }
    std::fs::write(common.out.join("fit_report.txt"), report)?;
    println!(
        "fit: Q = {:.4} e ± {:.4}, U0 = {:.4} V ± {:.4} ({} iterations)",
        result.charge_in_e(),
        result.charge_sigma_in_e(),
        result.u0,
        result.u0_sigma,
        result.iterations
    );

    config_input(RunManifest::new("fit"), common)
        .input("scan", scan_csv.display().to_string())
        .parameter("mode", if exact { "exact" } else { "series" })
        .parameter("guess_charge_c", guess.charge)
        .parameter("guess_u0_volts", guess.u0)
        .parameter("fitted_charge_c", result.charge)
        .parameter("fitted_u0_volts", result.u0)
        .output("fit_report.txt")
        .write(&common.out)
}

pub fn libration(common: &Common) -> Result<()> {
    let s = setup(common)?;
    let cfg = config::resolve_trap(&s.raw, &common.overrides(), &s.config_dir)?;
    let lib = s
        .raw
        .libration
        .as_ref()
        .ok_or_else(|| anyhow!("config is missing the [libration] section"))?;
    let particle = config::resolve_particle(&s.raw).ok();

    let charge_dist = config::resolve_charge_distribution(lib, &s.config_dir)?;
    if let Some(p) = &particle {
        let total = charge_dist.total_charge();
        if (total - p.charge).abs() > 1e-9 * p.charge.abs().max(1e-300) {
            bail!(
                "charge distribution total {total:e} C disagrees with particle.charge {:e} C",
                p.charge
            );
        }
    }
    let quad = quadrupole_eigenvalues(&charge_dist)?;

    let inertia = match config::resolve_mass_distribution(lib, &s.config_dir)? {
        Some(dist) => {
            if let Some(p) = &particle {
                let total = dist.total_mass();
                if (total - p.mass).abs() > 1e-9 * p.mass {
                    bail!(
                        "mass distribution total {total:e} kg disagrees with particle.mass {:e} kg",
                        p.mass
                    );
                }
            }
            largest_inertia(&dist)?
        }
        None => particle
            .as_ref()
            .and_then(|p| p.largest_inertia)
            .ok_or_else(|| {
                anyhow!("need libration.mass_csv/mass_spheroid or particle.largest_inertia_kg_m2")
            })?,
    };

    let mode = libration_mode(&cfg, &quad, inertia)?;
    let mut report = String::new();
    writeln!(report, "libration mode")?;
    writeln!(report, "==============")?;
    writeln!(
        report,
        "quadrupole_eigenvalues_c_m2 = [{}, {}, {}]",
        quad.values[0], quad.values[1], quad.values[2]
    )?;
    writeln!(report, "quadrupole_gap_c_m2 = {}", quad.gap())?;
    writeln!(report, "degenerate = {}", quad.degenerate)?;
    writeln!(report, "largest_inertia_kg_m2 = {inertia}")?;
    writeln!(report, "q_alpha = {}", mode.q_alpha)?;
    writeln!(report, "omega_alpha_rad_per_s = {}", mode.omega_alpha)?;
    writeln!(report, "f_alpha_khz = {}", angular_to_khz(mode.omega_alpha))?;
    match mode.stability.beta() {
        Some(beta) => writeln!(report, "stability = stable\nbeta = {beta}")?,
        None => writeln!(report, "stability = unstable")?,
    }
    std::fs::write(common.out.join("libration.txt"), report)?;
    println!(
        "libration: q_α = {:.4e}, ω_α/2π = {:.4} kHz, {}",
        mode.q_alpha,
        angular_to_khz(mode.omega_alpha),
        if mode.stability.is_stable() {
            "stable"
        } else {
            "unstable"
        }
    );

    config_input(RunManifest::new("libration"), common)
        .with_trap(&cfg)
        .parameter("largest_inertia_kg_m2", inertia)
        .parameter("quadrupole_gap_c_m2", quad.gap())
        .output("libration.txt")
        .write(&common.out)
}
