//! TOML configuration: raw unit-suffixed keys deserialized strictly (unknown
//! keys are errors naming the key), then resolved into SI library types.

use anyhow::{anyhow, bail, Context, Result};
use needletrap::constants::{
    charge_e_to_coulomb, khz_to_angular, torr_to_pa, um_to_m, vpp_to_amplitude, DIAMOND_DENSITY,
};
use needletrap::io::read_eta_table;
use needletrap::libration::{ChargeDistribution, MassDistribution};
use needletrap::trap::{Efficiency, Environment, Particle, TrapConfig};
use needletrap::Axis;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub trap: Option<RawTrap>,
    pub particle: Option<RawParticle>,
    pub environment: Option<RawEnvironment>,
    pub simulate: Option<RawSimulate>,
    pub psd: Option<RawPsd>,
    pub scan: Option<RawScan>,
    pub fit: Option<RawFit>,
    pub libration: Option<RawLibration>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTrap {
    pub v0_volts: Option<f64>,
    /// Drive frequency Ω_rf/2π in kHz
    pub f_rf_khz: Option<f64>,
    /// Angular drive frequency in rad/s (alternative to f_rf_khz)
    pub omega_rf_rad_per_s: Option<f64>,
    pub u0_volts: Option<f64>,
    pub d_um: Option<f64>,
    pub epsilon: Option<f64>,
    pub eta: Option<f64>,
    pub eta_dc: Option<f64>,
    /// CSV with columns d_um, eta[, eta_dc]
    pub eta_table_csv: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParticle {
    pub mass_kg: Option<f64>,
    pub charge_e: Option<f64>,
    pub charge_c: Option<f64>,
    pub radius_nm: Option<f64>,
    pub density_kg_m3: Option<f64>,
    pub quadrupole_eigenvalues_c_m2: Option<[f64; 3]>,
    pub largest_inertia_kg_m2: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEnvironment {
    pub temperature_k: Option<f64>,
    pub pressure_torr: Option<f64>,
    pub pressure_pa: Option<f64>,
    pub damping_rate_per_s: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSimulate {
    pub duration_s: Option<f64>,
    pub duration_rf_periods: Option<f64>,
    pub dt_s: Option<f64>,
    pub steps_per_rf_period: Option<f64>,
    pub x0_um: Option<[f64; 3]>,
    pub v0_m_s: Option<[f64; 3]>,
    pub axes: Option<Vec<String>>,
    pub sample_every: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPsd {
    pub segment_len: Option<usize>,
    pub overlap: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScan {
    pub d_min_um: Option<f64>,
    pub d_max_um: Option<f64>,
    pub points: Option<usize>,
    /// "log" (default) or "linear"
    pub spacing: Option<String>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFit {
    pub guess_charge_e: Option<f64>,
    pub guess_u0_volts: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLibration {
    pub charge_csv: Option<PathBuf>,
    pub mass_csv: Option<PathBuf>,
    pub charge_spheroid: Option<RawChargeSpheroid>,
    pub mass_spheroid: Option<RawMassSpheroid>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawChargeSpheroid {
    pub semi_axes_nm: [f64; 3],
    pub total_charge_e: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMassSpheroid {
    pub semi_axes_nm: [f64; 3],
    pub density_kg_m3: f64,
}

/// Command-line overrides applied after the file is parsed.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub d_um: Option<f64>,
    pub freq_khz: Option<f64>,
    pub v0_volts: Option<f64>,
    pub u0_volts: Option<f64>,
    /// Interpret v0 as peak-to-peak and halve it.
    pub vpp: bool,
}

pub fn load(path: Option<&Path>) -> Result<RawConfig> {
    match path {
        None => Ok(RawConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("malformed config {}", p.display()))
        }
    }
}

pub fn resolve_trap(
    raw: &RawConfig,
    overrides: &Overrides,
    config_dir: &Path,
) -> Result<TrapConfig> {
    let t = raw
        .trap
        .as_ref()
        .ok_or_else(|| anyhow!("config is missing the [trap] section"))?;
    let mut v0 = overrides
        .v0_volts
        .or(t.v0_volts)
        .ok_or_else(|| anyhow!("trap.v0_volts is required"))?;
    if overrides.vpp {
        v0 = vpp_to_amplitude(v0);
    }
    let omega_rf = match (overrides.freq_khz, t.f_rf_khz, t.omega_rf_rad_per_s) {
        (Some(f), _, _) => khz_to_angular(f),
        (None, Some(f), None) => khz_to_angular(f),
        (None, None, Some(w)) => w,
        (None, Some(_), Some(_)) => {
            bail!("trap.f_rf_khz and trap.omega_rf_rad_per_s are mutually exclusive")
        }
        (None, None, None) => bail!("trap.f_rf_khz (or omega_rf_rad_per_s) is required"),
    };
    let u0 = overrides.u0_volts.or(t.u0_volts).unwrap_or(0.0);
    let d = um_to_m(
        overrides
            .d_um
            .or(t.d_um)
            .ok_or_else(|| anyhow!("trap.d_um is required"))?,
    );
    let epsilon = t.epsilon.unwrap_or(0.0);

    let (eta, table_eta_dc) = match (&t.eta, &t.eta_table_csv) {
        (Some(_), Some(_)) => bail!("trap.eta and trap.eta_table_csv are mutually exclusive"),
        (Some(e), None) => (Efficiency::Constant(*e), None),
        (None, Some(rel)) => {
            let path = config_dir.join(rel);
            let (eta, eta_dc) = read_eta_table(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            (eta, eta_dc)
        }
        (None, None) => bail!("trap.eta or trap.eta_table_csv is required"),
    };

    let mut cfg = TrapConfig::new(v0, omega_rf, u0, d, eta, epsilon)
        .map_err(|e| anyhow!("invalid trap config: {e}"))?;
    // scalar eta_dc beats a table column when both are present
    if let Some(e) = t.eta_dc {
        cfg = cfg
            .with_eta_dc(Efficiency::Constant(e))
            .map_err(|e| anyhow!("invalid trap config: {e}"))?;
    } else if let Some(table) = table_eta_dc {
        cfg = cfg
            .with_eta_dc(table)
            .map_err(|e| anyhow!("invalid trap config: {e}"))?;
    }
    Ok(cfg)
}

pub fn resolve_particle(raw: &RawConfig) -> Result<Particle> {
    let p = raw
        .particle
        .as_ref()
        .ok_or_else(|| anyhow!("config is missing the [particle] section"))?;
    let charge = match (p.charge_e, p.charge_c) {
        (Some(_), Some(_)) => {
            bail!("particle.charge_e and particle.charge_c are mutually exclusive")
        }
        (Some(e), None) => charge_e_to_coulomb(e),
        (None, Some(c)) => c,
        (None, None) => bail!("particle.charge_e (or charge_c) is required"),
    };
    let radius = p.radius_nm.map(|r| r * 1e-9);
    let mut particle = match (p.mass_kg, radius) {
        (Some(m), _) => {
            let mut particle =
                Particle::new(m, charge).map_err(|e| anyhow!("invalid particle: {e}"))?;
            particle.radius = radius;
            particle.density = p.density_kg_m3;
            particle
                .validate()
                .map_err(|e| anyhow!("invalid particle: {e}"))?;
            particle
        }
        (None, Some(r)) => {
            let density = p.density_kg_m3.unwrap_or(DIAMOND_DENSITY);
            Particle::sphere(r, density, charge).map_err(|e| anyhow!("invalid particle: {e}"))?
        }
        (None, None) => bail!("particle.mass_kg or particle.radius_nm is required"),
    };
    if let Some(q) = p.quadrupole_eigenvalues_c_m2 {
        particle = particle
            .with_quadrupole_eigenvalues(q)
            .map_err(|e| anyhow!("invalid particle: {e}"))?;
    }
    if let Some(i1) = p.largest_inertia_kg_m2 {
        particle = particle
            .with_largest_inertia(i1)
            .map_err(|e| anyhow!("invalid particle: {e}"))?;
    }
    Ok(particle)
}

pub fn resolve_environment(raw: &RawConfig) -> Result<Environment> {
    let Some(e) = raw.environment.as_ref() else {
        return Ok(Environment::vacuum());
    };
    let pressure = match (e.pressure_torr, e.pressure_pa) {
        (Some(_), Some(_)) => bail!("environment.pressure_torr and pressure_pa are exclusive"),
        (Some(torr), None) => torr_to_pa(torr),
        (None, Some(pa)) => pa,
        (None, None) => 0.0,
    };
    let mut env = Environment::new(e.temperature_k.unwrap_or(0.0), pressure)
        .map_err(|err| anyhow!("invalid environment: {err}"))?;
    if let Some(g) = e.damping_rate_per_s {
        env = env
            .with_damping_rate(g)
            .map_err(|err| anyhow!("invalid environment: {err}"))?;
    }
    Ok(env)
}

pub fn parse_axis(name: &str) -> Result<Axis> {
    match name.to_ascii_lowercase().as_str() {
        "x" => Ok(Axis::X),
        "y" => Ok(Axis::Y),
        "z" => Ok(Axis::Z),
        other => bail!("unknown axis '{other}' (expected x, y or z)"),
    }
}

pub fn resolve_charge_distribution(
    raw: &RawLibration,
    config_dir: &Path,
) -> Result<ChargeDistribution> {
    match (&raw.charge_csv, &raw.charge_spheroid) {
        (Some(_), Some(_)) => bail!("libration.charge_csv and charge_spheroid are exclusive"),
        (Some(rel), None) => {
            let path = config_dir.join(rel);
            let points = needletrap::io::read_charge_points(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            Ok(ChargeDistribution::Points(points))
        }
        (None, Some(s)) => Ok(ChargeDistribution::SpheroidSurface {
            semi_axes: s.semi_axes_nm.map(|a| a * 1e-9),
            total_charge: charge_e_to_coulomb(s.total_charge_e),
        }),
        (None, None) => bail!("libration needs charge_csv or charge_spheroid"),
    }
}

pub fn resolve_mass_distribution(
    raw: &RawLibration,
    config_dir: &Path,
) -> Result<Option<MassDistribution>> {
    match (&raw.mass_csv, &raw.mass_spheroid) {
        (Some(_), Some(_)) => bail!("libration.mass_csv and mass_spheroid are exclusive"),
        (Some(rel), None) => {
            let path = config_dir.join(rel);
            let points = needletrap::io::read_mass_points(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            Ok(Some(MassDistribution::Points(points)))
        }
        (None, Some(s)) => Ok(Some(MassDistribution::SpheroidSolid {
            semi_axes: s.semi_axes_nm.map(|a| a * 1e-9),
            density: s.density_kg_m3,
        })),
        (None, None) => Ok(None),
    }
}
