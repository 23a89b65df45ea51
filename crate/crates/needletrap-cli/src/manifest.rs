//! Run manifest written next to every output: the subcommand, resolved SI
//! configuration, seed, inputs and outputs — everything needed to reproduce
//! the run bit-identically.

use anyhow::{Context, Result};
use needletrap::trap::{Environment, Particle, TrapConfig};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    /// Subcommand-specific resolved parameters (SI units).
    pub parameters: BTreeMap<String, toml::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trap: Option<TrapManifest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub particle: Option<ParticleManifest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentManifest>,
}

#[derive(Serialize)]
pub struct TrapManifest {
    pub v0_volts: f64,
    pub omega_rf_rad_per_s: f64,
    pub u0_volts: f64,
    pub d_m: f64,
    pub epsilon: f64,
    pub eta_at_d: f64,
    pub eta_dc_at_d: f64,
    pub eta_is_table: bool,
}

#[derive(Serialize)]
pub struct ParticleManifest {
    pub mass_kg: f64,
    pub charge_c: f64,
    pub charge_e: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_kg_m3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub largest_inertia_kg_m2: Option<f64>,
}

#[derive(Serialize)]
pub struct EnvironmentManifest {
    pub temperature_k: f64,
    pub pressure_pa: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping_rate_per_s: Option<f64>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            parameters: BTreeMap::new(),
            trap: None,
            particle: None,
            environment: None,
        }
    }

    pub fn with_trap(mut self, cfg: &TrapConfig) -> Self {
        self.trap = Some(TrapManifest {
            v0_volts: cfg.v0,
            omega_rf_rad_per_s: cfg.omega_rf,
            u0_volts: cfg.u0,
            d_m: cfg.d,
            epsilon: cfg.epsilon,
            eta_at_d: cfg.eta_at_d().unwrap_or(f64::NAN),
            eta_dc_at_d: cfg.eta_dc_at_d().unwrap_or(f64::NAN),
            eta_is_table: matches!(cfg.eta, needletrap::trap::Efficiency::Table(_)),
        });
        self
    }

    pub fn with_particle(mut self, p: &Particle) -> Self {
        self.particle = Some(ParticleManifest {
            mass_kg: p.mass,
            charge_c: p.charge,
            charge_e: p.charge_in_e(),
            radius_m: p.radius,
            density_kg_m3: p.density,
            largest_inertia_kg_m2: p.largest_inertia,
        });
        self
    }

    pub fn with_environment(mut self, env: &Environment) -> Self {
        self.environment = Some(EnvironmentManifest {
            temperature_k: env.temperature,
            pressure_pa: env.pressure,
            damping_rate_per_s: env.damping_rate,
        });
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn input(mut self, key: &str, value: impl Into<String>) -> Self {
        self.inputs.insert(key.to_string(), value.into());
        self
    }

    pub fn output(mut self, file: &str) -> Self {
        self.outputs.push(file.to_string());
        self
    }

    pub fn parameter(mut self, key: &str, value: impl Into<toml::Value>) -> Self {
        self.parameters.insert(key.to_string(), value.into());
        self
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).context("serializing manifest")?;
        let path = out_dir.join("manifest.toml");
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
