//! Trap drive/geometry and particle data model, and the quadrupole
//! potential/field they produce.
//!
//! The time-dependent potential near the trap center is
//!
//! ```text
//! V(r, t) = [eta_dc*U0 + eta*V0*cos(Omega_rf*t)] * [2z^2 - (1-eps)y^2 - (1+eps)x^2] / d^2
//! ```
//!
//! with `V0` the zero-to-peak RF amplitude, `U0` the DC offset of the applied
//! voltage, `d` the needle separation, `eta`/`eta_dc` the voltage efficiency
//! factors (scalar or tabulated against `d`) and `eps` the radial asymmetry.
//! External stray fields are not modeled spatially; they enter only as
//! Mathieu `a`-offsets in [`crate::floquet::mathieu_params`].

use crate::constants::{DIAMOND_DENSITY, ELEMENTARY_CHARGE};
use crate::interp::MonotoneCubic;
use crate::{Error, Result};
use std::f64::consts::PI;

/// Voltage efficiency factor: a constant, or a table over needle separation.
#[derive(Clone, Debug)]
pub enum Efficiency {
    Constant(f64),
    Table(MonotoneCubic),
}

impl Efficiency {
    /// Build a tabulated efficiency from `(d, eta)` nodes (SI meters).
    /// Every node value must lie in (0, 1]; the monotone interpolant then
    /// cannot leave that interval.
    pub fn from_table(d: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        if eta.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::invalid("eta", "table values must lie in (0, 1]"));
        }
        Ok(Efficiency::Table(MonotoneCubic::new(d, eta)?))
    }

    pub fn eval(&self, d: f64) -> Result<f64> {
        match self {
            Efficiency::Constant(eta) => Ok(*eta),
            Efficiency::Table(t) => t.eval(d),
        }
    }

    /// Distance range over which the factor is defined.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Efficiency::Constant(_) => (0.0, f64::INFINITY),
            Efficiency::Table(t) => t.range(),
        }
    }
}

/// Electrode drive and geometry of the needle trap.
#[derive(Clone, Debug)]
pub struct TrapConfig {
    /// RF amplitude, zero-to-peak (V)
    pub v0: f64,
    /// RF angular frequency (rad/s)
    pub omega_rf: f64,
    /// DC offset of the applied voltage (V)
    pub u0: f64,
    /// Needle tip separation (m)
    pub d: f64,
    /// Voltage efficiency factor
    pub eta: Efficiency,
    /// DC efficiency factor; falls back to `eta` when absent
    pub eta_dc: Option<Efficiency>,
    /// Radial asymmetry factor
    pub epsilon: f64,
}

impl TrapConfig {
    pub fn new(
        v0: f64,
        omega_rf: f64,
        u0: f64,
        d: f64,
        eta: Efficiency,
        epsilon: f64,
    ) -> Result<Self> {
        let cfg = Self {
            v0,
            omega_rf,
            u0,
            d,
            eta,
            eta_dc: None,
            epsilon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_eta_dc(mut self, eta_dc: Efficiency) -> Result<Self> {
        self.eta_dc = Some(eta_dc);
        self.validate()?;
        Ok(self)
    }

    /// Same drive at a different needle separation.
    pub fn at_distance(&self, d: f64) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.d = d;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0 >= 0.0 && self.v0.is_finite()) {
            return Err(Error::invalid("v0", format!("must be >= 0, got {}", self.v0)));
        }
        if !(self.omega_rf > 0.0 && self.omega_rf.is_finite()) {
            return Err(Error::invalid(
                "omega_rf",
                format!("must be > 0, got {}", self.omega_rf),
            ));
        }
        if !self.u0.is_finite() {
            return Err(Error::invalid("u0", "must be finite"));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::invalid("d", format!("must be > 0, got {}", self.d)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(
                "epsilon",
                format!("must lie in [0, 1), got {}", self.epsilon),
            ));
        }
        let eta = self.eta.eval(self.d)?;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::invalid("eta", format!("must lie in (0, 1], got {eta}")));
        }
        if let Some(eta_dc) = &self.eta_dc {
            let e = eta_dc.eval(self.d)?;
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::invalid(
                    "eta_dc",
                    format!("must lie in (0, 1], got {e}"),
                ));
            }
        }
        Ok(())
    }

    /// η evaluated at the configured distance.
    pub fn eta_at_d(&self) -> Result<f64> {
        self.eta.eval(self.d)
    }

    /// η_DC evaluated at the configured distance (falls back to η).
    pub fn eta_dc_at_d(&self) -> Result<f64> {
        match &self.eta_dc {
            Some(e) => e.eval(self.d),
            None => self.eta.eval(self.d),
        }
    }

    /// One RF drive period, 2π/Ω_rf (s).
    pub fn rf_period(&self) -> f64 {
        2.0 * PI / self.omega_rf
    }
}

/// A trapped particle. Mass and charge are mandatory; geometry and the
/// angular-mode quantities are optional and only needed by the operations
/// that use them.
#[derive(Clone, Debug)]
pub struct Particle {
    /// Mass (kg)
    pub mass: f64,
    /// Signed total charge (C)
    pub charge: f64,
    /// Radius (m), sphere convention
    pub radius: Option<f64>,
    /// Mass density (kg/m^3); defaults to diamond when unset
    pub density: Option<f64>,
    /// Eigenvalues of the charge quadrupole tensor, ascending (C·m^2)
    pub quadrupole_eigenvalues: Option<[f64; 3]>,
    /// Largest moment of inertia (kg·m^2)
    pub largest_inertia: Option<f64>,
}

impl Particle {
    pub fn new(mass: f64, charge: f64) -> Result<Self> {
        let p = Self {
            mass,
            charge,
            radius: None,
            density: None,
            quadrupole_eigenvalues: None,
            largest_inertia: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// Uniform sphere of the given radius and density; mass follows from the
    /// sphere convention `m = (4/3) pi r^3 rho`.
    pub fn sphere(radius: f64, density: f64, charge: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("radius", format!("must be > 0, got {radius}")));
        }
        if !(density > 0.0 && density.is_finite()) {
            return Err(Error::invalid(
                "density",
                format!("must be > 0, got {density}"),
            ));
        }
        let mass = 4.0 / 3.0 * PI * radius.powi(3) * density;
        let p = Self {
            mass,
            charge,
            radius: Some(radius),
            density: Some(density),
            quadrupole_eigenvalues: None,
            largest_inertia: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_radius(mut self, radius: f64) -> Result<Self> {
        self.radius = Some(radius);
        self.validate()?;
        Ok(self)
    }

    pub fn with_density(mut self, density: f64) -> Result<Self> {
        self.density = Some(density);
        self.validate()?;
        Ok(self)
    }

    pub fn with_quadrupole_eigenvalues(mut self, q: [f64; 3]) -> Result<Self> {
        self.quadrupole_eigenvalues = Some(q);
        self.validate()?;
        Ok(self)
    }

    pub fn with_largest_inertia(mut self, inertia: f64) -> Result<Self> {
        self.largest_inertia = Some(inertia);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::invalid("mass", format!("must be > 0, got {}", self.mass)));
        }
        if !self.charge.is_finite() {
            return Err(Error::invalid("charge", "must be finite"));
        }
        if let (Some(r), Some(rho)) = (self.radius, self.density) {
            let sphere_mass = 4.0 / 3.0 * PI * r.powi(3) * rho;
            let rel = (self.mass - sphere_mass).abs() / sphere_mass;
            if rel > 1e-9 {
                return Err(Error::invalid(
                    "mass",
                    format!(
                        "inconsistent with sphere of r={r}, rho={rho}: relative mismatch {rel:.3e}"
                    ),
                ));
            }
        }
        if let Some(q) = self.quadrupole_eigenvalues {
            if !(q[0] <= q[1] && q[1] <= q[2]) {
                return Err(Error::invalid(
                    "quadrupole_eigenvalues",
                    "must be sorted ascending",
                ));
            }
            let scale = q.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let trace = q[0] + q[1] + q[2];
            if scale > 0.0 && trace.abs() > 1e-12 * scale {
                return Err(Error::invalid(
                    "quadrupole_eigenvalues",
                    format!("trace {trace:.3e} not zero at scale {scale:.3e}"),
                ));
            }
        }
        if let Some(i1) = self.largest_inertia {
            if !(i1 > 0.0 && i1.is_finite()) {
                return Err(Error::invalid("largest_inertia", "must be > 0"));
            }
        }
        Ok(())
    }

    /// Charge in units of the elementary charge.
    pub fn charge_in_e(&self) -> f64 {
        self.charge / ELEMENTARY_CHARGE
    }

    /// Density, defaulting to diamond when unset.
    pub fn density_or_default(&self) -> f64 {
        self.density.unwrap_or(DIAMOND_DENSITY)
    }
}

/// Gas environment around the particle.
#[derive(Clone, Debug)]
pub struct Environment {
    /// Temperature (K)
    pub temperature: f64,
    /// Pressure (Pa)
    pub pressure: f64,
    /// Momentum damping rate γ (1/s). When unset it is derived from
    /// pressure via the free-molecular drag closure where needed.
    pub damping_rate: Option<f64>,
}

impl Environment {
    pub fn new(temperature: f64, pressure: f64) -> Result<Self> {
        let env = Self {
            temperature,
            pressure,
            damping_rate: None,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn with_damping_rate(mut self, gamma: f64) -> Result<Self> {
        self.damping_rate = Some(gamma);
        self.validate()?;
        Ok(self)
    }

    /// Vacuum at zero temperature: no damping, no thermal force.
    pub fn vacuum() -> Self {
        Self {
            temperature: 0.0,
            pressure: 0.0,
            damping_rate: Some(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature", "must be >= 0"));
        }
        if !(self.pressure >= 0.0 && self.pressure.is_finite()) {
            return Err(Error::invalid("pressure", "must be >= 0"));
        }
        if let Some(g) = self.damping_rate {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::invalid("damping_rate", "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Trap potential (volts) at position `r = [x, y, z]` and time `t`.
///
/// With `include_dc = false` only the RF part is returned, which is exactly
/// periodic with the RF period. The stray-field term of the full potential is
/// not modeled (see module docs).
///
/// The configuration must be valid (in particular `d` inside the efficiency
/// table range); [`TrapConfig::new`] guarantees this.
pub fn potential(cfg: &TrapConfig, r: [f64; 3], t: f64, include_dc: bool) -> f64 {
    let eta = cfg
        .eta_at_d()
        .expect("trap config distance outside efficiency table");
    let mut drive = eta * cfg.v0 * (cfg.omega_rf * t).cos();
    if include_dc {
        let eta_dc = cfg
            .eta_dc_at_d()
            .expect("trap config distance outside efficiency table");
        drive += eta_dc * cfg.u0;
    }
    drive * quadratic_form(cfg.epsilon, r) / (cfg.d * cfg.d)
}

/// `2z^2 - (1-eps)y^2 - (1+eps)x^2`; traceless for every eps.
fn quadratic_form(epsilon: f64, r: [f64; 3]) -> f64 {
    let [x, y, z] = r;
    2.0 * z * z - (1.0 - epsilon) * y * y - (1.0 + epsilon) * x * x
}

/// Force on the particle (N): analytic gradient of the full potential
/// (DC term included) times the charge, `F = -Q ∇V`. Linear in each
/// coordinate and zero at the origin.
pub fn force(cfg: &TrapConfig, particle: &Particle, r: [f64; 3], t: f64) -> [f64; 3] {
    let eta = cfg
        .eta_at_d()
        .expect("trap config distance outside efficiency table");
    let eta_dc = cfg
        .eta_dc_at_d()
        .expect("trap config distance outside efficiency table");
    let drive = (eta_dc * cfg.u0 + eta * cfg.v0 * (cfg.omega_rf * t).cos()) / (cfg.d * cfg.d);
    let q = particle.charge;
    let [x, y, z] = r;
    [
        q * drive * 2.0 * (1.0 + cfg.epsilon) * x,
        q * drive * 2.0 * (1.0 - cfg.epsilon) * y,
        -q * drive * 4.0 * z,
    ]
}
