//! Trap-frequency-vs-distance analysis: a forward model ω_z(d; Q, U₀)
//! including the tabulated η(d) dependence and beyond-pseudopotential
//! corrections, and weighted least-squares estimation of the particle charge
//! and DC voltage offset from a measured scan.
//!
//! The default model uses the β² series (matching the published analysis);
//! exact mode swaps in the monodromy characteristic exponent for
//! verification. Mass is a fixed input here — it comes from the PSD peak
//! width, not from this fit.

use crate::constants::{coulomb_to_charge_e, ELEMENTARY_CHARGE};
use crate::floquet::{
    beta_series, characteristic_exponent, mathieu_params, secular_frequency, Axis,
};
use crate::optim;
use crate::trap::{Efficiency, Particle, TrapConfig};
use crate::{par, Error, Result};
use nalgebra::DVector;

/// Which β(a, q) evaluation backs the forward model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FitMode {
    /// β² series to order a¹q⁶.
    #[default]
    Series,
    /// Monodromy characteristic exponent.
    Exact,
}

/// Fixed drive, mass and efficiency tables of a frequency scan; the free
/// parameters (Q, U₀) are supplied per evaluation.
#[derive(Clone, Debug)]
pub struct ScanModel {
    /// RF amplitude, zero-to-peak (V)
    pub v0: f64,
    /// RF angular frequency (rad/s)
    pub omega_rf: f64,
    /// Radial asymmetry factor
    pub epsilon: f64,
    /// Particle mass (kg)
    pub mass: f64,
    pub eta: Efficiency,
    /// DC efficiency table; falls back to `eta` when `None`
    pub eta_dc: Option<Efficiency>,
}

/// Outcome of one forward-model evaluation.
#[derive(Clone, Copy, Debug)]
pub enum ModelFrequency {
    Stable {
        /// Axial secular frequency (rad/s)
        omega: f64,
        beta: f64,
        q_z: f64,
        a_z: f64,
    },
    Unstable {
        q_z: f64,
        a_z: f64,
    },
}

impl ModelFrequency {
    pub fn omega(&self) -> Option<f64> {
        match self {
            ModelFrequency::Stable { omega, .. } => Some(*omega),
            ModelFrequency::Unstable { .. } => None,
        }
    }
}

impl ScanModel {
    fn config_at(&self, d: f64, u0: f64) -> Result<TrapConfig> {
        let cfg = TrapConfig::new(self.v0, self.omega_rf, u0, d, self.eta.clone(), self.epsilon)?;
        match &self.eta_dc {
            Some(table) => cfg.with_eta_dc(table.clone()),
            None => Ok(cfg),
        }
    }

    /// Axial secular frequency at distance `d` for charge `charge` (C) and
    /// DC offset `u0` (V). Mathieu-unstable operating points are an explicit
    /// outcome, not an error; errors are reserved for invalid configurations
    /// (e.g. `d` outside the η table).
    pub fn frequency(&self, d: f64, charge: f64, u0: f64, mode: FitMode) -> Result<ModelFrequency> {
        let cfg = self.config_at(d, u0)?;
        let particle = Particle::new(self.mass, charge)?;
        let p = mathieu_params(&cfg, &particle, Axis::Z, 0.0)?;
        let beta = match mode {
            // the series has no notion of the true stability boundary, so a
            // result outside the fundamental zone counts as unstable
            FitMode::Series => beta_series(&p).beta().filter(|b| *b < 1.0),
            FitMode::Exact => characteristic_exponent(&p)?.beta(),
        };
        Ok(match beta {
            Some(beta) => ModelFrequency::Stable {
                omega: secular_frequency(beta, self.omega_rf),
                beta,
                q_z: p.q,
                a_z: p.a,
            },
            None => ModelFrequency::Unstable { q_z: p.q, a_z: p.a },
        })
    }
}

/// Forward model ω_z(d; Q, U₀): composes the Mathieu parameters (with η and
/// η_DC interpolated at `d`) with the series (or exact) characteristic
/// exponent and the secular frequency.
pub fn model_frequency(
    d: f64,
    charge: f64,
    u0: f64,
    model: &ScanModel,
    mode: FitMode,
) -> Result<ModelFrequency> {
    model.frequency(d, charge, u0, mode)
}

/// One measured scan point.
#[derive(Clone, Copy, Debug)]
pub struct ScanPoint {
    /// Needle separation (m)
    pub d: f64,
    /// Measured axial secular frequency (rad/s)
    pub omega: f64,
    /// Optional 1σ uncertainty (rad/s); unweighted when absent
    pub sigma_omega: Option<f64>,
}

/// A frequency-vs-distance dataset with its fixed drive and tables.
#[derive(Clone, Debug)]
pub struct FrequencyScan {
    pub points: Vec<ScanPoint>,
    pub model: ScanModel,
}

impl FrequencyScan {
    pub fn new(points: Vec<ScanPoint>, model: ScanModel) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::invalid("scan", "need at least 3 points"));
        }
        let (lo, hi) = model.eta.range();
        for (i, p) in points.iter().enumerate() {
            if !(p.d > 0.0 && p.d.is_finite()) || !(p.omega.is_finite()) {
                return Err(Error::invalid("scan", format!("non-finite point {i}")));
            }
            if p.d < lo || p.d > hi {
                return Err(Error::TableRange {
                    x: p.d,
                    min: lo,
                    max: hi,
                });
            }
            if let Some(s) = p.sigma_omega {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::invalid("scan", format!("bad sigma at point {i}")));
                }
            }
        }
        let mut ds: Vec<f64> = points.iter().map(|p| p.d).collect();
        ds.sort_by(f64::total_cmp);
        if ds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("scan", "distance values must be distinct"));
        }
        Ok(Self { points, model })
    }
}

/// Initial guess for the two free parameters.
#[derive(Clone, Copy, Debug)]
pub struct FitGuess {
    /// Charge (C)
    pub charge: f64,
    /// DC offset (V)
    pub u0: f64,
}

/// Converged fit of (Q, U₀) with curvature-based uncertainties.
#[derive(Clone, Copy, Debug)]
pub struct FitResult {
    /// Charge (C)
    pub charge: f64,
    /// DC offset (V)
    pub u0: f64,
    /// 1σ from the objective curvature at the optimum (C)
    pub charge_sigma: f64,
    /// 1σ (V)
    pub u0_sigma: f64,
    /// sqrt of the weighted sum of squared residuals
    pub residual_norm: f64,
    pub objective: f64,
    pub iterations: usize,
    pub mode: FitMode,
}

impl FitResult {
    pub fn charge_in_e(&self) -> f64 {
        coulomb_to_charge_e(self.charge)
    }

    pub fn charge_sigma_in_e(&self) -> f64 {
        coulomb_to_charge_e(self.charge_sigma)
    }
}

/// Minimize Σ[(ω_model(dᵢ) - ωᵢ)/σᵢ]² over (Q, U₀): a derivative-free
/// simplex stage followed by damped Gauss–Newton with a numerically
/// differenced Jacobian. Deterministic given inputs and guess.
///
/// Unstable model points act as constraint violations (infinite objective);
/// the initial guess must be stable. Parameter uncertainties come from the
/// local curvature (JᵀJ)⁻¹ of the weighted residuals — doubling every σᵢ
/// leaves the optimum unchanged and doubles them.
pub fn fit_scan(scan: &FrequencyScan, guess: FitGuess, mode: FitMode) -> Result<FitResult> {
    let sigmas: Vec<f64> = scan
        .points
        .iter()
        .map(|p| p.sigma_omega.unwrap_or(1.0))
        .collect();

    // parameters scaled to O(1): charge in elementary charges, u0 in volts
    let residuals = |p: &[f64]| -> Option<DVector<f64>> {
        let charge = p[0] * ELEMENTARY_CHARGE;
        let u0 = p[1];
        let rows = par::map(&scan.points, |point| {
            scan.model
                .frequency(point.d, charge, u0, mode)
                .ok()
                .and_then(|m| m.omega())
        });
        let mut r = DVector::zeros(scan.points.len());
        for (i, row) in rows.into_iter().enumerate() {
            r[i] = (row? - scan.points[i].omega) / sigmas[i];
        }
        Some(r)
    };
    let objective = |p: &[f64]| {
        residuals(p).map_or(f64::INFINITY, |r| r.norm_squared())
    };

    let x0 = [coulomb_to_charge_e(guess.charge), guess.u0];
    if !objective(&x0).is_finite() {
        return Err(Error::AllUnstable);
    }
    let steps = [0.2 * x0[0].abs().max(0.5), 0.2 * x0[1].abs().max(0.5)];
    let (coarse, coarse_f) = optim::nelder_mead(objective, &x0, &steps, 400);
    if !coarse_f.is_finite() {
        return Err(Error::AllUnstable);
    }
    let fit = optim::gauss_newton(&residuals, &coarse, 60);
    if !fit.converged {
        return Err(Error::NonConvergence(fit.iterations));
    }

    // curvature-based 1σ: covariance (JᵀJ)⁻¹ of the weighted residuals
    let jac = fit
        .jacobian
        .as_ref()
        .ok_or(Error::NonConvergence(fit.iterations))?;
    let jtj = jac.transpose() * jac;
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::invalid("fit", "singular curvature at the optimum"))?;
    let sigma_charge_e = cov[(0, 0)].max(0.0).sqrt();
    let sigma_u0 = cov[(1, 1)].max(0.0).sqrt();

    Ok(FitResult {
        charge: fit.x[0] * ELEMENTARY_CHARGE,
        u0: fit.x[1],
        charge_sigma: sigma_charge_e * ELEMENTARY_CHARGE,
        u0_sigma: sigma_u0,
        residual_norm: fit.objective.sqrt(),
        objective: fit.objective,
        iterations: fit.iterations,
        mode,
    })
}

/// One row of a frequency-vs-distance tabulation.
#[derive(Clone, Copy, Debug)]
pub struct ScanRow {
    /// Needle separation (m)
    pub d: f64,
    pub q_z: f64,
    pub a_z: f64,
    /// Secular frequency (rad/s) in the requested mode; `None` where that
    /// mode reports instability
    pub omega_z: Option<f64>,
    /// Exact (monodromy) stability flag, independent of the mode
    pub stable: bool,
}

/// Tabulate the frequency-vs-distance curve over a distance grid, flagging
/// (not dropping) Mathieu-unstable points. The stability flag always comes
/// from the monodromy oracle so the cutoff where q_z crosses the boundary is
/// exact even in series mode.
pub fn scan_distance(
    model: &ScanModel,
    charge: f64,
    u0: f64,
    distances: &[f64],
    mode: FitMode,
) -> Result<Vec<ScanRow>> {
    let rows = par::map(distances, |&d| -> Result<ScanRow> {
        let freq = model.frequency(d, charge, u0, mode)?;
        let exact = model.frequency(d, charge, u0, FitMode::Exact)?;
        Ok(match freq {
            ModelFrequency::Stable { omega, q_z, a_z, .. } => ScanRow {
                d,
                q_z,
                a_z,
                omega_z: Some(omega),
                stable: exact.omega().is_some(),
            },
            ModelFrequency::Unstable { q_z, a_z } => ScanRow {
                d,
                q_z,
                a_z,
                omega_z: None,
                stable: exact.omega().is_some(),
            },
        })
    });
    rows.into_iter().collect()
}

/// Log-spaced distance grid, inclusive of both ends.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || n < 2 {
        return Err(Error::invalid("grid", "need 0 < lo < hi and n >= 2"));
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect())
}
