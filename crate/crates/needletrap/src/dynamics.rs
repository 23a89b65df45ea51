//! Time-domain integration of particle motion under the full RF drive, with
//! optional damping and thermal noise, plus micromotion/macromotion
//! decomposition and the free-molecular drag closure.
//!
//! Each axis is integrated independently in its Mathieu form
//! `m ẍ = -m (Ω²/4)(a - 2q cos Ωt) x - m γ ẋ + F_th`, with (a, q) from
//! [`crate::floquet::mathieu_params`] so that time-domain results and Floquet
//! analysis describe the same system. The thermal force is zero-mean white
//! noise of spectral density `2 m γ k_B T` (fluctuation–dissipation pairing).
//!
//! The stepper is the BAOAB splitting: velocity-Verlet drift/kick halves
//! around an exact Ornstein–Uhlenbeck update. For additive noise it is
//! strongly convergent at order 1, and with γ = 0, T = 0 it reduces exactly
//! to velocity Verlet, recovering the deterministic Mathieu dynamics.

use crate::constants::{AIR_MOLECULE_MASS, EPSTEIN_DIFFUSE_K, K_B};
use crate::floquet::{mathieu_params, Axis};
use crate::trap::{Environment, Particle, TrapConfig};
use crate::{par, Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use std::f64::consts::PI;

/// Initial position (m) and velocity (m/s) per axis, ordered x, y, z.
#[derive(Clone, Copy, Debug, Default)]
pub struct InitialState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

impl InitialState {
    /// A single-axis initial displacement at rest.
    pub fn displaced(axis: Axis, x0: f64) -> Self {
        let mut s = Self::default();
        s.position[axis_index(axis)] = x0;
        s
    }
}

fn axis_index(axis: Axis) -> usize {
    match axis {
        Axis::X => 0,
        Axis::Y => 1,
        Axis::Z => 2,
        Axis::Alpha => panic!("libration axis has no translational state"),
    }
}

/// Integration controls. `dt` must satisfy `dt <= 2π/(50 Ω_rf)`.
#[derive(Clone, Debug)]
pub struct IntegrationOptions {
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    /// Keep every k-th step in the output grid (the integrator always steps
    /// at `dt`).
    pub sample_every: usize,
    /// Axes to integrate; `None` means all three.
    pub axes: Option<Vec<Axis>>,
}

impl IntegrationOptions {
    pub fn new(duration: f64, dt: f64, seed: u64) -> Self {
        Self {
            duration,
            dt,
            seed,
            sample_every: 1,
            axes: None,
        }
    }

    pub fn with_sample_every(mut self, k: usize) -> Self {
        self.sample_every = k;
        self
    }

    pub fn with_axes(mut self, axes: Vec<Axis>) -> Self {
        self.axes = Some(axes);
        self
    }
}

/// Sampled state of one axis.
#[derive(Clone, Debug)]
pub struct AxisSeries {
    pub axis: Axis,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
}

/// Uniformly sampled trajectory with run metadata.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Sample spacing of the stored grid (s).
    pub dt: f64,
    pub series: Vec<AxisSeries>,
    pub config: TrapConfig,
    pub particle: Particle,
    pub environment: Environment,
    pub seed: u64,
}

impl Trajectory {
    pub fn sample_count(&self) -> usize {
        self.series.first().map_or(0, |s| s.position.len())
    }

    pub fn duration(&self) -> f64 {
        (self.sample_count().saturating_sub(1)) as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.sample_count()).map(move |i| i as f64 * self.dt)
    }

    pub fn axis(&self, axis: Axis) -> Option<&AxisSeries> {
        self.series.iter().find(|s| s.axis == axis)
    }

    /// Micromotion decomposition of one stored axis.
    pub fn decompose(&self, axis: Axis) -> Result<Decomposition> {
        let series = self
            .axis(axis)
            .ok_or_else(|| Error::invalid("axis", format!("{axis} was not integrated")))?;
        decompose(&series.position, self.dt, self.config.omega_rf)
    }
}

/// Result of an integration: either the full requested duration, or a
/// truncated trajectory with the time at which the motion blew up.
#[derive(Clone, Debug)]
pub enum IntegrationOutcome {
    Completed(Trajectory),
    Escaped {
        trajectory: Trajectory,
        escape_time: f64,
        axis: Axis,
    },
}

impl IntegrationOutcome {
    pub fn trajectory(&self) -> &Trajectory {
        match self {
            IntegrationOutcome::Completed(t) => t,
            IntegrationOutcome::Escaped { trajectory, .. } => trajectory,
        }
    }

    pub fn is_escaped(&self) -> bool {
        matches!(self, IntegrationOutcome::Escaped { .. })
    }

    /// Unwrap a completed trajectory, erroring on escape.
    pub fn completed(self) -> Result<Trajectory> {
        match self {
            IntegrationOutcome::Completed(t) => Ok(t),
            IntegrationOutcome::Escaped { escape_time, axis, .. } => Err(Error::invalid(
                "trajectory",
                format!("motion escaped on axis {axis} at t = {escape_time:.6e} s"),
            )),
        }
    }
}

/// Escape threshold relative to the initial amplitude scale of each axis.
pub const ESCAPE_FACTOR: f64 = 1e6;

/// Integrate the driven, damped, thermal equations of motion.
///
/// Reproducible: identical inputs and seed give bit-identical trajectories.
/// Escape (|x| beyond [`ESCAPE_FACTOR`] times the initial amplitude scale, or
/// non-finite state) terminates integration with an
/// [`IntegrationOutcome::Escaped`] rather than an error.
pub fn integrate(
    cfg: &TrapConfig,
    particle: &Particle,
    env: &Environment,
    init: &InitialState,
    opts: &IntegrationOptions,
) -> Result<IntegrationOutcome> {
    integrate_stream(cfg, particle, env, init, opts, 0)
}

/// Ensemble of trajectories over independent noise streams derived from
/// `opts.seed`; run k uses stream k. Runs execute in parallel with the
/// `parallel` feature and are collected in run order.
pub fn integrate_ensemble(
    cfg: &TrapConfig,
    particle: &Particle,
    env: &Environment,
    init: &InitialState,
    opts: &IntegrationOptions,
    runs: usize,
) -> Result<Vec<IntegrationOutcome>> {
    let outcomes = par::map_range(runs, |k| {
        integrate_stream(cfg, particle, env, init, opts, k as u64)
    });
    outcomes.into_iter().collect()
}

fn integrate_stream(
    cfg: &TrapConfig,
    particle: &Particle,
    env: &Environment,
    init: &InitialState,
    opts: &IntegrationOptions,
    stream: u64,
) -> Result<IntegrationOutcome> {
    cfg.validate()?;
    particle.validate()?;
    env.validate()?;
    let omega = cfg.omega_rf;
    let dt = opts.dt;
    if !(dt > 0.0) || dt > 2.0 * PI / (50.0 * omega) {
        return Err(Error::invalid(
            "dt",
            format!("must satisfy 0 < dt <= 2π/(50 Ω_rf) = {:.3e}", 2.0 * PI / (50.0 * omega)),
        ));
    }
    if opts.sample_every == 0 {
        return Err(Error::invalid("sample_every", "must be >= 1"));
    }
    let n_steps = (opts.duration / dt).round() as usize;
    if n_steps < opts.sample_every {
        return Err(Error::invalid(
            "duration",
            "too short: fewer than two output samples",
        ));
    }

    let axes = opts
        .axes
        .clone()
        .unwrap_or_else(|| vec![Axis::X, Axis::Y, Axis::Z]);
    if axes.is_empty() || axes.contains(&Axis::Alpha) {
        return Err(Error::invalid("axes", "need a non-empty set of x/y/z axes"));
    }

    // per-axis Mathieu coefficients; acceleration is
    // -(Ω²/4)(a - 2q cosΩt) x
    let quarter_omega_sq = omega * omega / 4.0;
    let coeffs: Vec<(usize, f64, f64)> = axes
        .iter()
        .map(|&axis| {
            let p = mathieu_params(cfg, particle, axis, 0.0)?;
            Ok((axis_index(axis), p.a, p.q))
        })
        .collect::<Result<_>>()?;

    let gamma = resolve_damping(env, particle)?;
    let temperature = env.temperature;
    let c1 = (-gamma * dt).exp();
    let c2 = if gamma > 0.0 && temperature > 0.0 {
        (K_B * temperature / particle.mass * (1.0 - c1 * c1)).sqrt()
    } else {
        0.0
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(stream);
    let normal = StandardNormal;

    let mut x = init.position;
    let mut v = init.velocity;
    // escape thresholds from the initial amplitude scale; axes started at
    // rest at the origin only escape on non-finite values
    let thresholds: Vec<f64> = coeffs
        .iter()
        .map(|&(i, _, _)| {
            let scale = x[i].abs() + v[i].abs() * 2.0 / omega;
            if scale > 0.0 {
                ESCAPE_FACTOR * scale
            } else {
                f64::INFINITY
            }
        })
        .collect();

    let n_samples = 1 + n_steps / opts.sample_every;
    let mut series: Vec<AxisSeries> = coeffs
        .iter()
        .zip(&axes)
        .map(|(&(i, _, _), &axis)| AxisSeries {
            axis,
            position: Vec::with_capacity(n_samples),
            velocity: {
                let mut v_out = Vec::with_capacity(n_samples);
                v_out.push(v[i]);
                v_out
            },
        })
        .collect();
    for (s, &(i, _, _)) in series.iter_mut().zip(&coeffs) {
        s.position.push(x[i]);
    }

    let accel = |a: f64, q: f64, cos_wt: f64, xi: f64| -> f64 {
        -quarter_omega_sq * (a - 2.0 * q * cos_wt) * xi
    };

    let mut cos_now = 1.0; // cos(Ω·0)
    let mut escape: Option<(f64, Axis)> = None;

    'steps: for step in 0..n_steps {
        let t_next = (step + 1) as f64 * dt;
        let cos_next = (omega * t_next).cos();

        // BAOAB: half kick, half drift, OU, half drift, half kick
        for &(i, a, q) in &coeffs {
            v[i] += 0.5 * dt * accel(a, q, cos_now, x[i]);
            x[i] += 0.5 * dt * v[i];
            if c2 > 0.0 {
                let xi: f64 = normal.sample(&mut rng);
                v[i] = c1 * v[i] + c2 * xi;
            } else if gamma > 0.0 {
                v[i] *= c1;
            }
            x[i] += 0.5 * dt * v[i];
            v[i] += 0.5 * dt * accel(a, q, cos_next, x[i]);
        }
        cos_now = cos_next;

        for (k, &(i, _, _)) in coeffs.iter().enumerate() {
            if !x[i].is_finite() || !v[i].is_finite() || x[i].abs() > thresholds[k] {
                escape = Some((t_next, series[k].axis));
                break 'steps;
            }
        }

        if (step + 1) % opts.sample_every == 0 {
            for (s, &(i, _, _)) in series.iter_mut().zip(&coeffs) {
                s.position.push(x[i]);
                s.velocity.push(v[i]);
            }
        }
    }

    let trajectory = Trajectory {
        dt: dt * opts.sample_every as f64,
        series,
        config: cfg.clone(),
        particle: particle.clone(),
        environment: env.clone(),
        seed: opts.seed,
    };
    Ok(match escape {
        None => IntegrationOutcome::Completed(trajectory),
        Some((escape_time, axis)) => IntegrationOutcome::Escaped {
            trajectory,
            escape_time,
            axis,
        },
    })
}

fn resolve_damping(env: &Environment, particle: &Particle) -> Result<f64> {
    match env.damping_rate {
        Some(g) => Ok(g),
        None if env.pressure == 0.0 => Ok(0.0),
        None => damping_from_pressure(env, particle),
    }
}

/// Free-molecular momentum damping rate `γ = K P / (ρ_p r v_th)` with
/// `v_th = sqrt(8 k_B T / (π m_gas))` the mean thermal speed of the gas.
///
/// Uses the Epstein diffuse-reflection accommodation coefficient
/// [`EPSTEIN_DIFFUSE_K`] and air as the gas; see
/// [`damping_from_pressure_with`] to override either.
pub fn damping_from_pressure(env: &Environment, particle: &Particle) -> Result<f64> {
    damping_from_pressure_with(env, particle, EPSTEIN_DIFFUSE_K, AIR_MOLECULE_MASS)
}

pub fn damping_from_pressure_with(
    env: &Environment,
    particle: &Particle,
    accommodation: f64,
    gas_molecule_mass: f64,
) -> Result<f64> {
    let radius = particle
        .radius
        .ok_or_else(|| Error::invalid("radius", "required for pressure-derived damping"))?;
    let density = particle.density.unwrap_or_else(|| particle.density_or_default());
    if !(radius > 0.0 && density > 0.0) {
        return Err(Error::invalid("particle", "radius and density must be > 0"));
    }
    if !(env.temperature > 0.0) {
        return Err(Error::invalid(
            "temperature",
            "must be > 0 for the thermal gas speed",
        ));
    }
    let v_th = (8.0 * K_B * env.temperature / (PI * gas_molecule_mass)).sqrt();
    Ok(accommodation * env.pressure / (density * radius * v_th))
}

/// Spectral split of a stable trajectory into macromotion at the secular
/// frequency and micromotion sidebands at Ω_rf ± ω.
#[derive(Clone, Copy, Debug)]
pub struct Decomposition {
    /// Estimated secular frequency (rad/s).
    pub secular_frequency: f64,
    /// Carrier amplitude at the secular frequency (signal units).
    pub macromotion_amplitude: f64,
    /// Amplitude of the Ω - ω sideband.
    pub lower_sideband: f64,
    /// Amplitude of the Ω + ω sideband.
    pub upper_sideband: f64,
    /// Sideband-to-carrier amplitude ratio; q/2 to leading order.
    pub micromotion_ratio: f64,
}

/// Decompose a uniformly sampled position series into secular carrier and
/// micromotion sidebands.
///
/// The carrier is located by FFT below Ω/2 and refined by maximizing the
/// single-tone least-squares power; amplitudes then come from a joint
/// least-squares fit of the tones nΩ + ω, n = -2..2, which accounts for
/// finite-record leakage between them exactly.
pub fn decompose(position: &[f64], dt: f64, omega_rf: f64) -> Result<Decomposition> {
    if !(omega_rf > 0.0) || !(dt > 0.0) {
        return Err(Error::invalid("decompose", "dt and omega_rf must be > 0"));
    }
    let n = position.len();
    let span = (n.saturating_sub(1)) as f64 * dt;
    let rf_period = 2.0 * PI / omega_rf;
    if span < 20.0 * rf_period {
        return Err(Error::SeriesTooShort(format!(
            "{:.1} RF periods covered, need >= 20",
            span / rf_period
        )));
    }
    let mean = position.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = position.iter().map(|x| x - mean).collect();
    let variance = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if variance == 0.0 {
        return Err(Error::NoPeak { factor: 1.0 });
    }

    let f_rf = omega_rf / (2.0 * PI);
    let fs = 1.0 / dt;
    let coarse = coarse_peak_frequency(&centered, fs, 0.499 * f_rf)?;
    let bin = fs / (centered.len().min(1 << 20) as f64);
    let f_secular = refine_tone(&centered, dt, (coarse - bin).max(bin * 0.1), coarse + bin);

    // joint least squares over the tone family |nΩ + ω| plus a constant
    // (a negative-frequency cosine is the same tone at |f|)
    let tones: Vec<f64> = (-2..=2)
        .map(|k| (k as f64 * f_rf + f_secular).abs())
        .filter(|f| *f > 0.0 && *f < 0.49 * fs)
        .collect();
    let amplitudes = tone_amplitudes(&centered, dt, &tones);

    let amp_at = |f_target: f64| -> f64 {
        tones
            .iter()
            .zip(&amplitudes)
            .find(|(f, _)| (**f - f_target).abs() < 1e-6 * f_rf)
            .map(|(_, a)| *a)
            .unwrap_or(0.0)
    };
    let carrier = amp_at(f_secular);
    let lower = amp_at(f_secular - f_rf).max(amp_at(f_rf - f_secular));
    let upper = amp_at(f_secular + f_rf);

    // a real secular line carries a macroscopic share of the signal power
    if carrier * carrier / 2.0 < 0.01 * variance {
        return Err(Error::NoPeak { factor: 1.0 });
    }

    Ok(Decomposition {
        secular_frequency: 2.0 * PI * f_secular,
        macromotion_amplitude: carrier,
        lower_sideband: lower,
        upper_sideband: upper,
        micromotion_ratio: (lower + upper) / carrier,
    })
}

/// FFT argmax below `f_max` on a power-of-two prefix of the series.
fn coarse_peak_frequency(series: &[f64], fs: f64, f_max: f64) -> Result<f64> {
    // largest power of two that fits, capped at 2^20 samples
    let cap = series.len().min(1 << 20);
    let mut n_fft = 16;
    while n_fft * 2 <= cap {
        n_fft *= 2;
    }
    let mut buf: Vec<Complex<f64>> = series[..n_fft]
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            // Hann window for leakage control in the coarse search
            let w = 0.5 * (1.0 - (2.0 * PI * k as f64 / n_fft as f64).cos());
            Complex::new(x * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    let df = fs / n_fft as f64;
    let k_max = ((f_max / df) as usize).min(n_fft / 2);
    let (k_peak, power) = buf[1..k_max]
        .iter()
        .enumerate()
        .map(|(i, c)| (i + 1, c.norm_sqr()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::NoPeak { factor: 1.0 })?;
    if power == 0.0 {
        return Err(Error::NoPeak { factor: 1.0 });
    }
    Ok(k_peak as f64 * df)
}

/// Golden-section maximization of single-tone least-squares power.
fn refine_tone(series: &[f64], dt: f64, f_lo: f64, f_hi: f64) -> f64 {
    let power = |f: f64| -> f64 {
        let a = tone_amplitudes(series, dt, &[f]);
        a[0] * a[0]
    };
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (f_lo, f_hi);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut p1, mut p2) = (power(x1), power(x2));
    for _ in 0..60 {
        if p1 < p2 {
            lo = x1;
            x1 = x2;
            p1 = p2;
            x2 = lo + phi * (hi - lo);
            p2 = power(x2);
        } else {
            hi = x2;
            x2 = x1;
            p2 = p1;
            x1 = hi - phi * (hi - lo);
            p1 = power(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Least-squares amplitudes of cos/sin pairs at the given frequencies
/// (plus a fitted constant), solved jointly via the normal equations.
fn tone_amplitudes(series: &[f64], dt: f64, freqs: &[f64]) -> Vec<f64> {
    let m = 2 * freqs.len() + 1;
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    let mut row = vec![0.0; m];
    for (k, &x) in series.iter().enumerate() {
        let t = k as f64 * dt;
        row[0] = 1.0;
        for (j, &f) in freqs.iter().enumerate() {
            let (s, c) = (2.0 * PI * f * t).sin_cos();
            row[1 + 2 * j] = c;
            row[2 + 2 * j] = s;
        }
        for i in 0..m {
            for j in i..m {
                gram[(i, j)] += row[i] * row[j];
            }
            rhs[i] += row[i] * x;
        }
    }
    for i in 0..m {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    let solution = gram
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .unwrap_or_else(|| DVector::zeros(m));
    freqs
        .iter()
        .enumerate()
        .map(|(j, _)| solution[1 + 2 * j].hypot(solution[2 + 2 * j]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::ELEMENTARY_CHARGE;
    use crate::floquet::{
        characteristic_exponent, secular_frequency, solve_floquet, FloquetOutcome,
    };
    use crate::trap::Efficiency;
    use approx::assert_relative_eq;

    /// Drive giving a chosen (a_z, q_z) for a unit test particle.
    fn cfg_for(a_z: f64, q_z: f64, omega_rf: f64) -> (TrapConfig, Particle) {
        let mass = 1e-18;
        let charge = 10.0 * ELEMENTARY_CHARGE;
        let d = 100e-6;
        let eta = 0.25;
        let denom = d * d * omega_rf * omega_rf * mass;
        let v0 = q_z * denom / (8.0 * eta * charge);
        let u0 = -a_z * denom / (16.0 * eta * charge);
        let cfg = TrapConfig::new(v0, omega_rf, u0, d, Efficiency::Constant(eta), 0.0).unwrap();
        let p = Particle::new(mass, charge).unwrap();
        (cfg, p)
    }

    #[test]
    fn config_helper_reproduces_targets() {
        let (cfg, p) = cfg_for(0.02, 0.3, 2.0 * PI * 100e3);
        let z = mathieu_params(&cfg, &p, Axis::Z, 0.0).unwrap();
        assert_relative_eq!(z.a, 0.02, max_relative = 1e-12);
        assert_relative_eq!(z.q, 0.3, max_relative = 1e-12);
    }

    #[test]
    fn secular_frequency_from_zero_crossings() {
        // γ=0, T=0, a=0, q=0.3: zero-crossing frequency matches βΩ/2 to 0.5%
        let omega_rf = 2.0 * PI * 100e3;
        let (cfg, p) = cfg_for(0.0, 0.3, omega_rf);
        let z = mathieu_params(&cfg, &p, Axis::Z, 0.0).unwrap();
        let beta = characteristic_exponent(&z).unwrap().beta().unwrap();
        let expected = secular_frequency(beta, omega_rf);

        let n_secular = 50.0;
        let duration = n_secular * 2.0 * PI / expected;
        let dt = cfg.rf_period() / 200.0;
        let opts = IntegrationOptions::new(duration, dt, 0).with_axes(vec![Axis::Z]);
        let init = InitialState::displaced(Axis::Z, 1e-6);
        let traj = integrate(&cfg, &p, &Environment::vacuum(), &init, &opts)
            .unwrap()
            .completed()
            .unwrap();

        let x = &traj.axis(Axis::Z).unwrap().position;
        let mut crossings = Vec::new();
        for i in 1..x.len() {
            if x[i - 1] < 0.0 && x[i] >= 0.0 {
                let frac = -x[i - 1] / (x[i] - x[i - 1]);
                crossings.push((i as f64 - 1.0 + frac) * traj.dt);
            }
        }
        assert!(crossings.len() > 10);
        let span = crossings.last().unwrap() - crossings.first().unwrap();
        let omega_est = 2.0 * PI * (crossings.len() - 1) as f64 / span;
        assert_relative_eq!(omega_est, expected, max_relative = 5e-3);
    }

    #[test]
    fn static_harmonic_energy_conserved() {
        // γ=0, T=0, q=0, a>0: energy conserved to 1e-6 over 100 periods
        let omega_rf = 2.0 * PI * 100e3;
        let (cfg, p) = cfg_for(0.04, 0.0, omega_rf);
        let omega_sec = 0.2 * omega_rf / 2.0;
        let period = 2.0 * PI / omega_sec;
        let dt = 1.5e-3 / omega_sec;
        let opts =
            IntegrationOptions::new(100.0 * period, dt, 0).with_axes(vec![Axis::Z]);
        let init = InitialState::displaced(Axis::Z, 2e-6);
        let traj = integrate(&cfg, &p, &Environment::vacuum(), &init, &opts)
            .unwrap()
            .completed()
            .unwrap();
        let s = traj.axis(Axis::Z).unwrap();
        let energy = |x: f64, v: f64| 0.5 * v * v + 0.5 * omega_sec * omega_sec * x * x;
        let e0 = energy(s.position[0], s.velocity[0]);
        for (&x, &v) in s.position.iter().zip(&s.velocity) {
            let rel = (energy(x, v) - e0).abs() / e0;
            assert!(rel < 1e-6, "energy drift {rel:.2e}");
        }
    }

    #[test]
    fn unstable_point_escapes() {
        let omega_rf = 2.0 * PI * 100e3;
        let (cfg, p) = cfg_for(0.0, 1.0, omega_rf);
        let opts = IntegrationOptions::new(2000.0 * cfg.rf_period(), cfg.rf_period() / 100.0, 0)
            .with_axes(vec![Axis::Z]);
        let init = InitialState::displaced(Axis::Z, 1e-7);
        let out = integrate(&cfg, &p, &Environment::vacuum(), &init, &opts).unwrap();
        match out {
            IntegrationOutcome::Escaped { escape_time, axis, .. } => {
                assert!(escape_time > 0.0);
                assert_eq!(axis, Axis::Z);
            }
            IntegrationOutcome::Completed(_) => panic!("q = 1.0 should escape"),
        }
    }

    #[test]
    fn trajectory_matches_floquet_reconstruction() {
        // deterministic Mathieu trajectory vs. closed-form Floquet series
        let omega_rf = 2.0 * PI * 100e3;
        let (cfg, p) = cfg_for(0.0, 0.3, omega_rf);
        let z = mathieu_params(&cfg, &p, Axis::Z, 0.0).unwrap();
        let FloquetOutcome::Stable(sol) = solve_floquet(&z).unwrap() else {
            panic!("stable point")
        };
        let x0 = 1.2e-6;
        let v0 = 3.0e-3;
        let mode = sol.mode(x0, v0, omega_rf);

        let secular = secular_frequency(sol.beta, omega_rf);
        let duration = 20.0 * 2.0 * PI / secular;
        // phase error accumulates as Ω_c t (Ω_c dt)²/24 per spectral
        // component; 12000 steps per RF period keeps the sideband terms
        // below the 1e-6 RMS target over 20 secular periods
        let dt = cfg.rf_period() / 12000.0;
        let opts = IntegrationOptions::new(duration, dt, 7)
            .with_axes(vec![Axis::Z])
            .with_sample_every(16);
        let init = InitialState {
            position: [0.0, 0.0, x0],
            velocity: [0.0, 0.0, v0],
        };
        let traj = integrate(&cfg, &p, &Environment::vacuum(), &init, &opts)
            .unwrap()
            .completed()
            .unwrap();
        let s = traj.axis(Axis::Z).unwrap();
        let mut err_sq = 0.0;
        let mut norm_sq = 0.0;
        for (i, &x) in s.position.iter().enumerate() {
            let t = i as f64 * traj.dt;
            let x_ref = mode.position(t);
            err_sq += (x - x_ref) * (x - x_ref);
            norm_sq += x_ref * x_ref;
        }
        let rel_rms = (err_sq / norm_sq).sqrt();
        assert!(rel_rms < 1e-6, "relative RMS {rel_rms:.2e}");
    }

    #[test]
    fn damped_envelope_decays_at_half_gamma() {
        let omega_rf = 2.0 * PI * 100e3;
        let (cfg, p) = cfg_for(0.04, 0.0, omega_rf);
        let gamma = 2.0 * PI * 300.0;
        let env = Environment::new(0.0, 0.0).unwrap().with_damping_rate(gamma).unwrap();
        let duration = 6.0 / gamma;
        let dt = 2.0 * PI / omega_rf / 60.0;
        let opts = IntegrationOptions::new(duration, dt, 0).with_axes(vec![Axis::Z]);
        let init = InitialState::displaced(Axis::Z, 1e-6);
        let traj = integrate(&cfg, &p, &env, &init, &opts)
            .unwrap()
            .completed()
            .unwrap();
        let s = traj.axis(Axis::Z).unwrap();
        // local |extrema| against the predicted envelope
        let mut worst: f64 = 0.0;
        for i in 1..s.position.len() - 1 {
            let (a, b, c) = (s.position[i - 1], s.position[i], s.position[i + 1]);
            if (b.abs() > a.abs()) && (b.abs() > c.abs()) {
                let t = i as f64 * traj.dt;
                if t < 0.5 / gamma {
                    continue; // skip start-up transient
                }
                let predicted = 1e-6 * (-gamma * t / 2.0).exp();
                worst = worst.max((b.abs() - predicted).abs() / predicted);
            }
        }
        assert!(worst < 0.05, "envelope deviation {worst:.3}");
    }

    #[test]
    fn thermal_variance_matches_equipartition() {
        // pseudopotential-equivalent oscillator: q = 0, a chosen for ω;
        // long-run ⟨x²⟩ = k_B T / (m ω²) within 5% over an ensemble
        let omega_rf = 2.0 * PI * 50e3;
        let (cfg, p) = cfg_for(0.16, 0.0, omega_rf);
        let omega_sec = 0.4 * omega_rf / 2.0; // 2π·10 kHz
        let temperature = 300.0;
        let gamma = 2.0 * PI * 500.0;
        let env = Environment::new(temperature, 0.0)
            .unwrap()
            .with_damping_rate(gamma)
            .unwrap();
        let duration = 60e-3;
        let dt = 2.0 * PI / omega_rf / 50.0;
        let opts = IntegrationOptions::new(duration, dt, 42)
            .with_axes(vec![Axis::Z])
            .with_sample_every(10);
        let init = InitialState::default();
        let outcomes =
            integrate_ensemble(&cfg, &p, &env, &init, &opts, 32).unwrap();
        let mut acc = 0.0;
        let mut count = 0usize;
        for out in &outcomes {
            let traj = out.trajectory();
            let s = traj.axis(Axis::Z).unwrap();
            // discard the first 5/γ of transient
            let skip = (5.0 / gamma / traj.dt) as usize;
            for &x in &s.position[skip..] {
                acc += x * x;
                count += 1;
            }
        }
        let measured = acc / count as f64;
        let expected = K_B * temperature / (p.mass * omega_sec * omega_sec);
        assert_relative_eq!(measured, expected, max_relative = 0.05);
    }

    #[test]
    fn identical_seeds_bitwise_identical() {
        let omega_rf = 2.0 * PI * 100e3;
        let (cfg, p) = cfg_for(0.04, 0.2, omega_rf);
        let env = Environment::new(300.0, 0.0)
            .unwrap()
            .with_damping_rate(2e3)
            .unwrap();
        let opts = IntegrationOptions::new(200.0 * cfg.rf_period(), cfg.rf_period() / 60.0, 99);
        let init = InitialState::displaced(Axis::Z, 1e-6);
        let a = integrate(&cfg, &p, &env, &init, &opts).unwrap();
        let b = integrate(&cfg, &p, &env, &init, &opts).unwrap();
        let (ta, tb) = (a.trajectory(), b.trajectory());
        for (sa, sb) in ta.series.iter().zip(&tb.series) {
            assert_eq!(sa.position, sb.position);
            assert_eq!(sa.velocity, sb.velocity);
        }
        // different seed differs
        let mut opts2 = opts.clone();
        opts2.seed = 100;
        let c = integrate(&cfg, &p, &env, &init, &opts2).unwrap();
        assert_ne!(
            c.trajectory().axis(Axis::Z).unwrap().position,
            ta.axis(Axis::Z).unwrap().position
        );
    }

    #[test]
    fn micromotion_ratio_near_q_half() {
        let omega_rf = 2.0 * PI * 100e3;
        for q in [0.1, 0.3] {
            let (cfg, p) = cfg_for(0.0, q, omega_rf);
            let z = mathieu_params(&cfg, &p, Axis::Z, 0.0).unwrap();
            let beta = characteristic_exponent(&z).unwrap().beta().unwrap();
            let secular = secular_frequency(beta, omega_rf);
            let duration = 120.0 * 2.0 * PI / secular;
            let dt = cfg.rf_period() / 1000.0;
            let opts = IntegrationOptions::new(duration, dt, 0)
                .with_axes(vec![Axis::Z])
                .with_sample_every(20);
            let init = InitialState::displaced(Axis::Z, 1e-6);
            let traj = integrate(&cfg, &p, &Environment::vacuum(), &init, &opts)
                .unwrap()
                .completed()
                .unwrap();
            let dec = traj.decompose(Axis::Z).unwrap();
            let rel = (dec.micromotion_ratio - q / 2.0).abs() / (q / 2.0);
            assert!(rel < 0.05, "q={q}: ratio {} vs q/2 {}", dec.micromotion_ratio, q / 2.0);
            assert_relative_eq!(dec.secular_frequency, secular, max_relative = 1e-3);
        }
    }

    #[test]
    fn micromotion_ratio_breaks_down_at_large_q() {
        // at q = 0.75 the exact ratio exceeds q/2 by far more than 2%
        let omega_rf = 2.0 * PI * 100e3;
        let (cfg, p) = cfg_for(0.0, 0.75, omega_rf);
        let z = mathieu_params(&cfg, &p, Axis::Z, 0.0).unwrap();
        let beta = characteristic_exponent(&z).unwrap().beta().unwrap();
        let secular = secular_frequency(beta, omega_rf);
        let duration = 120.0 * 2.0 * PI / secular;
        let dt = cfg.rf_period() / 1000.0;
        let opts = IntegrationOptions::new(duration, dt, 0)
            .with_axes(vec![Axis::Z])
            .with_sample_every(20);
        let init = InitialState::displaced(Axis::Z, 1e-6);
        let traj = integrate(&cfg, &p, &Environment::vacuum(), &init, &opts)
            .unwrap()
            .completed()
            .unwrap();
        let dec = traj.decompose(Axis::Z).unwrap();
        assert!((dec.micromotion_ratio - 0.375).abs() / 0.375 > 0.02);
    }

    #[test]
    fn decompose_rejects_short_series() {
        let series = vec![0.0; 100];
        let err = decompose(&series, 1e-8, 2.0 * PI * 100e3).unwrap_err();
        assert!(matches!(err, Error::SeriesTooShort(_)));
    }

    #[test]
    fn damping_closure_scalings() {
        let p = Particle::sphere(26.25e-9, 3500.0, ELEMENTARY_CHARGE).unwrap();
        let env1 = Environment::new(300.0, 26.6644).unwrap();
        let env2 = Environment::new(300.0, 2.0 * 26.6644).unwrap();
        let g1 = damping_from_pressure(&env1, &p).unwrap();
        let g2 = damping_from_pressure(&env2, &p).unwrap();
        assert_relative_eq!(g2, 2.0 * g1, max_relative = 1e-12);

        let p_big = Particle::sphere(2.0 * 26.25e-9, 3500.0, ELEMENTARY_CHARGE).unwrap();
        let g_big = damping_from_pressure(&env1, &p_big).unwrap();
        assert_relative_eq!(g_big, g1 / 2.0, max_relative = 1e-12);

        // pinned regression: 0.2 Torr, 52.5 nm diameter diamond, 300 K with
        // the Epstein diffuse K
        assert_relative_eq!(g1, 2198.155, max_relative = 1e-4);

        let no_radius = Particle::new(1e-18, 0.0).unwrap();
        assert!(damping_from_pressure(&env1, &no_radius).is_err());
    }
}
