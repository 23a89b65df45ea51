//! Mathieu-equation machinery.
//!
//! Each decoupled motional axis obeys `x'' + (a - 2q cos 2τ) x = 0` with
//! τ = Ω_rf t / 2. This module computes the stability parameters (a, q) from a
//! trap configuration, the characteristic exponent β both exactly (monodromy
//! matrix over one drive period) and via the q⁶ series expansion, the Floquet
//! coefficients c₂ₙ of the stable solution, secular frequencies, and
//! stability maps/boundaries over the (a, q) plane.

use crate::trap::{Particle, TrapConfig};
use crate::{par, Error, Result};
use std::f64::consts::PI;

/// Motional axis label. `Alpha` is the angular (libration) mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
    Alpha,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::X => write!(f, "x"),
            Axis::Y => write!(f, "y"),
            Axis::Z => write!(f, "z"),
            Axis::Alpha => write!(f, "alpha"),
        }
    }
}

/// Dimensionless Mathieu stability parameters for one axis.
#[derive(Clone, Copy, Debug)]
pub struct MathieuParams {
    pub a: f64,
    pub q: f64,
    pub axis: Axis,
}

impl MathieuParams {
    pub fn new(a: f64, q: f64, axis: Axis) -> Result<Self> {
        if !a.is_finite() || !q.is_finite() {
            return Err(Error::invalid("mathieu_params", "a and q must be finite"));
        }
        Ok(Self { a, q, axis })
    }
}

/// Stability parameters of a center-of-mass axis:
///
/// ```text
/// q_z = 8 η V0 Q / (d² Ω² m)           a_z = -16 η_DC U0 Q / (d² Ω² m) + a_ext
/// q_x,y = -(1±ε) q_z / 2               a_x,y = -(1±ε) (a_z - a_ext_z) / 2 + a_ext
/// ```
///
/// with η, η_DC evaluated at the configured distance. `a_ext` is the stray
/// static-field offset acting on the requested axis (zero for an unperturbed
/// trap).
pub fn mathieu_params(
    cfg: &TrapConfig,
    particle: &Particle,
    axis: Axis,
    a_ext: f64,
) -> Result<MathieuParams> {
    if axis == Axis::Alpha {
        return Err(Error::invalid(
            "axis",
            "libration parameters come from libration_mode, not mathieu_params",
        ));
    }
    if !(particle.mass > 0.0) {
        return Err(Error::invalid("mass", "must be > 0"));
    }
    if !a_ext.is_finite() {
        return Err(Error::invalid("a_ext", "must be finite"));
    }
    let eta = cfg.eta_at_d()?;
    let eta_dc = cfg.eta_dc_at_d()?;
    let denom = cfg.d * cfg.d * cfg.omega_rf * cfg.omega_rf * particle.mass;
    let q_z = 8.0 * eta * cfg.v0 * particle.charge / denom;
    let a_dc = -16.0 * eta_dc * cfg.u0 * particle.charge / denom;
    let (a, q) = match axis {
        Axis::Z => (a_dc + a_ext, q_z),
        Axis::X => (
            -(1.0 + cfg.epsilon) * a_dc / 2.0 + a_ext,
            -(1.0 + cfg.epsilon) * q_z / 2.0,
        ),
        Axis::Y => (
            -(1.0 - cfg.epsilon) * a_dc / 2.0 + a_ext,
            -(1.0 - cfg.epsilon) * q_z / 2.0,
        ),
        Axis::Alpha => unreachable!(),
    };
    MathieuParams::new(a, q, axis)
}

/// Outcome of the exact (monodromy) stability analysis.
#[derive(Clone, Copy, Debug)]
pub enum MathieuStability {
    /// Bounded motion; β is the characteristic exponent mapped to the
    /// fundamental zone (0, 1).
    Stable { beta: f64 },
    /// Unbounded motion, |tr M| >= 2.
    Unstable { trace: f64 },
}

impl MathieuStability {
    pub fn is_stable(&self) -> bool {
        matches!(self, MathieuStability::Stable { .. })
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            MathieuStability::Stable { beta } => Some(*beta),
            MathieuStability::Unstable { .. } => None,
        }
    }
}

/// Options for the fixed-step monodromy integration.
#[derive(Clone, Copy, Debug)]
pub struct MonodromyOptions {
    /// Base RK4 step count over one period τ ∈ [0, π] for |a|, |q| ≤ 1; the
    /// effective count grows as sqrt(max(|a|, |q|)) to track the faster
    /// coefficient oscillation. The result is validated against a run at
    /// twice the count (Richardson check).
    pub steps: usize,
    /// Allowed trace discrepancy between the two step sizes, relative to
    /// max(2, |trace|).
    pub tolerance: f64,
}

impl Default for MonodromyOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            tolerance: 1e-9,
        }
    }
}

fn effective_steps(p: &MathieuParams, base: usize) -> usize {
    let magnitude = p.a.abs().max(p.q.abs()).max(1.0);
    base * (magnitude.sqrt().ceil() as usize)
}

/// State-transition matrix of the Mathieu equation over one period τ ∈ [0, π],
/// RK4 with `steps` fixed steps. Columns are the solutions from initial
/// conditions (1, 0) and (0, 1); det M = 1 up to integration error.
pub fn monodromy_matrix(p: &MathieuParams, steps: usize) -> [[f64; 2]; 2] {
    let h = PI / steps as f64;
    // y = [x1, v1, x2, v2]; x'' = -(a - 2q cos 2τ) x
    let mut y = [1.0, 0.0, 0.0, 1.0];
    let coeff = |tau: f64| -(p.a - 2.0 * p.q * (2.0 * tau).cos());
    let deriv = |tau: f64, y: &[f64; 4]| {
        let c = coeff(tau);
        [y[1], c * y[0], y[3], c * y[2]]
    };
    for k in 0..steps {
        let tau = k as f64 * h;
        let k1 = deriv(tau, &y);
        let y2 = add_scaled(&y, &k1, h / 2.0);
        let k2 = deriv(tau + h / 2.0, &y2);
        let y3 = add_scaled(&y, &k2, h / 2.0);
        let k3 = deriv(tau + h / 2.0, &y3);
        let y4 = add_scaled(&y, &k3, h);
        let k4 = deriv(tau + h, &y4);
        for i in 0..4 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    [[y[0], y[2]], [y[1], y[3]]]
}

fn add_scaled(y: &[f64; 4], k: &[f64; 4], s: f64) -> [f64; 4] {
    [
        y[0] + s * k[0],
        y[1] + s * k[1],
        y[2] + s * k[2],
        y[3] + s * k[3],
    ]
}

/// Characteristic exponent from the monodromy matrix with default options.
///
/// Stable iff |tr M| < 2; then β = arccos(tr M / 2)/π in the fundamental zone
/// (0, 1). Marginal |tr M| = 2 is reported as unstable.
pub fn characteristic_exponent(p: &MathieuParams) -> Result<MathieuStability> {
    characteristic_exponent_with(p, &MonodromyOptions::default())
}

pub fn characteristic_exponent_with(
    p: &MathieuParams,
    opts: &MonodromyOptions,
) -> Result<MathieuStability> {
    if !p.a.is_finite() || !p.q.is_finite() {
        return Err(Error::invalid("mathieu_params", "a and q must be finite"));
    }
    let steps = effective_steps(p, opts.steps);
    let coarse = monodromy_matrix(p, steps);
    let fine = monodromy_matrix(p, steps * 2);
    let tr_coarse = coarse[0][0] + coarse[1][1];
    let tr = fine[0][0] + fine[1][1];
    if !tr.is_finite() || !tr_coarse.is_finite() {
        // growth overflowed f64; unambiguously unstable
        return Ok(MathieuStability::Unstable { trace: tr });
    }
    let scale = tr.abs().max(2.0);
    if (tr - tr_coarse).abs() > opts.tolerance * scale {
        return Err(Error::IntegrationTolerance(format!(
            "trace changed by {:.3e} (scale {:.3e}) when halving the step at a={}, q={}",
            (tr - tr_coarse).abs(),
            scale,
            p.a,
            p.q
        )));
    }
    if tr.abs() < 2.0 {
        Ok(MathieuStability::Stable {
            beta: (tr / 2.0).acos() / PI,
        })
    } else {
        Ok(MathieuStability::Unstable { trace: tr })
    }
}

/// β² from the series expansion to order a¹ q⁶:
///
/// ```text
/// β² ≈ a + (1/2 + a/2) q² + (25/128 + 273a/512) q⁴ + (317/2304 + 59525a/82944) q⁶
/// ```
#[derive(Clone, Copy, Debug)]
pub struct BetaSeries {
    pub beta_sq: f64,
    /// False outside the expansion's validity (|a| ≤ 0.05, |q| ≤ 0.8);
    /// callers should surface a warning in that case.
    pub within_validity: bool,
}

impl BetaSeries {
    /// β when the series predicts stable motion, `None` when β² ≤ 0
    /// ("unstable per series").
    pub fn beta(&self) -> Option<f64> {
        (self.beta_sq > 0.0).then(|| self.beta_sq.sqrt())
    }
}

pub fn beta_series(p: &MathieuParams) -> BetaSeries {
    let (a, q2) = (p.a, p.q * p.q);
    let q4 = q2 * q2;
    let q6 = q4 * q2;
    let beta_sq = a
        + (0.5 + a / 2.0) * q2
        + (25.0 / 128.0 + 273.0 / 512.0 * a) * q4
        + (317.0 / 2304.0 + 59525.0 / 82944.0 * a) * q6;
    BetaSeries {
        beta_sq,
        within_validity: a.abs() <= 0.05 && p.q.abs() <= 0.8,
    }
}

/// Secular frequency ω = β Ω_rf / 2 (rad/s) for β in the fundamental zone.
pub fn secular_frequency(beta: f64, omega_rf: f64) -> f64 {
    beta * omega_rf / 2.0
}

/// Pseudopotential-limit secular frequency ω = q Ω_rf / (2√2) for a = 0.
pub fn pseudopotential_frequency(q: f64, omega_rf: f64) -> f64 {
    q.abs() * omega_rf / (2.0 * std::f64::consts::SQRT_2)
}

/// Stable Mathieu solution `x(τ) = C Σ c₂ₙ cos[(2n+β)τ + φ]` with
/// coefficients normalized to c₀ = 1. `C` and `φ` are fixed by initial
/// conditions through [`FloquetSolution::mode`].
#[derive(Clone, Debug)]
pub struct FloquetSolution {
    pub params: MathieuParams,
    pub beta: f64,
    /// c₂ₙ for n in [-N, N], index i = n + N.
    coefficients: Vec<f64>,
    /// Truncation order N.
    pub truncation: usize,
}

/// Tail-decay requirement on the truncated coefficients, |c₂ₙ|/|c₀| at |n| = N.
pub const COEFFICIENT_TAIL_LIMIT: f64 = 1e-12;

/// Solve the three-term recursion
/// `c₂ₙ₊₂ + c₂ₙ₋₂ = [a - (2n+β)²]/q · c₂ₙ`
/// by backward recursion from each truncation boundary toward n = 0 (the
/// forward direction is numerically unstable for the decaying solution),
/// normalizing c₀ = 1.
pub fn floquet_coefficients(p: &MathieuParams, beta: f64, n: usize) -> Result<FloquetSolution> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(
            "beta",
            format!("must lie in the fundamental zone (0, 1), got {beta}"),
        ));
    }
    if n == 0 {
        return Err(Error::invalid("truncation", "must be >= 1"));
    }
    let mut coefficients = vec![0.0; 2 * n + 1];
    if p.q.abs() < 1e-300 {
        // pure harmonic limit: c0 = 1, everything else vanishes
        coefficients[n] = 1.0;
        return Ok(FloquetSolution {
            params: *p,
            beta,
            coefficients,
            truncation: n,
        });
    }

    // side = +1 walks n = N..0, side = -1 walks n = -N..0
    let one_side = |side: f64| -> Vec<f64> {
        let mut u = vec![0.0; n + 1]; // u[k] ~ c_{2*side*k}, unnormalized
        u[n] = 1.0;
        let mut beyond = 0.0; // c at |n| = N+1
        for k in (1..=n).rev() {
            let m = side * k as f64;
            let d = (p.a - (2.0 * m + beta).powi(2)) / p.q;
            u[k - 1] = d * u[k] - beyond;
            beyond = u[k];
            // only ratios matter; rescale to dodge overflow at small q
            if u[k - 1].abs() > 1e200 {
                let s = 1.0 / u[k - 1].abs();
                for v in u.iter_mut().skip(k - 1) {
                    *v *= s;
                }
                beyond *= s;
            }
        }
        u
    };

    let plus = one_side(1.0);
    let minus = one_side(-1.0);
    if plus[0] == 0.0 || minus[0] == 0.0 {
        return Err(Error::invalid(
            "floquet_coefficients",
            "recursion produced a vanishing c0; parameters too close to a stability boundary",
        ));
    }
    for k in 0..=n {
        coefficients[n + k] = plus[k] / plus[0];
        coefficients[n - k] = minus[k] / minus[0];
    }

    let solution = FloquetSolution {
        params: *p,
        beta,
        coefficients,
        truncation: n,
    };
    let tail = solution.tail_ratio();
    if tail >= COEFFICIENT_TAIL_LIMIT {
        return Err(Error::TruncationTooSmall {
            n,
            tail,
            limit: COEFFICIENT_TAIL_LIMIT,
        });
    }
    Ok(solution)
}

/// Exact stability plus coefficients, growing the truncation from N = 20
/// until the tail-decay invariant holds.
#[derive(Clone, Debug)]
pub enum FloquetOutcome {
    Stable(FloquetSolution),
    Unstable { trace: f64 },
}

pub fn solve_floquet(p: &MathieuParams) -> Result<FloquetOutcome> {
    match characteristic_exponent(p)? {
        MathieuStability::Unstable { trace } => Ok(FloquetOutcome::Unstable { trace }),
        MathieuStability::Stable { beta } => {
            let mut n = 20;
            loop {
                match floquet_coefficients(p, beta, n) {
                    Ok(sol) => return Ok(FloquetOutcome::Stable(sol)),
                    Err(Error::TruncationTooSmall { .. }) if n < 320 => n *= 2,
                    Err(e) => return Err(e),
                }
            }
        }
    }
}

impl FloquetSolution {
    /// c₂ₙ (zero beyond the truncation).
    pub fn coefficient(&self, n: i32) -> f64 {
        let idx = n + self.truncation as i32;
        if idx < 0 || idx as usize >= self.coefficients.len() {
            return 0.0;
        }
        self.coefficients[idx as usize]
    }

    /// All coefficients, n = -N..=N.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// max(|c₂ₙ|/|c₀|) at the truncation boundary |n| = N.
    pub fn tail_ratio(&self) -> f64 {
        let n = self.coefficients.len() - 1;
        self.coefficients[0].abs().max(self.coefficients[n].abs())
    }

    /// Fix the overall amplitude and phase from initial position and velocity
    /// at t = 0; the result evaluates the closed-form trajectory.
    pub fn mode(&self, x0: f64, v0: f64, omega_rf: f64) -> FloquetMode {
        // x(0) = C cosφ Σ c₂ₙ ; dx/dτ(0) = -C sinφ Σ c₂ₙ (2n+β), v = (Ω/2) dx/dτ
        let mut sum_c = 0.0;
        let mut sum_cw = 0.0;
        for (i, &c) in self.coefficients.iter().enumerate() {
            let w = 2.0 * (i as f64 - self.truncation as f64) + self.beta;
            sum_c += c;
            sum_cw += c * w;
        }
        let cos_part = x0 / sum_c;
        let sin_part = -(2.0 * v0 / omega_rf) / sum_cw;
        let amplitude = cos_part.hypot(sin_part);
        let phase = sin_part.atan2(cos_part);
        FloquetMode {
            solution: self.clone(),
            amplitude,
            phase,
            omega_rf,
        }
    }
}

/// A Floquet solution with amplitude/phase pinned by initial conditions.
#[derive(Clone, Debug)]
pub struct FloquetMode {
    pub solution: FloquetSolution,
    pub amplitude: f64,
    pub phase: f64,
    pub omega_rf: f64,
}

impl FloquetMode {
    pub fn position(&self, t: f64) -> f64 {
        let tau = self.omega_rf * t / 2.0;
        let n = self.solution.truncation as f64;
        let mut x = 0.0;
        for (i, &c) in self.solution.coefficients.iter().enumerate() {
            let w = 2.0 * (i as f64 - n) + self.solution.beta;
            x += c * (w * tau + self.phase).cos();
        }
        self.amplitude * x
    }

    pub fn velocity(&self, t: f64) -> f64 {
        let tau = self.omega_rf * t / 2.0;
        let n = self.solution.truncation as f64;
        let mut v = 0.0;
        for (i, &c) in self.solution.coefficients.iter().enumerate() {
            let w = 2.0 * (i as f64 - n) + self.solution.beta;
            v -= c * w * (w * tau + self.phase).sin();
        }
        self.amplitude * self.omega_rf / 2.0 * v
    }
}

/// One grid point of a stability map.
#[derive(Clone, Copy, Debug)]
pub struct StabilityMapPoint {
    pub a: f64,
    pub q: f64,
    pub stable: bool,
    pub beta: Option<f64>,
}

/// Stability flags and β over a uniform (a, q) grid, row-major in `a` then
/// `q`. Grid points evaluate independently (in parallel with the `parallel`
/// feature) and aggregate in deterministic order.
pub fn stability_map(
    a_range: (f64, f64),
    n_a: usize,
    q_range: (f64, f64),
    n_q: usize,
) -> Result<Vec<StabilityMapPoint>> {
    let a_values = grid(a_range, n_a)?;
    let q_values = grid(q_range, n_q)?;
    let points: Vec<(f64, f64)> = a_values
        .iter()
        .flat_map(|&a| q_values.iter().map(move |&q| (a, q)))
        .collect();
    let results = par::map(&points, |&(a, q)| {
        let p = MathieuParams { a, q, axis: Axis::Z };
        characteristic_exponent(&p).map(|s| StabilityMapPoint {
            a,
            q,
            stable: s.is_stable(),
            beta: s.beta(),
        })
    });
    results.into_iter().collect()
}

/// Bisection tolerance in q for boundary extraction.
pub const BOUNDARY_TOLERANCE: f64 = 1e-4;

/// Stability-boundary polyline: for each `a` in the grid, every
/// stable↔unstable flip along the q grid is refined by bisection to
/// [`BOUNDARY_TOLERANCE`]. Multiple boundary crossings per `a` (the a < 0
/// tongue has two edges) all appear in the output.
pub fn stability_boundary(
    a_range: (f64, f64),
    n_a: usize,
    q_range: (f64, f64),
    n_q: usize,
) -> Result<Vec<(f64, f64)>> {
    let a_values = grid(a_range, n_a)?;
    let q_values = grid(q_range, n_q)?;
    let rows = par::map(&a_values, |&a| boundary_row(a, &q_values));
    let mut out = Vec::new();
    for row in rows {
        out.extend(row?);
    }
    Ok(out)
}

fn boundary_row(a: f64, q_values: &[f64]) -> Result<Vec<(f64, f64)>> {
    let stable_at = |q: f64| -> Result<bool> {
        let p = MathieuParams { a, q, axis: Axis::Z };
        Ok(characteristic_exponent(&p)?.is_stable())
    };
    let mut crossings = Vec::new();
    let mut prev = stable_at(q_values[0])?;
    for w in q_values.windows(2) {
        let next = stable_at(w[1])?;
        if next != prev {
            let (mut lo, mut hi) = (w[0], w[1]);
            while hi - lo > BOUNDARY_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                if stable_at(mid)? == prev {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            crossings.push((a, 0.5 * (lo + hi)));
        }
        prev = next;
    }
    Ok(crossings)
}

fn grid(range: (f64, f64), n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(range.1 > range.0) || !range.0.is_finite() || !range.1.is_finite() {
        return Err(Error::invalid(
            "grid",
            format!("need finite range with max > min and n >= 2, got {range:?}, n={n}"),
        ));
    }
    Ok((0..n)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
        .collect())
}
