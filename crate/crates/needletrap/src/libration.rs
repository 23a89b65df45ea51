//! Angular-confinement quantities: the charge quadrupole tensor, the inertia
//! tensor, and the scalar libration Mathieu mode.
//!
//! The libration frequency of the α mode is
//!
//! ```text
//! ω_α ≈ q_α Ω_rf / (2√2) = 2 η V0 (3+ε)(Q₃ - Q₂) / (3 d² Ω_rf I₁)
//! ```
//!
//! with Q₁ ≤ Q₂ ≤ Q₃ the eigenvalues of the traceless charge quadrupole
//! tensor and I₁ the largest moment of inertia. The mode is treated as a
//! single scalar Mathieu oscillator; full rigid-body dynamics are out of
//! scope. Note the (Q₃ - Q₂) gap fixes an axis convention: distributions are
//! expected in the body frame about the rotation center.

use crate::floquet::{characteristic_exponent, Axis, MathieuParams, MathieuStability};
use crate::trap::TrapConfig;
use crate::{Error, Result};
use nalgebra::Matrix3;
use std::f64::consts::PI;

/// A point charge in the body frame.
#[derive(Clone, Copy, Debug)]
pub struct ChargePoint {
    /// Charge (C)
    pub charge: f64,
    /// Position (m)
    pub position: [f64; 3],
}

/// A point mass in the body frame.
#[derive(Clone, Copy, Debug)]
pub struct MassPoint {
    /// Mass (kg)
    pub mass: f64,
    /// Position (m)
    pub position: [f64; 3],
}

/// Charge distribution: explicit point charges, or charge spread uniformly
/// over the surface of a spheroid (two equal semi-axes).
#[derive(Clone, Debug)]
pub enum ChargeDistribution {
    Points(Vec<ChargePoint>),
    SpheroidSurface {
        /// Semi-axes (m); at least two must be equal.
        semi_axes: [f64; 3],
        /// Total charge (C)
        total_charge: f64,
    },
}

impl ChargeDistribution {
    pub fn total_charge(&self) -> f64 {
        match self {
            ChargeDistribution::Points(pts) => pts.iter().map(|p| p.charge).sum(),
            ChargeDistribution::SpheroidSurface { total_charge, .. } => *total_charge,
        }
    }
}

/// Mass distribution: explicit point masses, or a uniform solid ellipsoid.
#[derive(Clone, Debug)]
pub enum MassDistribution {
    Points(Vec<MassPoint>),
    SpheroidSolid {
        /// Semi-axes (m)
        semi_axes: [f64; 3],
        /// Mass density (kg/m^3)
        density: f64,
    },
}

impl MassDistribution {
    pub fn total_mass(&self) -> f64 {
        match self {
            MassDistribution::Points(pts) => pts.iter().map(|p| p.mass).sum(),
            MassDistribution::SpheroidSolid { semi_axes, density } => {
                4.0 / 3.0 * PI * semi_axes[0] * semi_axes[1] * semi_axes[2] * density
            }
        }
    }
}

/// Sorted eigenvalues of the traceless charge quadrupole tensor.
#[derive(Clone, Copy, Debug)]
pub struct QuadrupoleEigenvalues {
    /// Q₁ ≤ Q₂ ≤ Q₃ (C·m²)
    pub values: [f64; 3],
    /// True when the tensor carries no orientation information (all charges
    /// at one point, or an isotropic distribution).
    pub degenerate: bool,
}

impl QuadrupoleEigenvalues {
    /// The gap Q₃ - Q₂ entering the libration frequency.
    pub fn gap(&self) -> f64 {
        self.values[2] - self.values[1]
    }
}

/// Eigenvalues of `Q̂ = Σ qᵢ (3 rᵢ⊗rᵢ - rᵢ²·I)` (points) or its
/// closed-form surface integral (spheroid), sorted ascending.
pub fn quadrupole_eigenvalues(dist: &ChargeDistribution) -> Result<QuadrupoleEigenvalues> {
    match dist {
        ChargeDistribution::Points(pts) => {
            if pts.is_empty() {
                return Err(Error::invalid("charge_distribution", "no points"));
            }
            let mut tensor = Matrix3::<f64>::zeros();
            let mut scale = 0.0_f64;
            for p in pts {
                let [x, y, z] = p.position;
                if !(x.is_finite() && y.is_finite() && z.is_finite() && p.charge.is_finite()) {
                    return Err(Error::invalid("charge_distribution", "non-finite entry"));
                }
                let r2 = x * x + y * y + z * z;
                scale = scale.max(p.charge.abs() * r2);
                let r = nalgebra::Vector3::new(x, y, z);
                tensor += p.charge * (3.0 * r * r.transpose() - r2 * Matrix3::identity());
            }
            sorted_eigenvalues(tensor, scale)
        }
        ChargeDistribution::SpheroidSurface {
            semi_axes,
            total_charge,
        } => {
            let (b, c, unique_axis) = spheroid_axes(*semi_axes)?;
            let q_unique = surface_quadrupole_along_symmetry_axis(b, c, *total_charge);
            let mut values = [0.0_f64; 3];
            for (i, v) in values.iter_mut().enumerate() {
                *v = if i == unique_axis { q_unique } else { -q_unique / 2.0 };
            }
            values.sort_by(f64::total_cmp);
            let scale = total_charge.abs() * b.max(c).powi(2);
            Ok(QuadrupoleEigenvalues {
                values,
                degenerate: scale == 0.0 || q_unique.abs() <= 1e-12 * scale,
            })
        }
    }
}

fn sorted_eigenvalues(tensor: Matrix3<f64>, scale: f64) -> Result<QuadrupoleEigenvalues> {
    let norm = tensor.norm();
    if scale == 0.0 || norm <= 1e-12 * scale {
        // no orientation information; report exact zeros, flagged
        return Ok(QuadrupoleEigenvalues {
            values: [0.0; 3],
            degenerate: true,
        });
    }
    let eigen = tensor.symmetric_eigenvalues();
    let mut values = [eigen[0], eigen[1], eigen[2]];
    values.sort_by(f64::total_cmp);
    Ok(QuadrupoleEigenvalues {
        values,
        degenerate: false,
    })
}

/// Identify the spheroid's repeated (equatorial) semi-axis b and unique
/// (symmetry) semi-axis c; returns the unique axis index.
fn spheroid_axes(semi_axes: [f64; 3]) -> Result<(f64, f64, usize)> {
    if semi_axes.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::invalid("semi_axes", "must all be > 0"));
    }
    let eq = |u: f64, v: f64| (u - v).abs() <= 1e-9 * u.max(v);
    let [a0, a1, a2] = semi_axes;
    if eq(a0, a1) {
        Ok((0.5 * (a0 + a1), a2, 2))
    } else if eq(a0, a2) {
        Ok((0.5 * (a0 + a2), a1, 1))
    } else if eq(a1, a2) {
        Ok((0.5 * (a1 + a2), a0, 0))
    } else {
        Err(Error::invalid(
            "semi_axes",
            "surface-charge closed form needs a spheroid (two equal semi-axes)",
        ))
    }
}

/// Quadrupole component along the symmetry axis of a uniformly
/// surface-charged spheroid with equatorial semi-axis b and polar semi-axis
/// c:
///
/// ```text
/// Q_cc = Q_tot * [ (2c² + b²) J₂/J₀ - b² ]
/// J₀ = ∫₀¹ √(c² + (b²-c²)u²) du      J₂ = ∫₀¹ u²√(c² + (b²-c²)u²) du
/// ```
///
/// (u = cos of the polar angle; the weight is the exact area element).
fn surface_quadrupole_along_symmetry_axis(b: f64, c: f64, total_charge: f64) -> f64 {
    let alpha = c * c;
    let beta = b * b - c * c;
    let j0 = if beta.abs() <= 1e-6 * alpha {
        // near-spherical series in β/α
        let x = beta / alpha;
        alpha.sqrt() * (1.0 + x / 6.0 - x * x / 40.0 + x * x * x / 112.0)
    } else if beta > 0.0 {
        let s = beta.sqrt();
        0.5 * (alpha + beta).sqrt() + alpha / (2.0 * s) * (s / alpha.sqrt()).asinh()
    } else {
        let s = (-beta).sqrt();
        0.5 * (alpha + beta).sqrt() + alpha / (2.0 * s) * (s / alpha.sqrt()).asin()
    };
    let j2 = if beta.abs() <= 1e-6 * alpha {
        let x = beta / alpha;
        alpha.sqrt() * (1.0 / 3.0 + x / 10.0 - x * x / 56.0 + x * x * x / 144.0)
    } else {
        ((alpha + beta).powf(1.5) - alpha * j0) / (4.0 * beta)
    };
    total_charge * ((2.0 * c * c + b * b) * j2 / j0 - b * b)
}

/// Largest eigenvalue of the inertia tensor about the center of mass
/// (kg·m²).
pub fn largest_inertia(dist: &MassDistribution) -> Result<f64> {
    match dist {
        MassDistribution::Points(pts) => {
            if pts.is_empty() {
                return Err(Error::invalid("mass_distribution", "no points"));
            }
            let total: f64 = pts.iter().map(|p| p.mass).sum();
            if !(total > 0.0) {
                return Err(Error::invalid("mass_distribution", "total mass must be > 0"));
            }
            let mut com = [0.0_f64; 3];
            for p in pts {
                for i in 0..3 {
                    com[i] += p.mass * p.position[i];
                }
            }
            for c in &mut com {
                *c /= total;
            }
            let mut tensor = Matrix3::<f64>::zeros();
            for p in pts {
                let r = nalgebra::Vector3::new(
                    p.position[0] - com[0],
                    p.position[1] - com[1],
                    p.position[2] - com[2],
                );
                let r2 = r.norm_squared();
                tensor += p.mass * (r2 * Matrix3::identity() - r * r.transpose());
            }
            let eigen = tensor.symmetric_eigenvalues();
            Ok(eigen.iter().fold(0.0_f64, |m, &v| m.max(v)))
        }
        MassDistribution::SpheroidSolid { semi_axes, density } => {
            if semi_axes.iter().any(|&a| !(a > 0.0)) || !(*density > 0.0) {
                return Err(Error::invalid(
                    "mass_distribution",
                    "semi-axes and density must be > 0",
                ));
            }
            let m = dist.total_mass();
            let [a, b, c] = *semi_axes;
            let moments = [
                m / 5.0 * (b * b + c * c),
                m / 5.0 * (a * a + c * c),
                m / 5.0 * (a * a + b * b),
            ];
            Ok(moments.iter().fold(0.0_f64, |mx, &v| mx.max(v)))
        }
    }
}

/// Libration stability parameter, frequency, and Mathieu stability of the
/// scalar α mode.
#[derive(Clone, Copy, Debug)]
pub struct LibrationMode {
    pub q_alpha: f64,
    /// Libration angular frequency (rad/s)
    pub omega_alpha: f64,
    pub stability: MathieuStability,
}

/// Evaluate the libration mode for a given charge quadrupole and largest
/// inertia. A spherically symmetric charge (Q₃ = Q₂) yields ω_α = 0: no
/// angular confinement.
pub fn libration_mode(
    cfg: &TrapConfig,
    quadrupole: &QuadrupoleEigenvalues,
    largest_inertia: f64,
) -> Result<LibrationMode> {
    if !(largest_inertia > 0.0) {
        return Err(Error::invalid("largest_inertia", "must be > 0"));
    }
    let eta = cfg.eta_at_d()?;
    let omega_alpha = 2.0 * eta * cfg.v0 * (3.0 + cfg.epsilon) * quadrupole.gap()
        / (3.0 * cfg.d * cfg.d * cfg.omega_rf * largest_inertia);
    let q_alpha = 2.0 * std::f64::consts::SQRT_2 * omega_alpha / cfg.omega_rf;
    let params = MathieuParams {
        a: 0.0,
        q: q_alpha,
        axis: Axis::Alpha,
    };
    let stability = characteristic_exponent(&params)?;
    Ok(LibrationMode {
        q_alpha,
        omega_alpha,
        stability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::ELEMENTARY_CHARGE;
    use crate::trap::Efficiency;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn paper_cfg() -> TrapConfig {
        TrapConfig::new(
            163.0,
            2.0 * PI * 114e3,
            0.0,
            50e-6,
            Efficiency::Constant(0.25),
            0.04,
        )
        .unwrap()
    }

    #[test]
    fn point_charge_at_origin_is_degenerate_zero() {
        let dist = ChargeDistribution::Points(vec![ChargePoint {
            charge: ELEMENTARY_CHARGE,
            position: [0.0; 3],
        }]);
        let q = quadrupole_eigenvalues(&dist).unwrap();
        assert_eq!(q.values, [0.0; 3]);
        assert!(q.degenerate);
    }

    #[test]
    fn sphere_surface_is_zero() {
        let dist = ChargeDistribution::SpheroidSurface {
            semi_axes: [30e-9; 3],
            total_charge: 5.0 * ELEMENTARY_CHARGE,
        };
        let q = quadrupole_eigenvalues(&dist).unwrap();
        for v in q.values {
            assert!(v.abs() < 1e-12 * ELEMENTARY_CHARGE * (30e-9_f64).powi(2));
        }
        assert!(q.degenerate);
    }

    #[test]
    fn dumbbell_eigenvalues() {
        // two charges q/2 at (0,0,±L/2): eigenvalues (-qL²/4, -qL²/4, qL²/2)
        let q_tot = 5.0 * ELEMENTARY_CHARGE;
        let l = 100e-9;
        let dist = ChargeDistribution::Points(vec![
            ChargePoint {
                charge: q_tot / 2.0,
                position: [0.0, 0.0, l / 2.0],
            },
            ChargePoint {
                charge: q_tot / 2.0,
                position: [0.0, 0.0, -l / 2.0],
            },
        ]);
        let q = quadrupole_eigenvalues(&dist).unwrap();
        assert!(!q.degenerate);
        assert_relative_eq!(q.values[0], -q_tot * l * l / 4.0, max_relative = 1e-12);
        assert_relative_eq!(q.values[1], -q_tot * l * l / 4.0, max_relative = 1e-12);
        assert_relative_eq!(q.values[2], q_tot * l * l / 2.0, max_relative = 1e-12);
        assert_relative_eq!(q.gap(), 0.75 * q_tot * l * l, max_relative = 1e-12);
    }

    #[test]
    fn random_point_sets_are_traceless() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let pts: Vec<ChargePoint> = (0..8)
                .map(|_| ChargePoint {
                    charge: ELEMENTARY_CHARGE * rng.random_range(-3.0..3.0),
                    position: [
                        rng.random_range(-1e-7..1e-7),
                        rng.random_range(-1e-7..1e-7),
                        rng.random_range(-1e-7..1e-7),
                    ],
                })
                .collect();
            let scale: f64 = pts
                .iter()
                .map(|p| {
                    p.charge.abs()
                        * (p.position[0].powi(2) + p.position[1].powi(2) + p.position[2].powi(2))
                })
                .fold(0.0, f64::max);
            let q = quadrupole_eigenvalues(&ChargeDistribution::Points(pts)).unwrap();
            let trace = q.values.iter().sum::<f64>();
            assert!(trace.abs() <= 1e-12 * scale, "trace {trace:e} at scale {scale:e}");
        }
    }

    #[test]
    fn surface_quadrupole_matches_quadrature() {
        // closed form against direct numerical integration over the polar angle
        for (b, c) in [(20e-9, 50e-9), (50e-9, 20e-9), (30e-9, 30.0000001e-9)] {
            let q_tot = 7.0 * ELEMENTARY_CHARGE;
            let closed = surface_quadrupole_along_symmetry_axis(b, c, q_tot);
            // Simpson quadrature of A, ∫z²dA, ∫x²dA
            let n = 20001;
            let h = 1.0 / (n - 1) as f64;
            let (mut s0, mut s2) = (0.0, 0.0);
            for k in 0..n {
                let u = k as f64 * h;
                let w = if k == 0 || k == n - 1 {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let g = (c * c + (b * b - c * c) * u * u).sqrt();
                s0 += w * g;
                s2 += w * u * u * g;
            }
            let j0 = s0 * h / 3.0;
            let j2 = s2 * h / 3.0;
            let reference = q_tot * ((2.0 * c * c + b * b) * j2 / j0 - b * b);
            assert_relative_eq!(closed, reference, max_relative = 1e-8);
        }
    }

    #[test]
    fn inertia_closed_forms() {
        // uniform sphere: (2/5) m r²
        let r = 26.25e-9;
        let rho = 3500.0;
        let sphere = MassDistribution::SpheroidSolid {
            semi_axes: [r; 3],
            density: rho,
        };
        let m = sphere.total_mass();
        assert_relative_eq!(
            largest_inertia(&sphere).unwrap(),
            0.4 * m * r * r,
            max_relative = 1e-12
        );

        // two point masses m/2 at ±L/2: mL²/4
        let l = 80e-9;
        let half = 1e-19;
        let pts = MassDistribution::Points(vec![
            MassPoint {
                mass: half,
                position: [0.0, 0.0, l / 2.0],
            },
            MassPoint {
                mass: half,
                position: [0.0, 0.0, -l / 2.0],
            },
        ]);
        assert_relative_eq!(
            largest_inertia(&pts).unwrap(),
            2.0 * half * l * l / 4.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn prolate_inertia_matches_point_cloud() {
        // uniform prolate spheroid vs Monte-Carlo point cloud within 1%
        let (a, b) = (60e-9, 25e-9);
        let rho = 3500.0;
        let solid = MassDistribution::SpheroidSolid {
            semi_axes: [a, b, b],
            density: rho,
        };
        let exact = largest_inertia(&solid).unwrap();

        let mut rng = StdRng::seed_from_u64(11);
        let n = 200_000;
        let mut pts = Vec::with_capacity(n);
        while pts.len() < n {
            let x = rng.random_range(-1.0..1.0);
            let y = rng.random_range(-1.0..1.0);
            let z = rng.random_range(-1.0..1.0);
            if x * x + y * y + z * z <= 1.0 {
                pts.push(MassPoint {
                    mass: 1.0,
                    position: [a * x, b * y, b * z],
                });
            }
        }
        let total = solid.total_mass();
        let per = total / pts.len() as f64;
        for p in &mut pts {
            p.mass = per;
        }
        let mc = largest_inertia(&MassDistribution::Points(pts)).unwrap();
        assert_relative_eq!(mc, exact, max_relative = 0.01);
    }

    #[test]
    fn sphere_has_no_angular_confinement() {
        let cfg = paper_cfg();
        let quad = QuadrupoleEigenvalues {
            values: [0.0; 3],
            degenerate: true,
        };
        let mode = libration_mode(&cfg, &quad, 7.3e-35).unwrap();
        assert_eq!(mode.omega_alpha, 0.0);
        assert_eq!(mode.q_alpha, 0.0);
    }

    #[test]
    fn gap_doubling_doubles_frequency() {
        let cfg = paper_cfg();
        let base = QuadrupoleEigenvalues {
            values: [-1e-33, -1e-33, 2e-33],
            degenerate: false,
        };
        let double = QuadrupoleEigenvalues {
            values: [-2e-33, -2e-33, 4e-33],
            degenerate: false,
        };
        let i1 = 7.3e-35;
        let m1 = libration_mode(&cfg, &base, i1).unwrap();
        let m2 = libration_mode(&cfg, &double, i1).unwrap();
        assert_relative_eq!(m2.omega_alpha, 2.0 * m1.omega_alpha, max_relative = 1e-12);
    }

    #[test]
    fn rotation_invariance() {
        // ω_α from rotated copies of both distributions agrees to 1e-9
        let mut rng = StdRng::seed_from_u64(21);
        let charges: Vec<ChargePoint> = (0..6)
            .map(|_| ChargePoint {
                charge: ELEMENTARY_CHARGE * rng.random_range(0.2..2.0),
                position: [
                    rng.random_range(-5e-8..5e-8),
                    rng.random_range(-5e-8..5e-8),
                    rng.random_range(-5e-8..5e-8),
                ],
            })
            .collect();
        let masses: Vec<MassPoint> = (0..6)
            .map(|_| MassPoint {
                mass: 1e-20 * rng.random_range(0.5..2.0),
                position: [
                    rng.random_range(-5e-8..5e-8),
                    rng.random_range(-5e-8..5e-8),
                    rng.random_range(-5e-8..5e-8),
                ],
            })
            .collect();
        let cfg = paper_cfg();
        let reference = {
            let q = quadrupole_eigenvalues(&ChargeDistribution::Points(charges.clone())).unwrap();
            let i1 = largest_inertia(&MassDistribution::Points(masses.clone())).unwrap();
            libration_mode(&cfg, &q, i1).unwrap().omega_alpha
        };
        for _ in 0..5 {
            let rot = random_rotation(&mut rng);
            let rc: Vec<ChargePoint> = charges
                .iter()
                .map(|p| ChargePoint {
                    charge: p.charge,
                    position: apply(&rot, p.position),
                })
                .collect();
            let rm: Vec<MassPoint> = masses
                .iter()
                .map(|p| MassPoint {
                    mass: p.mass,
                    position: apply(&rot, p.position),
                })
                .collect();
            let q = quadrupole_eigenvalues(&ChargeDistribution::Points(rc)).unwrap();
            let i1 = largest_inertia(&MassDistribution::Points(rm)).unwrap();
            let w = libration_mode(&cfg, &q, i1).unwrap().omega_alpha;
            assert_relative_eq!(w, reference, max_relative = 1e-9);
        }
    }

    fn random_rotation(rng: &mut StdRng) -> Matrix3<f64> {
        let axis = nalgebra::Unit::new_normalize(nalgebra::Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ));
        let angle = rng.random_range(0.0..2.0 * PI);
        nalgebra::Rotation3::from_axis_angle(&axis, angle).into_inner()
    }

    fn apply(rot: &Matrix3<f64>, p: [f64; 3]) -> [f64; 3] {
        let v = rot * nalgebra::Vector3::new(p[0], p[1], p[2]);
        [v[0], v[1], v[2]]
    }

    #[test]
    fn inverse_square_distance_scaling() {
        let cfg = paper_cfg();
        let quad = QuadrupoleEigenvalues {
            values: [-1e-33, -1e-33, 2e-33],
            degenerate: false,
        };
        let i1 = 7.3e-35;
        let w1 = libration_mode(&cfg, &quad, i1).unwrap().omega_alpha;
        let cfg2 = cfg.at_distance(100e-6).unwrap();
        let w2 = libration_mode(&cfg2, &quad, i1).unwrap().omega_alpha;
        assert_relative_eq!(w1, 4.0 * w2, max_relative = 1e-12);
    }

    #[test]
    fn q_alpha_to_q_z_ratio_identity() {
        // q_α/q_z = √2 (3+ε)(Q₃-Q₂) m / (6 Q I₁) for the same drive
        use crate::floquet::mathieu_params;
        use crate::trap::Particle;
        let cfg = paper_cfg();
        let particle = Particle::new(2.65e-19, 4.85 * ELEMENTARY_CHARGE).unwrap();
        let quad = QuadrupoleEigenvalues {
            values: [-1.5e-34, -0.5e-34, 2.0e-34],
            degenerate: false,
        };
        let i1 = 7.3e-35;
        let q_z = mathieu_params(&cfg, &particle, Axis::Z, 0.0).unwrap().q;
        let q_alpha = libration_mode(&cfg, &quad, i1).unwrap().q_alpha;
        let expected = 2.0_f64.sqrt() * (3.0 + cfg.epsilon) * quad.gap() * particle.mass
            / (6.0 * particle.charge * i1);
        assert_relative_eq!(q_alpha / q_z, expected, max_relative = 1e-12);
    }
}
