//! Physical constants and the unit conversions used at the I/O boundary.
//!
//! Everything inside the crate is SI (kg, m, s, V, Pa, K, rad/s); the helpers
//! here are the only sanctioned conversion factors.

use std::f64::consts::PI;

/// Boltzmann constant (J/K)
pub const K_B: f64 = 1.380_649e-23;

/// Elementary charge (C)
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Avogadro constant (1/mol)
pub const AVOGADRO: f64 = 6.022_140_76e23;

/// Molar mass of dry air (kg/mol)
pub const AIR_MOLAR_MASS: f64 = 28.97e-3;

/// Mean mass of an air molecule (kg)
pub const AIR_MOLECULE_MASS: f64 = AIR_MOLAR_MASS / AVOGADRO;

/// Default mass density of diamond (kg/m^3)
pub const DIAMOND_DENSITY: f64 = 3500.0;

/// Pascals per Torr. Declared conversion factor; exact at the I/O boundary.
pub const PA_PER_TORR: f64 = 133.322;

/// Accommodation coefficient of the free-molecular drag closure
/// `gamma = K * P / (rho_p * r * v_th)`, with `v_th` the mean thermal speed
/// of the gas molecules.
///
/// The value is Epstein's diffuse-reflection result (P. S. Epstein,
/// Phys. Rev. 23, 710 (1924)): the drag force on a slowly moving sphere is
/// `F = (4*pi/3)(1 + pi/8) * rho_gas * v_th * r^2 * v`, which in the
/// parametrization above gives `K = 1 + 8/pi ≈ 3.5465`. Specular reflection
/// would give `K = 8/pi`; use the `*_with` variants of the drag functions to
/// override.
pub const EPSTEIN_DIFFUSE_K: f64 = 1.0 + 8.0 / PI;

/// Torr → Pa
pub fn torr_to_pa(p_torr: f64) -> f64 {
    p_torr * PA_PER_TORR
}

/// Pa → Torr
pub fn pa_to_torr(p_pa: f64) -> f64 {
    p_pa / PA_PER_TORR
}

/// Drive frequency in kHz → angular frequency in rad/s
pub fn khz_to_angular(f_khz: f64) -> f64 {
    2.0 * PI * f_khz * 1e3
}

/// Angular frequency in rad/s → drive frequency in kHz
pub fn angular_to_khz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e3)
}

/// Micrometers → meters. Division by the exactly representable 1e6 keeps
/// table boundaries bit-identical to literal SI values (50.0/1e6 == 50e-6).
pub fn um_to_m(d_um: f64) -> f64 {
    d_um / 1e6
}

/// Meters → micrometers
pub fn m_to_um(d_m: f64) -> f64 {
    d_m * 1e6
}

/// Peak-to-peak voltage → zero-to-peak amplitude
pub fn vpp_to_amplitude(v_pp: f64) -> f64 {
    v_pp / 2.0
}

/// Charge in units of the elementary charge → coulombs
pub fn charge_e_to_coulomb(q_e: f64) -> f64 {
    q_e * ELEMENTARY_CHARGE
}

/// Charge in coulombs → units of the elementary charge
pub fn coulomb_to_charge_e(q_c: f64) -> f64 {
    q_c / ELEMENTARY_CHARGE
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torr_round_trip() {
        assert_eq!(torr_to_pa(1.0), 133.322);
        assert_eq!(pa_to_torr(torr_to_pa(0.2)), 0.2);
    }

    #[test]
    fn angular_conversion() {
        let omega = khz_to_angular(114.0);
        assert!((omega - 2.0 * PI * 114_000.0).abs() < 1e-9);
        assert!((angular_to_khz(omega) - 114.0).abs() < 1e-12);
    }

    #[test]
    fn vpp_halves() {
        assert_eq!(vpp_to_amplitude(326.0), 163.0);
    }
}
