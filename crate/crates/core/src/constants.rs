//! SI constants (2019 exact definitions).

use std::f64::consts::PI;

pub const E_CHARGE: f64 = 1.602_176_634e-19;
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * PI);
pub const K_B: f64 = 1.380_649e-23;
/// Superconducting flux quantum h/2e.
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * E_CHARGE);
/// Reduced flux quantum hbar/2e.
pub const PHI0_REDUCED: f64 = HBAR / (2.0 * E_CHARGE);

pub const TWO_PI: f64 = 2.0 * PI;

/// Angular frequency (rad/s) for an ordinary frequency in GHz.
pub fn ghz(f: f64) -> f64 {
    TWO_PI * f * 1e9
}

/// Ordinary frequency in GHz for an angular frequency in rad/s.
pub fn to_ghz(w: f64) -> f64 {
    w / TWO_PI / 1e9
}
