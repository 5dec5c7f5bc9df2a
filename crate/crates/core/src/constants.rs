//! CODATA 2018 exact and recommended values (SI).

use std::f64::consts::PI;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K (exact).
pub const K_B: f64 = 1.380_649e-23;
/// Elementary charge, C (exact).
pub const E_CHARGE: f64 = 1.602_176_634e-19;

pub const TWO_PI: f64 = 2.0 * PI;

/// Converts an ordinary frequency in Hz to rad/s.
pub fn hz(f: f64) -> f64 {
    TWO_PI * f
}

pub fn khz(f: f64) -> f64 {
    TWO_PI * f * 1e3
}

pub fn mhz(f: f64) -> f64 {
    TWO_PI * f * 1e6
}

pub fn ghz(f: f64) -> f64 {
    TWO_PI * f * 1e9
}

/// Converts rad/s back to ordinary frequency in Hz.
pub fn to_hz(omega: f64) -> f64 {
    omega / TWO_PI
}
