#![allow(dead_code)]

use kerrsim::constants::{ghz, khz, mhz};
use kerrsim::device::{epsilon_from_dbm, CircuitParams};
use kerrsim::fitkit::{synth_plan, synthesize, SynthTrace};
use kerrsim::calibrate::RawDataset;

/// Strongly nonlinear device (K/κ ≈ 0.28) whose Kerr effects show at a few
/// photons, so quantum fits stay cheap.
pub fn compact_device() -> CircuitParams {
    CircuitParams::new(ghz(5.0), khz(300.0), mhz(1.5), khz(500.0), 0.0).unwrap()
}

pub const COMPACT_ATTENUATION_DB: f64 = 100.0;

/// Device power giving a linear-response photon number `n`.
pub fn power_for_photons(params: &CircuitParams, n: f64) -> f64 {
    let a = params.linear_amplitude(epsilon_from_dbm(-140.0, params));
    -140.0 + 10.0 * (n / (a * a)).log10()
}

pub fn compact_plan(points: usize) -> Vec<SynthTrace> {
    let p = compact_device();
    let low = power_for_photons(&p, 0.3);
    synth_plan(&p, COMPACT_ATTENUATION_DB, &[low, low + 7.0], points, 2.5)
}

pub fn compact_dataset(points: usize) -> RawDataset {
    synthesize(&compact_device(), COMPACT_ATTENUATION_DB, &compact_plan(points), 0.0, None, 0).unwrap()
}

/// Starting guess a few percent away from the compact device.
pub fn compact_guess() -> CircuitParams {
    let p = compact_device();
    CircuitParams {
        omega_r: p.omega_r * (1.0 + 2e-5),
        kappa_int: p.kappa_int * 1.03,
        kappa_ext: p.kappa_ext * 0.98,
        kerr: p.kerr * 1.04,
        n_th: 0.0,
    }
}
