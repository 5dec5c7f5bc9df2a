//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported method has a plain-Rust twin returning [`kerrsim::Result`]
//! so the numerics can be tested natively.

use kerrsim::constants::{ghz, khz, mhz, to_hz};
use kerrsim::device::{epsilon_from_dbm, CircuitParams};
use kerrsim::lindblad;
use kerrsim::response::{self, dip_grid, Backend, DriveGrid, SweepOptions};
use kerrsim::wigner::{self, PhaseSpaceGrid};
use kerrsim::{perturbative, Result};
use wasm_bindgen::prelude::*;

fn js(err: kerrsim::Error) -> JsError {
    JsError::new(&err.to_string())
}

fn backend(name: &str) -> Result<Backend> {
    match name {
        "quantum" => Ok(Backend::Quantum),
        "classical" => Ok(Backend::Classical),
        "classical_nl" => Ok(Backend::ClassicalNl),
        "perturbative" => Ok(Backend::Perturbative),
        other => Err(kerrsim::Error::Config(format!("unknown backend `{other}`"))),
    }
}

#[wasm_bindgen]
pub struct Device {
    params: CircuitParams,
}

#[wasm_bindgen]
impl Device {
    /// Rates as ordinary frequencies.
    #[wasm_bindgen(constructor)]
    pub fn new(omega_r_ghz: f64, kappa_int_khz: f64, kappa_ext_mhz: f64, kerr_khz: f64) -> std::result::Result<Device, JsError> {
        Self::build(omega_r_ghz, kappa_int_khz, kappa_ext_mhz, kerr_khz).map_err(js)
    }

    pub fn reference() -> Device {
        Device {
            params: CircuitParams::reference(),
        }
    }

    /// Interleaved `(detuning_kHz, |S21|)` pairs around the dip, detuning
    /// measured from `ω_r − K`.
    pub fn s21_curve(&self, power_dbm: f64, backend_name: &str, points: usize) -> std::result::Result<Vec<f64>, JsError> {
        self.s21_curve_native(power_dbm, backend_name, points).map_err(js)
    }

    /// Row-major Wigner function of the steady state at the transmission
    /// minimum on a `points × points` grid, followed by the grid half-width.
    pub fn wigner_map(&self, power_dbm: f64, points: usize) -> std::result::Result<Vec<f64>, JsError> {
        self.wigner_map_native(power_dbm, points).map_err(js)
    }

    /// Interleaved `(θ, Δu/Δu_coh)` pairs followed by `θ_min` and the
    /// minimum, for the steady state at the transmission minimum.
    pub fn squeeze_scan(&self, power_dbm: f64, points: usize) -> std::result::Result<Vec<f64>, JsError> {
        self.squeeze_scan_native(power_dbm, points).map_err(js)
    }

    /// `γ/2π` in kHz from quantum noise.
    pub fn gamma_khz(&self) -> f64 {
        to_hz(perturbative::gamma_nl(&self.params)) / 1e3
    }
}

impl Device {
    pub fn build(omega_r_ghz: f64, kappa_int_khz: f64, kappa_ext_mhz: f64, kerr_khz: f64) -> Result<Device> {
        let params = CircuitParams::new(ghz(omega_r_ghz), khz(kappa_int_khz), mhz(kappa_ext_mhz), khz(kerr_khz), 0.0)?;
        Ok(Device { params })
    }

    pub fn s21_curve_native(&self, power_dbm: f64, backend_name: &str, points: usize) -> Result<Vec<f64>> {
        let b = backend(backend_name)?;
        let p = &self.params;
        let grid = dip_grid(p, power_dbm, 2.0, points.max(5));
        let opts = SweepOptions {
            gamma_nl: perturbative::gamma_nl(p),
            ..SweepOptions::default()
        };
        let tr = response::sweep(b, p, &DriveGrid::at_device(power_dbm, grid), &opts)?;
        Ok(tr
            .omega_d
            .iter()
            .zip(&tr.s21)
            .flat_map(|(w, s)| [to_hz(w - p.classical_resonance()) / 1e3, s.norm()])
            .collect())
    }

    fn steady_at_dip(&self, power_dbm: f64) -> Result<kerrsim::fock::DensityMatrix> {
        let p = &self.params;
        let drive = DriveGrid::at_device(power_dbm, dip_grid(p, power_dbm, 1.0, 31));
        let tr = response::sweep(Backend::Quantum, p, &drive, &SweepOptions::default())?;
        let dip = response::extract_min(&tr)?;
        let eps = epsilon_from_dbm(power_dbm, p);
        let l = lindblad::build(p, p.omega_r - p.kerr - dip.omega_min, eps, lindblad::default_dim(p, eps))?;
        lindblad::steady_state(&l)
    }

    pub fn wigner_map_native(&self, power_dbm: f64, points: usize) -> Result<Vec<f64>> {
        let rho = self.steady_at_dip(power_dbm)?;
        let half = 2f64.sqrt() * rho.mean_amplitude().norm() + 4.0;
        let grid = PhaseSpaceGrid::symmetric(half, points.max(7))?;
        let mut w = wigner::wigner_values(rho.matrix(), &grid);
        w.push(half);
        Ok(w)
    }

    pub fn squeeze_scan_native(&self, power_dbm: f64, points: usize) -> Result<Vec<f64>> {
        let rho = self.steady_at_dip(power_dbm)?;
        let n = points.max(2);
        let thetas: Vec<f64> = (0..n)
            .map(|i| -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / n as f64)
            .collect();
        let scan = wigner::squeeze_scan(&rho, &thetas)?;
        let mut out: Vec<f64> = scan.curve.iter().flat_map(|(t, d)| [*t, *d]).collect();
        out.extend([scan.theta_min, scan.du_min_rel]);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_dip_depth() {
        let d = Device::build(5.0, 189.0, 2.12, 0.0).unwrap();
        let c = d.s21_curve_native(-135.0, "classical", 41).unwrap();
        assert_eq!(c.len(), 82);
        let min = c.chunks(2).map(|p| p[1]).fold(f64::INFINITY, f64::min);
        assert!((min - 0.0819).abs() < 1e-3, "min {min}");
    }

    #[test]
    fn unknown_backend_is_rejected() {
        assert!(Device::reference().s21_curve_native(-130.0, "bogus", 11).is_err());
    }

    #[test]
    fn wigner_map_is_normalized() {
        let n = 81;
        let w = Device::reference().wigner_map_native(-130.0, n).unwrap();
        assert_eq!(w.len(), n * n + 1);
        let half = w[n * n];
        let h = 2.0 * half / (n - 1) as f64;
        let total: f64 = w[..n * n].iter().sum::<f64>() * h * h;
        assert!((total - 1.0).abs() < 1e-3, "∬W = {total}");
    }

    #[test]
    fn squeeze_scan_finds_minimum_below_coherent() {
        let s = Device::reference().squeeze_scan_native(-122.0, 60).unwrap();
        assert_eq!(s.len(), 122);
        let du = s[121];
        assert!(du < 0.9 && du > 0.8, "Δu = {du}");
    }

    #[test]
    fn gamma_matches_closed_form() {
        assert!((Device::reference().gamma_khz() - 5.0).abs() < 0.1);
    }
}
