//! Transmission sweeps past the side-coupled resonator,
//! `S21 = 1 − κ_ext⟨â⟩/(2ε)`, from any of the amplitude backends, plus dip
//! extraction.
//!
//! Detuning conventions: the quantum backend uses `Δ_q = ω_r − K − ω_d`. The
//! classical backends are evaluated with their resonance placed at
//! `ω_r − K`, so all backends share the same low-power dip; the perturbative
//! backend additionally carries the thermal shift `2K n_th`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::device::{epsilon_from_dbm, CircuitParams};
use crate::{classical, lindblad, par_map, perturbative, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Quantum,
    Classical,
    ClassicalNl,
    Perturbative,
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Quantum => "quantum",
            Backend::Classical => "classical",
            Backend::ClassicalNl => "classical_nl",
            Backend::Perturbative => "perturbative",
        }
    }
}

/// One power's transmission over a drive-frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTrace {
    /// Power at the device, dBm (`NaN` when unknown).
    pub power_dbm: f64,
    /// Drive rate, rad/s.
    pub epsilon: f64,
    /// External coupling used to form `S21`, rad/s.
    pub kappa_ext: f64,
    pub backend: Backend,
    /// Drive frequencies, rad/s.
    pub omega_d: Vec<f64>,
    pub s21: Vec<C64>,
}

impl SweepTrace {
    pub fn len(&self) -> usize {
        self.omega_d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega_d.is_empty()
    }

    pub fn abs(&self) -> Vec<f64> {
        self.s21.iter().map(|s| s.norm()).collect()
    }
}

/// Drive power and frequency grid for one sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveGrid {
    pub power_dbm_at_source: f64,
    pub attenuation_db: f64,
    pub omega_d: Vec<f64>,
}

impl DriveGrid {
    pub fn at_device(power_dbm: f64, omega_d: Vec<f64>) -> Self {
        Self {
            power_dbm_at_source: power_dbm,
            attenuation_db: 0.0,
            omega_d,
        }
    }

    pub fn device_power_dbm(&self) -> f64 {
        self.power_dbm_at_source - self.attenuation_db
    }
}

/// Backend-specific settings.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepOptions {
    /// Ad-hoc damping for [`Backend::ClassicalNl`], rad/s.
    pub gamma_nl: f64,
    /// Fock cutoff override for [`Backend::Quantum`].
    pub dim: Option<usize>,
    pub strict: bool,
}

/// `n` evenly spaced points on `[start, stop]`.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Grid of `n` points spanning `±half_width_kappas·κ` around the expected dip
/// at `ω_r − K − Kα²`.
pub fn dip_grid(params: &CircuitParams, power_dbm: f64, half_width_kappas: f64, n: usize) -> Vec<f64> {
    let alpha = params.linear_amplitude(epsilon_from_dbm(power_dbm, params));
    let center = params.classical_resonance() - params.kerr * alpha * alpha;
    let hw = half_width_kappas * params.kappa();
    linspace(center - hw, center + hw, n)
}

fn shifted(params: &CircuitParams, omega_r: f64) -> CircuitParams {
    CircuitParams { omega_r, ..*params }
}

/// Computes `S21` over the drive grid with the chosen backend.
pub fn sweep(backend: Backend, params: &CircuitParams, drive: &DriveGrid, opts: &SweepOptions) -> Result<SweepTrace> {
    params.validate()?;
    if drive.omega_d.is_empty() {
        return Err(Error::Domain("empty frequency grid".into()));
    }
    let power = drive.device_power_dbm();
    let epsilon = epsilon_from_dbm(power, params);
    let s21 = match backend {
        Backend::Quantum => quantum_s21(params, epsilon, &drive.omega_d, opts)?,
        Backend::Classical | Backend::ClassicalNl | Backend::Perturbative => {
            let (resonance, gamma) = match backend {
                Backend::Classical => (params.classical_resonance(), 0.0),
                Backend::ClassicalNl => (params.classical_resonance(), opts.gamma_nl),
                _ => (
                    params.classical_resonance() - 2.0 * params.kerr * params.n_th,
                    perturbative::gamma_nl(params),
                ),
            };
            classical::s21_trace(&shifted(params, resonance), gamma, epsilon, &drive.omega_d)?.s21
        }
    };
    Ok(SweepTrace {
        power_dbm: power,
        epsilon,
        kappa_ext: params.kappa_ext,
        backend,
        omega_d: drive.omega_d.clone(),
        s21,
    })
}

fn quantum_s21(params: &CircuitParams, epsilon: f64, grid: &[f64], opts: &SweepOptions) -> Result<Vec<C64>> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain("quantum backend needs a nonzero drive".into()));
    }
    let dim = opts.dim.unwrap_or_else(|| lindblad::default_dim(params, epsilon));
    let ss_opts = lindblad::SteadyStateOptions {
        strict: opts.strict,
        ..Default::default()
    };
    let points: Vec<(usize, f64)> = grid.iter().copied().enumerate().collect();
    par_map(&points, |&(index, omega_d)| {
        let delta_q = params.omega_r - params.kerr - omega_d;
        let amp = lindblad::build(params, delta_q, epsilon, dim)
            .and_then(|l| lindblad::steady_state_with(&l, &ss_opts))
            .map(|ss| ss.rho.mean_amplitude())
            .map_err(|e| Error::Backend {
                index,
                source: Box::new(e),
            })?;
        Ok(C64::new(1.0, 0.0) - params.kappa_ext * amp / (2.0 * epsilon))
    })
    .into_iter()
    .collect()
}

/// Location and depth of the transmission dip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipSummary {
    pub power_dbm: f64,
    pub min_abs_s21: f64,
    /// rad/s.
    pub omega_min: f64,
    /// rad/s.
    pub kappa_int_eff: f64,
}

/// Internal damping implied by a dip depth, `κ_ext m/(1 − m)`.
pub fn kappa_int_from_min(min_abs_s21: f64, kappa_ext: f64) -> f64 {
    kappa_ext * min_abs_s21 / (1.0 - min_abs_s21)
}

/// Linear dip depth `1 − κ_ext/(κ_ext + κ_int)`.
pub fn min_from_kappa_int(kappa_int: f64, kappa_ext: f64) -> f64 {
    1.0 - kappa_ext / (kappa_ext + kappa_int)
}

/// Vertex of the parabola through three points; `None` when degenerate.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    let d01 = (y[1] - y[0]) / (x[1] - x[0]);
    let d12 = (y[2] - y[1]) / (x[2] - x[1]);
    let curvature = (d12 - d01) / (x[2] - x[0]);
    if !(curvature > 0.0) {
        return None;
    }
    // y = y1 + s (x − x1) + c (x − x1)², s the centered slope
    let slope = d01 + curvature * (x[1] - x[0]);
    let shift = -slope / (2.0 * curvature);
    let xv = x[1] + shift;
    if xv < x[0] || xv > x[2] {
        return None;
    }
    Some((xv, y[1] + slope * shift + curvature * shift * shift))
}

/// Grid minimum of `|S21|` refined by a three-point parabola.
pub fn extract_min(trace: &SweepTrace) -> Result<DipSummary> {
    let n = trace.len();
    if n < 5 || trace.s21.len() != n {
        return Err(Error::Domain(format!("need ≥ 5 points to locate a dip, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| trace.omega_d[i].partial_cmp(&trace.omega_d[j]).expect("finite grid"));
    let x: Vec<f64> = order.iter().map(|&i| trace.omega_d[i]).collect();
    let y: Vec<f64> = order.iter().map(|&i| trace.s21[i].norm()).collect();
    let k = y
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite S21"))
        .map(|(k, _)| k)
        .expect("nonempty");
    if k == 0 || k == n - 1 {
        return Err(Error::Bracketing { index: k, len: n });
    }
    let (omega_min, min_abs) = parabola_vertex([x[k - 1], x[k], x[k + 1]], [y[k - 1], y[k], y[k + 1]])
        .unwrap_or((x[k], y[k]));
    let min_abs = min_abs.clamp(0.0, y[k]);
    Ok(DipSummary {
        power_dbm: trace.power_dbm,
        min_abs_s21: min_abs,
        omega_min,
        kappa_int_eff: kappa_int_from_min(min_abs, trace.kappa_ext),
    })
}

/// Dip detuning against the classical prediction `Kα²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaMinRow {
    pub power_dbm: f64,
    /// rad/s.
    pub omega_min: f64,
    /// `(ω_r − K) − ω_min`, rad/s.
    pub detuning: f64,
    /// `Kα²` with `α = 2ε/κ`, rad/s.
    pub k_alpha2: f64,
}

pub fn delta_min_check(traces: &[SweepTrace], params: &CircuitParams) -> Result<Vec<DeltaMinRow>> {
    traces
        .iter()
        .map(|tr| {
            let dip = extract_min(tr)?;
            let alpha = params.linear_amplitude(tr.epsilon);
            Ok(DeltaMinRow {
                power_dbm: tr.power_dbm,
                omega_min: dip.omega_min,
                detuning: params.classical_resonance() - dip.omega_min,
                k_alpha2: params.kerr * alpha * alpha,
            })
        })
        .collect()
}

/// Writes traces as `power_dbm,freq_Hz,re_s21,im_s21,abs_s21` rows.
pub fn write_traces_csv<W: Write>(mut out: W, traces: &[SweepTrace]) -> Result<()> {
    writeln!(out, "power_dbm,freq_Hz,re_s21,im_s21,abs_s21")?;
    for tr in traces {
        for (w, s) in tr.omega_d.iter().zip(&tr.s21) {
            writeln!(
                out,
                "{},{},{},{},{}",
                tr.power_dbm,
                crate::constants::to_hz(*w),
                s.re,
                s.im,
                s.norm()
            )?;
        }
    }
    Ok(())
}

/// JSON summary of dips with ordinary-frequency units.
pub fn dip_summary_json(dips: &[DipSummary]) -> serde_json::Value {
    use crate::constants::to_hz;
    let rows: Vec<serde_json::Value> = dips
        .iter()
        .map(|d| {
            serde_json::json!({
                "power_dbm": d.power_dbm,
                "min_abs_s21": d.min_abs_s21,
                "freq_min_Hz": to_hz(d.omega_min),
                "kappa_int_eff_Hz": to_hz(d.kappa_int_eff),
            })
        })
        .collect();
    serde_json::json!({
        "units": {
            "power_dbm": "dBm at device",
            "freq_min_Hz": "Hz",
            "kappa_int_eff_Hz": "Hz (ordinary frequency, κ/2π)",
        },
        "dips": rows,
    })
}
