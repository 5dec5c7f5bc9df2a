//! Physical parameters: black-box quantization of the lumped circuit,
//! thermal occupation and drive-power conversion.
//!
//! Internally every frequency is angular (rad/s). The JSON configuration
//! carries explicit unit suffixes and is converted at the boundary.

use serde::{Deserialize, Serialize};

use crate::constants::{ghz, khz, mhz, to_hz, E_CHARGE, HBAR, K_B};
use crate::{Error, Result};

/// Lumped elements of the series LC resonator with an embedded junction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitElements {
    /// Geometric plus kinetic inductance, H.
    pub inductance: f64,
    /// Capacitance, F.
    pub capacitance: f64,
    /// Josephson inductance, H.
    pub junction_inductance: f64,
}

impl CircuitElements {
    /// The device values: 2.93 nH, 288 fF and a 0.341 nH junction.
    pub fn reference() -> Self {
        Self {
            inductance: 2.93e-9,
            capacitance: 288e-15,
            junction_inductance: 0.341e-9,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        if !(ok(self.inductance) && ok(self.capacitance) && ok(self.junction_inductance)) {
            return Err(Error::Domain("circuit elements must be finite".into()));
        }
        // L = 0 is the bare-junction limit and stays well defined.
        if self.inductance < 0.0 || self.capacitance <= 0.0 || self.junction_inductance <= 0.0 {
            return Err(Error::Domain(format!(
                "circuit elements must be positive (L={}, C={}, L_J={})",
                self.inductance, self.capacitance, self.junction_inductance
            )));
        }
        Ok(())
    }
}

/// Returns `(ω_r, K)` in rad/s for the series LC + junction circuit.
///
/// `ω_r = 1/√((L+L_J)C)` and `ħK = (e²/2C)(L_J/(L+L_J))³`.
pub fn quantize(elems: &CircuitElements) -> Result<(f64, f64)> {
    elems.validate()?;
    let total = elems.inductance + elems.junction_inductance;
    let omega_r = 1.0 / (total * elems.capacitance).sqrt();
    let participation = elems.junction_inductance / total;
    let charging = E_CHARGE * E_CHARGE / (2.0 * elems.capacitance);
    let kerr = charging * participation.powi(3) / HBAR;
    Ok((omega_r, kerr))
}

/// Bose–Einstein occupation `1/(exp(ħω/k_B T) − 1)`.
pub fn thermal_occupation(omega_r: f64, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::Domain(format!("temperature {temperature} K must be > 0")));
    }
    let x = HBAR * omega_r / (K_B * temperature);
    Ok(1.0 / x.exp_m1())
}

/// Oscillator parameters, all rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub omega_r: f64,
    pub kappa_int: f64,
    pub kappa_ext: f64,
    /// Kerr anharmonicity `K`.
    pub kerr: f64,
    pub n_th: f64,
}

impl CircuitParams {
    pub fn new(omega_r: f64, kappa_int: f64, kappa_ext: f64, kerr: f64, n_th: f64) -> Result<Self> {
        let p = Self {
            omega_r,
            kappa_int,
            kappa_ext,
            kerr,
            n_th,
        };
        p.validate()?;
        Ok(p)
    }

    /// Fitted device parameters with a zero-temperature bath.
    pub fn reference() -> Self {
        Self {
            omega_r: ghz(5.172),
            kappa_int: khz(189.0),
            kappa_ext: mhz(2.12),
            kerr: khz(76.0),
            n_th: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.omega_r, self.kappa_int, self.kappa_ext, self.kerr, self.n_th];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("circuit parameters must be finite".into()));
        }
        if self.omega_r <= 0.0 {
            return Err(Error::Domain(format!("omega_r = {} must be > 0", self.omega_r)));
        }
        if self.kappa_int < 0.0 || self.kappa_ext <= 0.0 {
            return Err(Error::Domain(format!(
                "need kappa_int ≥ 0 and kappa_ext > 0 (got {}, {})",
                self.kappa_int, self.kappa_ext
            )));
        }
        if self.kerr < 0.0 || self.n_th < 0.0 {
            return Err(Error::Domain(format!(
                "need K ≥ 0 and n_th ≥ 0 (got {}, {})",
                self.kerr, self.n_th
            )));
        }
        Ok(())
    }

    /// Total energy decay rate.
    pub fn kappa(&self) -> f64 {
        self.kappa_int + self.kappa_ext
    }

    pub fn with_kerr(self, kerr: f64) -> Self {
        Self { kerr, ..self }
    }

    pub fn with_n_th(self, n_th: f64) -> Self {
        Self { n_th, ..self }
    }

    /// Linear-response amplitude `2ε/κ` on resonance.
    pub fn linear_amplitude(&self, epsilon: f64) -> f64 {
        2.0 * epsilon / self.kappa()
    }

    /// Classical resonance `ω_r − K`: where the quantum model's low-power dip
    /// sits once normal ordering is accounted for.
    pub fn classical_resonance(&self) -> f64 {
        self.omega_r - self.kerr
    }
}

/// Drive settings: source power, line attenuation and drive frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub power_dbm_at_source: f64,
    pub attenuation_db: f64,
    pub omega_d: f64,
}

impl DriveSpec {
    pub fn new(power_dbm_at_source: f64, attenuation_db: f64, omega_d: f64) -> Result<Self> {
        if !(attenuation_db >= 0.0) {
            return Err(Error::Domain(format!("attenuation {attenuation_db} dB must be ≥ 0")));
        }
        Ok(Self {
            power_dbm_at_source,
            attenuation_db,
            omega_d,
        })
    }

    /// Specification with the power already referred to the device.
    pub fn at_device(power_dbm: f64, omega_d: f64) -> Self {
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

/// Power in watts for a level in dBm.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Drive rate `ε = √(κ_ext P / 2ħω_r)` for a power at the device.
pub fn epsilon_from_dbm(power_dbm: f64, params: &CircuitParams) -> f64 {
    let p = dbm_to_watts(power_dbm);
    (params.kappa_ext * p / (2.0 * HBAR * params.omega_r)).sqrt()
}

pub fn drive_strength(spec: &DriveSpec, params: &CircuitParams) -> f64 {
    epsilon_from_dbm(spec.device_power_dbm(), params)
}

/// Device-referred powers of the measured dataset, in dBm.
pub const REFERENCE_POWERS_DBM: [f64; 7] = [-135.0, -130.0, -127.0, -125.0, -124.2, -123.0, -122.0];

/// Attenuation between source and device found by the fit, dB.
pub const REFERENCE_ATTENUATION_DB: f64 = 118.3;

/// Parameter block of a run configuration, in one of two exclusive forms.
#[derive(Debug, Clone, PartialEq)]
pub enum DeviceConfig {
    Circuit(CircuitForm),
    Direct(DirectForm),
}

/// Lumped-element form; rates that quantization cannot supply are optional.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitForm {
    pub L_nH: f64,
    pub C_fF: f64,
    pub LJ_nH: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_int_kHz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_ext_MHz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_th: Option<f64>,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectForm {
    pub omega_r_GHz: f64,
    pub kappa_int_kHz: f64,
    pub kappa_ext_MHz: f64,
    pub K_kHz: f64,
    pub n_th: f64,
}

impl CircuitForm {
    pub fn elements(&self) -> CircuitElements {
        CircuitElements {
            inductance: self.L_nH * 1e-9,
            capacitance: self.C_fF * 1e-15,
            junction_inductance: self.LJ_nH * 1e-9,
        }
    }
}

impl DeviceConfig {
    pub fn from_value(value: &serde_json::Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Config("device block must be a JSON object".into()))?;
        let circuit = ["L_nH", "C_fF", "LJ_nH"].iter().any(|k| obj.contains_key(*k));
        let direct = ["omega_r_GHz", "K_kHz"].iter().any(|k| obj.contains_key(*k));
        match (circuit, direct) {
            (true, false) => serde_json::from_value(value.clone())
                .map(DeviceConfig::Circuit)
                .map_err(|e| Error::Config(format!("circuit form: {e}"))),
            (false, true) => serde_json::from_value(value.clone())
                .map(DeviceConfig::Direct)
                .map_err(|e| Error::Config(format!("direct form: {e}"))),
            (true, true) => Err(Error::Config(
                "device block mixes circuit-element and direct parameter forms".into(),
            )),
            (false, false) => Err(Error::Config(
                "device block needs either {L_nH, C_fF, LJ_nH} or {omega_r_GHz, kappa_int_kHz, kappa_ext_MHz, K_kHz, n_th}".into(),
            )),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        Self::from_value(&value)
    }

    pub fn to_value(&self) -> serde_json::Value {
        match self {
            DeviceConfig::Circuit(c) => serde_json::to_value(c),
            DeviceConfig::Direct(d) => serde_json::to_value(d),
        }
        .expect("plain structs serialize")
    }

    /// Resolves the configuration to rad/s parameters.
    pub fn params(&self) -> Result<CircuitParams> {
        match self {
            DeviceConfig::Direct(d) => CircuitParams::new(
                ghz(d.omega_r_GHz),
                khz(d.kappa_int_kHz),
                mhz(d.kappa_ext_MHz),
                khz(d.K_kHz),
                d.n_th,
            ),
            DeviceConfig::Circuit(c) => {
                let (omega_r, kerr) = quantize(&c.elements())?;
                let (Some(ki), Some(ke)) = (c.kappa_int_kHz, c.kappa_ext_MHz) else {
                    return Err(Error::Config(
                        "circuit form needs kappa_int_kHz and kappa_ext_MHz to define the oscillator".into(),
                    ));
                };
                CircuitParams::new(omega_r, khz(ki), mhz(ke), kerr, c.n_th.unwrap_or(0.0))
            }
        }
    }
}

impl From<&CircuitParams> for DirectForm {
    fn from(p: &CircuitParams) -> Self {
        DirectForm {
            omega_r_GHz: to_hz(p.omega_r) * 1e-9,
            kappa_int_kHz: to_hz(p.kappa_int) * 1e-3,
            kappa_ext_MHz: to_hz(p.kappa_ext) * 1e-6,
            K_kHz: to_hz(p.kerr) * 1e-3,
            n_th: p.n_th,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::TWO_PI;

    #[test]
    fn quantize_device_values() {
        let (omega_r, kerr) = quantize(&CircuitElements::reference()).unwrap();
        assert!((kerr / khz(76.0) - 1.0).abs() < 0.01, "K = {} kHz", to_hz(kerr) / 1e3);
        assert!((omega_r / ghz(5.17) - 1.0).abs() < 0.005);
    }

    #[test]
    fn quantize_bare_junction() {
        let e = CircuitElements {
            inductance: 0.0,
            capacitance: 288e-15,
            junction_inductance: 0.341e-9,
        };
        let (omega_r, kerr) = quantize(&e).unwrap();
        let oracle = 1.0 / (0.341e-9f64 * 288e-15).sqrt();
        assert!((omega_r - oracle).abs() < 1e-6 * oracle);
        assert!((to_hz(omega_r) / 1e9 - 16.06).abs() < 0.01);
        assert!((kerr - E_CHARGE * E_CHARGE / (2.0 * 288e-15) / HBAR).abs() < 1e-9 * kerr);
    }

    #[test]
    fn quantize_small_junction_vanishing_kerr() {
        let mut e = CircuitElements::reference();
        e.junction_inductance = 1e-15;
        let (_, kerr) = quantize(&e).unwrap();
        assert!(kerr < 1e-12 * khz(76.0));
    }

    #[test]
    fn quantize_rejects_nonpositive() {
        let mut e = CircuitElements::reference();
        e.capacitance = 0.0;
        assert!(matches!(quantize(&e), Err(Error::Domain(_))));
        let mut e = CircuitElements::reference();
        e.junction_inductance = -1e-9;
        assert!(quantize(&e).is_err());
    }

    #[test]
    fn thermal_occupation_values() {
        let n = thermal_occupation(ghz(5.172), 0.020).unwrap();
        assert!((n / 4e-6 - 1.0).abs() < 0.2, "n_th = {n:e}");
        // ħω = k_B T ln 2
        let t = 1.0;
        let omega = K_B * t * 2f64.ln() / HBAR;
        assert!((thermal_occupation(omega, t).unwrap() - 1.0).abs() < 1e-12);
        // direct evaluation: x = ħω/kT = 0.82723, 1/(e^x − 1) = 0.77678
        let n300 = thermal_occupation(ghz(5.172), 0.300).unwrap();
        assert!((n300 - 0.77678).abs() < 1e-4, "n_th(0.3 K) = {n300}");
        assert!(matches!(thermal_occupation(ghz(5.0), 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn drive_strength_device_power() {
        let p = CircuitParams::reference();
        let eps = epsilon_from_dbm(-122.0, &p);
        assert!((eps / 3.50e7 - 1.0).abs() < 0.005, "ε = {eps:e}");
        assert!((p.linear_amplitude(eps) - 4.83).abs() < 0.01);
        assert_eq!(epsilon_from_dbm(f64::NEG_INFINITY, &p), 0.0);
    }

    #[test]
    fn drive_strength_attenuated_source() {
        let p = CircuitParams::reference();
        let spec = DriveSpec::new(0.0, 118.3, ghz(5.17)).unwrap();
        let direct = DriveSpec::at_device(-118.3, ghz(5.17));
        let a = drive_strength(&spec, &p);
        let b = drive_strength(&direct, &p);
        assert!((a - b).abs() <= 1e-12 * b);
        assert!(DriveSpec::new(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn kappa_is_sum() {
        let p = CircuitParams::reference();
        assert!((p.kappa() / TWO_PI - 2.309e6).abs() < 1e-3);
    }

    #[test]
    fn config_forms() {
        let direct = DeviceConfig::from_json(
            r#"{"omega_r_GHz":5.172,"kappa_int_kHz":189,"kappa_ext_MHz":2.12,"K_kHz":76,"n_th":0}"#,
        )
        .unwrap();
        let p = direct.params().unwrap();
        assert!((p.omega_r - CircuitParams::reference().omega_r).abs() < 1e-3);

        let circuit =
            DeviceConfig::from_json(r#"{"L_nH":2.93,"C_fF":288,"LJ_nH":0.341}"#).unwrap();
        assert!(matches!(circuit, DeviceConfig::Circuit(_)));
        assert!(matches!(circuit.params(), Err(Error::Config(_))));

        let mixed = DeviceConfig::from_json(r#"{"L_nH":2.93,"C_fF":288,"LJ_nH":0.341,"K_kHz":76}"#);
        assert!(matches!(mixed, Err(Error::Config(_))));
        let unknown = DeviceConfig::from_json(r#"{"L_nH":2.93,"C_fF":288,"LJ_nH":0.341,"foo":1}"#);
        assert!(matches!(unknown, Err(Error::Config(_))));
        assert!(matches!(DeviceConfig::from_json("{}"), Err(Error::Config(_))));
    }

    #[test]
    fn direct_form_round_trip() {
        let p = CircuitParams::reference().with_n_th(0.01);
        let form = DirectForm::from(&p);
        let back = DeviceConfig::Direct(form).params().unwrap();
        assert!((back.kerr - p.kerr).abs() < 1e-9 * p.kerr);
        assert!((back.kappa_ext - p.kappa_ext).abs() < 1e-9 * p.kappa_ext);
    }
}
