//! Run configuration. The accepted shape is published in
//! `docs/config.schema.json`; parsing rejects unknown keys and range checks
//! mirror the schema bounds.

use std::path::{Path, PathBuf};

use kerrsim::device::{CircuitParams, DeviceConfig, REFERENCE_ATTENUATION_DB, REFERENCE_POWERS_DBM};
use kerrsim::wigner::{DEFORM_LAMBDA, DEFORM_TIME_KERR_UNITS};
use kerrsim::{Error, Result};
use serde::Deserialize;

#[cfg(test)]
pub const SCHEMA: &str = include_str!("../../../docs/config.schema.json");

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub device: Option<serde_json::Value>,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub drive: Drive,
    #[serde(default)]
    pub point: Point,
    #[serde(default)]
    pub phase_space: PhaseSpace,
    #[serde(default)]
    pub deform: Deform,
    #[serde(default)]
    pub evolve: Evolve,
    #[serde(default)]
    pub synth: Synth,
    #[serde(default)]
    pub decimate: Decimate,
    #[serde(default)]
    pub fit: Fit,
    #[serde(default)]
    pub paths: Paths,
    pub seed: Option<u64>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Solver {
    pub dim: Option<usize>,
    pub cutoff_tolerance: f64,
    pub residual_tolerance: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Solver {
    fn default() -> Self {
        Self {
            dim: None,
            cutoff_tolerance: 1e-7,
            residual_tolerance: 1e-10,
            rtol: 1e-8,
            atol: 1e-10,
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Drive {
    pub powers_dbm: Vec<f64>,
    pub freq_hz: Option<Vec<f64>>,
    pub half_width_kappas: f64,
    pub points: usize,
    pub gamma_nl_kHz: Option<f64>,
}

impl Default for Drive {
    fn default() -> Self {
        Self {
            powers_dbm: REFERENCE_POWERS_DBM.to_vec(),
            freq_hz: None,
            half_width_kappas: 2.0,
            points: 41,
            gamma_nl_kHz: None,
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Point {
    pub power_dbm: f64,
    pub detuning_kHz: Option<f64>,
}

impl Default for Point {
    fn default() -> Self {
        Self {
            power_dbm: -122.0,
            detuning_kHz: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseSpace {
    pub half_width: Option<f64>,
    pub points: usize,
    pub theta_points: usize,
}

impl Default for PhaseSpace {
    fn default() -> Self {
        Self {
            half_width: None,
            points: 201,
            theta_points: 180,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Deform {
    pub lambda: f64,
    pub duration_kerr_units: f64,
}

impl Default for Deform {
    fn default() -> Self {
        Self {
            lambda: DEFORM_LAMBDA,
            duration_kerr_units: DEFORM_TIME_KERR_UNITS,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Evolve {
    pub t_end_us: f64,
    pub samples: usize,
    pub initial_amplitude: [f64; 2],
}

impl Default for Evolve {
    fn default() -> Self {
        Self {
            t_end_us: 1.0,
            samples: 101,
            initial_amplitude: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Synth {
    pub attenuation_db: f64,
    pub noise_sigma: f64,
    pub points: usize,
    pub half_width_kappas: f64,
}

impl Default for Synth {
    fn default() -> Self {
        Self {
            attenuation_db: REFERENCE_ATTENUATION_DB,
            noise_sigma: 0.0,
            points: 100,
            half_width_kappas: 3.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Decimate {
    pub block: usize,
}

impl Default for Decimate {
    fn default() -> Self {
        Self { block: 5 }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fit {
    pub attenuation_db: f64,
    pub rel_bounds: f64,
    pub gamma_kHz: [f64; 3],
    pub kerr_rel: f64,
    pub tol: f64,
    pub max_evals: usize,
    pub bootstrap: usize,
}

impl Default for Fit {
    fn default() -> Self {
        Self {
            attenuation_db: REFERENCE_ATTENUATION_DB,
            rel_bounds: 0.1,
            gamma_kHz: [0.0, 20.0, 2.0],
            kerr_rel: 0.2,
            tol: 1e-6,
            max_evals: 20_000,
            bootstrap: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<String>,
    pub baseline: Option<String>,
    pub out: Option<String>,
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(what.to_string()))
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(dev) = &self.device {
            DeviceConfig::from_value(dev)?;
        }
        let s = &self.solver;
        check(s.dim.is_none_or(|d| d >= 2), "solver.dim must be ≥ 2")?;
        for (v, name) in [
            (s.cutoff_tolerance, "solver.cutoff_tolerance"),
            (s.residual_tolerance, "solver.residual_tolerance"),
            (s.rtol, "solver.rtol"),
            (s.atol, "solver.atol"),
        ] {
            check(positive(v), &format!("{name} must be > 0"))?;
        }
        let d = &self.drive;
        check(!d.powers_dbm.is_empty(), "drive.powers_dbm must not be empty")?;
        check(d.powers_dbm.iter().all(|p| p.is_finite()), "drive.powers_dbm must be finite")?;
        if let Some(f) = &d.freq_hz {
            check(!f.is_empty() && f.iter().all(|v| positive(*v)), "drive.freq_hz must hold positive frequencies")?;
        }
        check(positive(d.half_width_kappas), "drive.half_width_kappas must be > 0")?;
        check(d.points >= 1, "drive.points must be ≥ 1")?;
        check(d.gamma_nl_kHz.is_none_or(|g| g >= 0.0), "drive.gamma_nl_kHz must be ≥ 0")?;
        check(self.point.power_dbm.is_finite(), "point.power_dbm must be finite")?;
        let ps = &self.phase_space;
        check(ps.half_width.is_none_or(positive), "phase_space.half_width must be > 0")?;
        check(ps.points >= 7, "phase_space.points must be ≥ 7")?;
        check(ps.theta_points >= 2, "phase_space.theta_points must be ≥ 2")?;
        check(positive(self.deform.duration_kerr_units), "deform.duration_kerr_units must be > 0")?;
        check(positive(self.evolve.t_end_us), "evolve.t_end_us must be > 0")?;
        check(self.evolve.samples >= 2, "evolve.samples must be ≥ 2")?;
        check(self.synth.noise_sigma >= 0.0, "synth.noise_sigma must be ≥ 0")?;
        check(self.synth.points >= 5, "synth.points must be ≥ 5")?;
        check(positive(self.synth.half_width_kappas), "synth.half_width_kappas must be > 0")?;
        check(self.decimate.block >= 1, "decimate.block must be ≥ 1")?;
        let f = &self.fit;
        check(positive(f.rel_bounds), "fit.rel_bounds must be > 0")?;
        check(positive(f.kerr_rel), "fit.kerr_rel must be > 0")?;
        check(positive(f.tol), "fit.tol must be > 0")?;
        check(f.max_evals >= 1, "fit.max_evals must be ≥ 1")?;
        let [lo, hi, init] = f.gamma_kHz;
        check(
            lo >= 0.0 && lo < hi && (lo..=hi).contains(&init),
            "fit.gamma_kHz must be [lower, upper, start] with lower ≤ start ≤ upper",
        )?;
        Ok(())
    }

    pub fn device(&self) -> Result<DeviceConfig> {
        let dev = self
            .device
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a `device` block".into()))?;
        DeviceConfig::from_value(dev)
    }

    pub fn params(&self) -> Result<CircuitParams> {
        self.device()?.params()
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn dataset_path(&self) -> Result<PathBuf> {
        self.paths
            .dataset
            .as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::Config("this command needs `paths.dataset`".into()))
    }

    pub fn baseline_path(&self) -> Option<PathBuf> {
        self.paths.baseline.as_deref().map(|p| self.resolve(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn keys(v: &serde_json::Value) -> BTreeSet<String> {
        v.as_object().unwrap().keys().cloned().collect()
    }

    #[test]
    fn schema_lists_every_block() {
        let schema: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
        let props = &schema["properties"];
        let expected: BTreeSet<String> = [
            "device",
            "solver",
            "drive",
            "point",
            "phase_space",
            "deform",
            "evolve",
            "synth",
            "decimate",
            "fit",
            "paths",
            "seed",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        assert_eq!(keys(props), expected);
        // every documented key of every block is accepted, and nothing else
        for block in ["solver", "drive", "point", "phase_space", "deform", "evolve", "synth", "decimate", "fit", "paths"] {
            for key in keys(&props[block]["properties"]) {
                let sample = match (block, key.as_str()) {
                    ("paths", _) => serde_json::json!("x"),
                    (_, "freq_hz" | "powers_dbm") => serde_json::json!([5e9]),
                    (_, "gamma_kHz") => serde_json::json!([0.0, 10.0, 1.0]),
                    (_, "initial_amplitude") => serde_json::json!([0.0, 0.0]),
                    (_, "dim" | "points" | "samples" | "block" | "max_evals" | "bootstrap" | "theta_points") => {
                        serde_json::json!(101)
                    }
                    _ => serde_json::json!(1.0),
                };
                let text = serde_json::json!({ block: { key.clone(): sample } }).to_string();
                RunConfig::parse(&text, Path::new(".")).unwrap_or_else(|e| panic!("{block}.{key}: {e}"));
            }
            let text = serde_json::json!({ block: { "bogus": 1 } }).to_string();
            assert!(RunConfig::parse(&text, Path::new(".")).is_err(), "{block} accepted an unknown key");
        }
    }

    #[test]
    fn rejects_unknown_top_level_and_bad_ranges() {
        assert!(RunConfig::parse(r#"{"sed": 1}"#, Path::new(".")).is_err());
        assert!(RunConfig::parse(r#"{"synth": {"noise_sigma": -1}}"#, Path::new(".")).is_err());
        assert!(RunConfig::parse(r#"{"fit": {"gamma_kHz": [5, 1, 2]}}"#, Path::new(".")).is_err());
        assert!(RunConfig::parse(r#"{"device": {"L_nH": 2.93, "omega_r_GHz": 5}}"#, Path::new(".")).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let cfg = RunConfig::parse(r#"{"paths": {"dataset": "data.csv"}}"#, Path::new("/tmp/run")).unwrap();
        assert_eq!(cfg.dataset_path().unwrap(), PathBuf::from("/tmp/run/data.csv"));
    }
}
