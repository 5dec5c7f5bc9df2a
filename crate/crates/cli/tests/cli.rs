use std::path::{Path, PathBuf};
use std::process::Command;

use kerrsim::device::{epsilon_from_dbm, CircuitParams};
use serde_json::{json, Value};

fn kerrsim(dir: &Path, config: &Value, args: &[&str]) -> (bool, PathBuf, String) {
    let cfg = dir.join(format!("{}.json", args.join("_").replace('-', "")));
    std::fs::write(&cfg, config.to_string()).unwrap();
    let out = dir.join(format!("out_{}", args.join("_")));
    let res = Command::new(env!("CARGO_BIN_EXE_kerrsim"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    (res.status.success(), out, String::from_utf8_lossy(&res.stderr).into_owned())
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn reference_device() -> Value {
    json!({ "L_nH": 2.93, "C_fF": 288, "LJ_nH": 0.341, "kappa_int_kHz": 189, "kappa_ext_MHz": 2.12, "n_th": 0 })
}

fn compact_device() -> Value {
    json!({ "omega_r_GHz": 5.0, "kappa_int_kHz": 300, "kappa_ext_MHz": 1.5, "K_kHz": 500, "n_th": 0 })
}

/// Device power with a linear-response photon number `n` on the compact device.
fn compact_power(n: f64) -> f64 {
    let p = CircuitParams::new(
        kerrsim::constants::ghz(5.0),
        kerrsim::constants::khz(300.0),
        kerrsim::constants::mhz(1.5),
        kerrsim::constants::khz(500.0),
        0.0,
    )
    .unwrap();
    let a = p.linear_amplitude(epsilon_from_dbm(-140.0, &p));
    -140.0 + 10.0 * (n / (a * a)).log10()
}

fn csv_rows(path: PathBuf) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn quantize_reports_kerr_shift() {
    let dir = tempfile::tempdir().unwrap();
    let (ok, out, err) = kerrsim(dir.path(), &json!({ "device": reference_device() }), &["quantize"]);
    assert!(ok, "{err}");
    let q = read_json(out.join("quantize.json"));
    let k = q["K_Hz"].as_f64().unwrap();
    assert!((k / 76e3 - 1.0).abs() < 0.01, "K = {k} Hz");
    let manifest = read_json(out.join("manifest.json"));
    assert_eq!(manifest["command"], "quantize");
    assert_eq!(manifest["inputs"]["config"]["sha256"].as_str().unwrap().len(), 64);
}

fn max_abs_gap(dir: &Path, power: f64, a: &str, b: &str) -> f64 {
    let cfg = json!({ "device": reference_device(), "drive": { "powers_dbm": [power], "points": 31 } });
    let (ok, qa, err) = kerrsim(dir, &cfg, &["sweep", "--backend", a]);
    assert!(ok, "{err}");
    let (ok, qb, err) = kerrsim(dir, &cfg, &["sweep", "--backend", b]);
    assert!(ok, "{err}");
    let ra = csv_rows(qa.join(format!("sweep_{}.csv", a.replace('-', "_"))));
    let rb = csv_rows(qb.join(format!("sweep_{}.csv", b.replace('-', "_"))));
    assert_eq!(ra.len(), 31);
    ra.iter()
        .zip(&rb)
        .map(|(x, y)| {
            assert_eq!(x[1], y[1]);
            (x[4] - y[4]).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn quantum_sweep_matches_classical_backends() {
    let dir = tempfile::tempdir().unwrap();
    // below the range where noise-induced damping shows in the dip depth
    let gap = max_abs_gap(dir.path(), -140.0, "quantum", "classical");
    assert!(gap < 1e-3, "quantum vs classical {gap:e}");
    // at the lowest measured power the damping term is needed
    let gap = max_abs_gap(dir.path(), -135.0, "quantum", "classical-nl");
    assert!(gap < 1e-3, "quantum vs classical-nl {gap:e}");
}

#[test]
fn synth_then_fit_recovers_device() {
    let dir = tempfile::tempdir().unwrap();
    let low = compact_power(0.3);
    let synth = json!({
        "device": compact_device(),
        "drive": { "powers_dbm": [low, low + 7.0] },
        "synth": { "attenuation_db": 100.0, "points": 15, "half_width_kappas": 2.5 },
    });
    let (ok, s1, err) = kerrsim(dir.path(), &synth, &["synth"]);
    assert!(ok, "{err}");
    let (_, s2, _) = kerrsim(dir.path(), &synth, &["synth", "--seed", "0"]);
    let h1 = read_json(s1.join("manifest.json"))["artifacts"].clone();
    let h2 = read_json(s2.join("manifest.json"))["artifacts"].clone();
    assert_eq!(h1, h2, "synthesis is not deterministic");

    let fit = json!({
        "device": { "omega_r_GHz": 5.0001, "kappa_int_kHz": 309, "kappa_ext_MHz": 1.47, "K_kHz": 520, "n_th": 0 },
        "fit": { "attenuation_db": 100.3, "rel_bounds": 0.1 },
        "paths": { "dataset": s1.join("dataset.csv").to_str().unwrap() },
    });
    let (ok, f, err) = kerrsim(dir.path(), &fit, &["fit", "--model", "quantum"]);
    assert!(ok, "{err}");
    let report = read_json(f.join("fit_report.json"));
    let got = |k: &str| report["fitted"][k].as_f64().unwrap_or_else(|| panic!("missing {k}: {report}"));
    let truth = [
        ("omega_r", 5e9),
        ("kappa_int", 300e3),
        ("kappa_ext", 1.5e6),
        ("kerr", 500e3),
        ("attenuation_db", 100.0),
    ];
    for (k, t) in truth {
        assert!((got(k) / t - 1.0).abs() < 0.02, "{k} = {} vs {t}", got(k));
    }
    let manifest = read_json(f.join("manifest.json"));
    assert_eq!(manifest["options"]["model"], "quantum");
    assert!(manifest["inputs"]["dataset"]["sha256"].is_string());
    assert!(f.join("fit_model.csv").exists());
}

#[test]
fn calibrate_and_decimate_write_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let baseline = json!({
        "A": 0.7, "B": 0.0, "C": 0.3, "D": 1e-7, "E": 1.0, "F": 0.0, "G": [0.0, 0.0],
        "center_hz": 5e9, "residual_rms": 0.0,
    });
    std::fs::write(dir.path().join("chain.json"), baseline.to_string()).unwrap();
    let low = compact_power(0.005);
    let synth = json!({
        "device": compact_device(),
        "drive": { "powers_dbm": [low] },
        "synth": { "attenuation_db": 100.0, "points": 60, "half_width_kappas": 3.0, "noise_sigma": 1e-4 },
        "paths": { "baseline": "chain.json" },
        "seed": 3,
    });
    let (ok, s, err) = kerrsim(dir.path(), &synth, &["synth"]);
    assert!(ok, "{err}");
    let dataset = s.join("dataset.csv");
    let cfg = json!({ "paths": { "dataset": dataset.to_str().unwrap() }, "decimate": { "block": 4 } });
    let (ok, c, err) = kerrsim(dir.path(), &cfg, &["calibrate"]);
    assert!(ok, "{err}");
    let bl = read_json(c.join("baseline.json"));
    assert!((bl["D"].as_f64().unwrap() / 1e-7 - 1.0).abs() < 1e-2, "{bl}");
    let (ok, d, err) = kerrsim(dir.path(), &cfg, &["decimate"]);
    assert!(ok, "{err}");
    let text = std::fs::read_to_string(d.join("decimated.csv")).unwrap();
    assert!(text.starts_with("power_dbm,freq_hz,re_s21,im_s21\n"));
    assert_eq!(text.lines().count(), 1 + 15);
}

#[test]
fn phase_space_commands_emit_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "device": reference_device(),
        "point": { "power_dbm": -130.0 },
        "drive": { "powers_dbm": [-130.0] },
        "phase_space": { "points": 121, "theta_points": 36 },
        "evolve": { "t_end_us": 0.2, "samples": 11 },
    });
    let (ok, w, err) = kerrsim(dir.path(), &cfg, &["wigner", "--currents"]);
    assert!(ok, "{err}");
    let side = read_json(w.join("wigner.json"));
    assert!((side["normalization"].as_f64().unwrap() - 1.0).abs() < 1e-6, "{side}");
    assert!(side["continuity"]["relative_to_terms"].as_f64().unwrap() < 1e-2);
    assert!(side["units"].is_object());
    let header = std::fs::read_to_string(w.join("wigner.csv")).unwrap();
    assert!(header.starts_with("x,p,W,Jx_"));

    let (ok, d, err) = kerrsim(dir.path(), &cfg, &["deform"]);
    assert!(ok, "{err}");
    let deform = read_json(d.join("deform.json"));
    let n = &deform["photon_number"];
    assert!((n["after"].as_f64().unwrap() / n["before"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let (ok, s, err) = kerrsim(dir.path(), &cfg, &["squeeze"]);
    assert!(ok, "{err}");
    let sq = read_json(s.join("squeeze.json"));
    assert!(sq["minima"][0]["du_min_rel"].as_f64().unwrap() < 1.0);

    let (ok, e, err) = kerrsim(dir.path(), &cfg, &["evolve"]);
    assert!(ok, "{err}");
    let rows = std::fs::read_to_string(e.join("evolve.csv")).unwrap();
    assert_eq!(rows.lines().count(), 12);

    let (ok, ds, err) = kerrsim(dir.path(), &cfg, &["dip-summary"]);
    assert!(ok, "{err}");
    let dips = read_json(ds.join("dip_summary.json"));
    assert_eq!(dips["dips"].as_array().unwrap().len(), 1);
}

#[test]
fn errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let (ok, out, err) = kerrsim(dir.path(), &json!({ "device": reference_device(), "sed": 1 }), &["quantize"]);
    assert!(!ok);
    let e: Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(e["error"]["kind"], "config");
    assert_eq!(read_json(out.join("error.json")), e);

    let cfg = json!({
        "device": reference_device(),
        "point": { "power_dbm": -122.0, "detuning_kHz": 0.0 },
        "solver": { "dim": 20 },
    });
    let (ok, _, err) = kerrsim(dir.path(), &cfg, &["wigner", "--strict"]);
    assert!(!ok);
    let e: Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(e["error"]["kind"], "truncation");
}
