use std::fmt::Write as _;
use std::path::Path;

use kerrsim::calibrate::{self, Baseline, RawDataset};
use kerrsim::classical;
use kerrsim::constants::{khz, to_hz, TWO_PI};
use kerrsim::device::{epsilon_from_dbm, quantize, CircuitParams, DeviceConfig};
use kerrsim::fitkit::{self, FitProblem, PowellOptions};
use kerrsim::fock::{adequate_dim, coherent_ket};
use kerrsim::lindblad::{self, Liouvillian, SteadyState, SteadyStateOptions, Tolerances};
use kerrsim::perturbative;
use kerrsim::response::{self, dip_grid, linspace, Backend, DriveGrid, SweepOptions, SweepTrace};
use kerrsim::wigner::{self, CurrentParams, PhaseSpaceGrid, WignerField};
use kerrsim::{Error, Result, C64};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::OutDir;

/// Everything a command needs besides its own flags.
pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a mut OutDir,
    pub strict: bool,
    pub seed: u64,
}

fn params_hz(p: &CircuitParams) -> Value {
    json!({
        "omega_r_Hz": to_hz(p.omega_r),
        "kappa_int_Hz": to_hz(p.kappa_int),
        "kappa_ext_Hz": to_hz(p.kappa_ext),
        "K_Hz": to_hz(p.kerr),
        "n_th": p.n_th,
    })
}

fn steady_options(ctx: &Ctx) -> SteadyStateOptions {
    SteadyStateOptions {
        strict: ctx.strict,
        cutoff_tolerance: ctx.cfg.solver.cutoff_tolerance,
        residual_tolerance: ctx.cfg.solver.residual_tolerance,
    }
}

fn sweep_options(ctx: &Ctx, backend: Backend, p: &CircuitParams) -> SweepOptions {
    let gamma_nl = match backend {
        Backend::ClassicalNl => ctx.cfg.drive.gamma_nl_kHz.map(khz).unwrap_or_else(|| perturbative::gamma_nl(p)),
        _ => 0.0,
    };
    SweepOptions {
        gamma_nl,
        dim: ctx.cfg.solver.dim,
        strict: ctx.strict,
    }
}

fn drive_grid(ctx: &Ctx, p: &CircuitParams, power: f64) -> Vec<f64> {
    match &ctx.cfg.drive.freq_hz {
        Some(f) => f.iter().map(|v| TWO_PI * v).collect(),
        None => dip_grid(p, power, ctx.cfg.drive.half_width_kappas, ctx.cfg.drive.points),
    }
}

fn sweeps(ctx: &Ctx, backend: Backend, p: &CircuitParams) -> Result<Vec<SweepTrace>> {
    let opts = sweep_options(ctx, backend, p);
    ctx.cfg
        .drive
        .powers_dbm
        .iter()
        .map(|&pw| response::sweep(backend, p, &DriveGrid::at_device(pw, drive_grid(ctx, p, pw)), &opts))
        .collect()
}

fn cutoff(ctx: &Ctx, p: &CircuitParams, eps: f64) -> usize {
    ctx.cfg.solver.dim.unwrap_or_else(|| lindblad::default_dim(p, eps))
}

/// Quantum detuning at `power`: configured, or the transmission minimum.
fn detuning_at(ctx: &Ctx, p: &CircuitParams, power: f64) -> Result<f64> {
    if let Some(d) = ctx.cfg.point.detuning_kHz {
        return Ok(khz(d));
    }
    let drive = DriveGrid::at_device(power, dip_grid(p, power, 1.0, 41));
    let trace = response::sweep(Backend::Quantum, p, &drive, &sweep_options(ctx, Backend::Quantum, p))?;
    let dip = response::extract_min(&trace)?;
    Ok(p.omega_r - p.kerr - dip.omega_min)
}

fn steady(ctx: &Ctx, p: &CircuitParams, power: f64) -> Result<(Liouvillian, SteadyState)> {
    let eps = epsilon_from_dbm(power, p);
    let delta = detuning_at(ctx, p, power)?;
    let l = lindblad::build(p, delta, eps, cutoff(ctx, p, eps))?;
    let ss = lindblad::steady_state_with(&l, &steady_options(ctx))?;
    Ok((l, ss))
}

fn phase_grid(ctx: &Ctx, amplitude: f64) -> Result<PhaseSpaceGrid> {
    let half = ctx
        .cfg
        .phase_space
        .half_width
        .unwrap_or(2f64.sqrt() * amplitude + 5.0);
    PhaseSpaceGrid::symmetric(half, ctx.cfg.phase_space.points)
}

fn state_json(l: &Liouvillian, ss: &SteadyState, power: f64) -> Value {
    let amp = ss.rho.mean_amplitude();
    json!({
        "power_dbm": power,
        "detuning_Hz": to_hz(l.delta_q()),
        "epsilon_Hz": to_hz(l.epsilon()),
        "dim": l.dim(),
        "residual_Hz": to_hz(ss.residual),
        "cutoff_population": ss.cutoff_population,
        "mean_amplitude": [amp.re, amp.im],
        "mean_photons": ss.rho.mean_photons(),
    })
}

fn load_dataset(ctx: &mut Ctx) -> Result<RawDataset> {
    let path = ctx.cfg.dataset_path()?;
    let bytes = ctx.out.read_input("dataset", &path)?;
    if path.extension().is_some_and(|e| e == "json") {
        RawDataset::from_json(std::str::from_utf8(&bytes).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        RawDataset::read_csv(bytes.as_slice())
    }
}

fn load_baseline(ctx: &mut Ctx) -> Result<Option<Baseline>> {
    let Some(path) = ctx.cfg.baseline_path() else {
        return Ok(None);
    };
    let bytes = ctx.out.read_input("baseline", &path)?;
    Baseline::from_json(std::str::from_utf8(&bytes).map_err(|e| Error::Config(e.to_string()))?).map(Some)
}

fn dataset_csv(ds: &RawDataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn quantize_cmd(ctx: &mut Ctx) -> Result<()> {
    let DeviceConfig::Circuit(form) = ctx.cfg.device()? else {
        return Err(Error::Config("quantize needs the circuit-element device form".into()));
    };
    let (omega_r, kerr) = quantize(&form.elements())?;
    ctx.out.write_json(
        "quantize.json",
        &json!({
            "elements": { "L_nH": form.L_nH, "C_fF": form.C_fF, "LJ_nH": form.LJ_nH },
            "omega_r_Hz": to_hz(omega_r),
            "K_Hz": to_hz(kerr),
            "omega_r_rad_s": omega_r,
            "K_rad_s": kerr,
            "units": { "omega_r_Hz": "Hz (ω/2π)", "K_Hz": "Hz (K/2π)", "omega_r_rad_s": "rad/s", "K_rad_s": "rad/s" },
        }),
    )
}

pub fn sweep_cmd(ctx: &mut Ctx, backend: Backend) -> Result<()> {
    let p = ctx.cfg.params()?;
    let traces = sweeps(ctx, backend, &p)?;
    let mut buf = Vec::new();
    response::write_traces_csv(&mut buf, &traces)?;
    let stem = format!("sweep_{}", backend.name());
    ctx.out.write(&format!("{stem}.csv"), &buf)?;
    let opts = sweep_options(ctx, backend, &p);
    ctx.out.write_json(
        &format!("{stem}.json"),
        &json!({
            "backend": backend.name(),
            "parameters_Hz": params_hz(&p),
            "gamma_nl_Hz": to_hz(opts.gamma_nl),
            "powers_dbm": ctx.cfg.drive.powers_dbm,
            "columns": {
                "power_dbm": "dBm at device",
                "freq_Hz": "drive frequency, Hz",
                "re_s21": "dimensionless",
                "im_s21": "dimensionless",
                "abs_s21": "dimensionless",
            },
        }),
    )
}

pub fn dip_summary_cmd(ctx: &mut Ctx, backend: Backend) -> Result<()> {
    let p = ctx.cfg.params()?;
    let traces = sweeps(ctx, backend, &p)?;
    let dips = traces.iter().map(response::extract_min).collect::<Result<Vec<_>>>()?;
    let shifts = response::delta_min_check(&traces, &p)?;
    let mut csv = String::from("power_dbm,min_abs_s21,freq_min_Hz,kappa_int_eff_Hz,detuning_Hz,k_alpha2_Hz\n");
    for (d, s) in dips.iter().zip(&shifts) {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            d.power_dbm,
            d.min_abs_s21,
            to_hz(d.omega_min),
            to_hz(d.kappa_int_eff),
            to_hz(s.detuning),
            to_hz(s.k_alpha2)
        )
        .expect("string write");
    }
    ctx.out.write("dip_summary.csv", csv.as_bytes())?;
    let mut summary = response::dip_summary_json(&dips);
    summary["backend"] = json!(backend.name());
    summary["parameters_Hz"] = params_hz(&p);
    summary["units"]["detuning_Hz"] = json!("Hz, (ω_r − K − ω_min)/2π");
    summary["units"]["k_alpha2_Hz"] = json!("Hz, Kα²/2π with α = 2ε/κ");
    ctx.out.write_json("dip_summary.json", &summary)
}

fn write_field(ctx: &mut Ctx, stem: &str, field: &WignerField, extra: Value) -> Result<()> {
    let mut buf = Vec::new();
    wigner::write_csv(&mut buf, field)?;
    ctx.out.write(&format!("{stem}.csv"), &buf)?;
    let balance = if field.currents.is_empty() {
        None
    } else {
        Some(wigner::current_balance(field)?)
    };
    let mut side = wigner::sidecar_json(field, balance.as_ref());
    if let (Value::Object(side), Value::Object(extra)) = (&mut side, extra) {
        side.extend(extra);
    }
    ctx.out.write_json(&format!("{stem}.json"), &side)
}

fn continuity_json(field: &WignerField, l: &Liouvillian) -> Result<Value> {
    let c = wigner::continuity_residual(field, l)?;
    Ok(json!({
        "ratio": c.ratio,
        "relative_to_terms": c.relative_to_terms(),
        "abs_MHz": to_hz(c.abs) * 1e-6,
        "reference_MHz": to_hz(c.reference) * 1e-6,
        "term_scale_MHz": to_hz(c.term_scale) * 1e-6,
    }))
}

pub fn wigner_cmd(ctx: &mut Ctx, with_currents: bool) -> Result<()> {
    let p = ctx.cfg.params()?;
    let power = ctx.cfg.point.power_dbm;
    let (l, ss) = steady(ctx, &p, power)?;
    let grid = phase_grid(ctx, ss.rho.mean_amplitude().norm())?;
    let mut field = wigner::wigner_grid(&ss.rho, &grid)?;
    let mut extra = json!({ "state": state_json(&l, &ss, power) });
    if with_currents {
        field = wigner::currents_with(field, CurrentParams::from_liouvillian(&l))?;
        extra["continuity"] = continuity_json(&field, &l)?;
    }
    write_field(ctx, "wigner", &field, extra)
}

pub fn deform_cmd(ctx: &mut Ctx) -> Result<()> {
    let p = ctx.cfg.params()?;
    if !(p.kerr > 0.0) {
        return Err(Error::Domain("the deformation protocol needs K > 0".into()));
    }
    let power = ctx.cfg.point.power_dbm;
    let eps = epsilon_from_dbm(power, &p);
    let alpha = p.linear_amplitude(eps);
    let d = &ctx.cfg.deform;
    let rho = wigner::kerr_deform(C64::new(alpha, 0.0), &p, d.lambda, d.duration_kerr_units / p.kerr)?;
    let start = coherent_ket(rho.dim(), C64::new(alpha, 0.0))?.to_density();
    let delta = p.kerr * alpha * alpha;
    let l = lindblad::build(&p, delta, eps, rho.dim())?;
    let field = wigner::wigner_grid(&rho, &phase_grid(ctx, alpha)?)?;
    let field = wigner::currents_with(field, CurrentParams::from_liouvillian(&l))?;
    let extra = json!({
        "protocol": {
            "power_dbm": power,
            "alpha": alpha,
            "lambda": d.lambda,
            "duration_kerr_units": d.duration_kerr_units,
            "detuning_Hz": to_hz(delta),
            "dim": rho.dim(),
        },
        "photon_number": { "before": start.mean_photons(), "after": rho.mean_photons() },
        "amplitude": {
            "before": start.mean_amplitude().norm(),
            "after": rho.mean_amplitude().norm(),
            "drop_percent": 100.0 * (1.0 - rho.mean_amplitude().norm() / start.mean_amplitude().norm()),
        },
        "continuity": continuity_json(&field, &l)?,
    });
    write_field(ctx, "deform", &field, extra)
}

pub fn evolve_cmd(ctx: &mut Ctx) -> Result<()> {
    let p = ctx.cfg.params()?;
    let power = ctx.cfg.point.power_dbm;
    let eps = epsilon_from_dbm(power, &p);
    let delta = detuning_at(ctx, &p, power)?;
    let ev = &ctx.cfg.evolve;
    let a0 = C64::new(ev.initial_amplitude[0], ev.initial_amplitude[1]);
    let dim = ctx
        .cfg
        .solver
        .dim
        .unwrap_or_else(|| lindblad::default_dim(&p, eps).max(adequate_dim(a0.norm())));
    let l = lindblad::build(&p, delta, eps, dim)?;
    let rho0 = coherent_ket(dim, a0)?.to_density();
    let times = linspace(0.0, ev.t_end_us * 1e-6, ev.samples);
    let tol = Tolerances {
        rtol: ctx.cfg.solver.rtol,
        atol: ctx.cfg.solver.atol,
        ..Tolerances::default()
    };
    let rec = lindblad::evolve_with(&l, &rho0, &times, tol)?;
    let mut csv = String::from(
        "t_us,re_a,im_a,abs_a,photons,phase_spread,d_abs_a_conservative,d_abs_a_driven,d_photons_conservative,d_photons_driven,d_phase_conservative,d_phase_driven\n",
    );
    for i in 0..rec.len() {
        let a = rec.amp[i];
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            rec.times[i] * 1e6,
            a.re,
            a.im,
            a.norm(),
            rec.photon[i],
            rec.phase_var[i],
            rec.amp_rate[i].conservative,
            rec.amp_rate[i].driven_damped,
            rec.photon_rate[i].conservative,
            rec.photon_rate[i].driven_damped,
            rec.phase_rate[i].conservative,
            rec.phase_rate[i].driven_damped
        )
        .expect("string write");
    }
    ctx.out.write("evolve.csv", csv.as_bytes())?;
    ctx.out.write_json(
        "evolve.json",
        &json!({
            "parameters_Hz": params_hz(&p),
            "power_dbm": power,
            "detuning_Hz": to_hz(delta),
            "dim": dim,
            "initial_amplitude": [a0.re, a0.im],
            "units": {
                "t_us": "µs",
                "phase_spread": "rad, NaN where the phase is undefined",
                "d_*": "time derivative per second, split into conservative (detuning, Kerr) and driven-damped generators",
            },
        }),
    )
}

pub fn squeeze_cmd(ctx: &mut Ctx) -> Result<()> {
    let p = ctx.cfg.params()?;
    let n = ctx.cfg.phase_space.theta_points;
    let thetas: Vec<f64> = (0..n)
        .map(|i| -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / n as f64)
        .collect();
    let mut csv = String::from("power_dbm,theta_rad,du_rel\n");
    let mut rows = Vec::new();
    for &power in &ctx.cfg.drive.powers_dbm {
        let (l, ss) = steady(ctx, &p, power)?;
        let scan = wigner::squeeze_scan(&ss.rho, &thetas)?;
        for (t, du) in &scan.curve {
            writeln!(csv, "{power},{t},{du}").expect("string write");
        }
        rows.push(json!({
            "power_dbm": power,
            "detuning_Hz": to_hz(l.delta_q()),
            "theta_min_rad": scan.theta_min,
            "du_min_rel": scan.du_min_rel,
        }));
    }
    ctx.out.write("squeeze.csv", csv.as_bytes())?;
    ctx.out.write_json(
        "squeeze.json",
        &json!({
            "parameters_Hz": params_hz(&p),
            "minima": rows,
            "units": { "theta_rad": "rad", "du_rel": "Δu relative to a coherent state" },
        }),
    )
}

pub fn calibrate_cmd(ctx: &mut Ctx) -> Result<()> {
    let ds = load_dataset(ctx)?;
    let trace = ds
        .lowest_power()
        .ok_or_else(|| Error::Calibration("dataset has no traces".into()))?;
    let bl = calibrate::fit_baseline(trace)?;
    let mut side = bl.to_json();
    side["fitted_power_dbm"] = json!(trace.power_dbm);
    side["units"] = json!({
        "A": "dimensionless", "B": "1/Hz", "C": "rad", "D": "rad/Hz",
        "E": "Hz", "F": "Hz from center_hz", "G": "Hz (complex)", "center_hz": "Hz",
    });
    ctx.out.write_json("baseline.json", &side)?;
    let clean = calibrate::apply_baseline(&ds, &bl)?;
    ctx.out.write("calibrated.csv", &dataset_csv(&clean)?)
}

pub fn decimate_cmd(ctx: &mut Ctx) -> Result<()> {
    let ds = load_dataset(ctx)?;
    let out = calibrate::decimate(&ds, ctx.cfg.decimate.block)?;
    ctx.out.write("decimated.csv", &dataset_csv(&out)?)
}

pub fn fit_cmd(ctx: &mut Ctx, model: fitkit::FitModel) -> Result<()> {
    let guess = ctx.cfg.params()?;
    let mut ds = load_dataset(ctx)?;
    if let Some(bl) = load_baseline(ctx)? {
        ds = calibrate::apply_baseline(&ds, &bl)?;
    }
    let f = &ctx.cfg.fit;
    let problem = match model {
        fitkit::FitModel::Quantum => FitProblem::quantum(ds, &guess, f.attenuation_db, f.rel_bounds)?,
        fitkit::FitModel::ClassicalNl => {
            let [lo, hi, init] = f.gamma_kHz;
            FitProblem::classical_nl(ds, &guess, f.attenuation_db, (khz(lo), khz(hi), khz(init)), f.kerr_rel)?
        }
    };
    let opts = PowellOptions {
        tol: f.tol,
        max_evals: f.max_evals,
        ..PowellOptions::default()
    };
    let result = fitkit::fit_with(&problem, &opts)?;
    let boot = if f.bootstrap > 0 {
        Some(fitkit::bootstrap(&problem, &result, f.bootstrap, ctx.seed)?)
    } else {
        None
    };
    let report = fitkit::report_json(&problem, &result, boot.as_ref(), Some(ctx.seed));
    ctx.out.write_json("fit_report.json", &report)?;

    let model_s21 = problem.model_s21(&result.params)?;
    let mut csv = String::from("power_dbm,freq_hz,re_data,im_data,re_model,im_model\n");
    for (t, m) in problem.dataset.traces.iter().zip(&model_s21) {
        for ((f, d), m) in t.freq_hz.iter().zip(&t.s21).zip(m) {
            writeln!(csv, "{},{},{},{},{},{}", t.power_dbm, f, d.re, d.im, m.re, m.im).expect("string write");
        }
    }
    ctx.out.write("fit_model.csv", csv.as_bytes())
}

pub fn synth_cmd(ctx: &mut Ctx) -> Result<()> {
    let p = ctx.cfg.params()?;
    let bl = load_baseline(ctx)?;
    let s = &ctx.cfg.synth;
    let plan = fitkit::synth_plan(&p, s.attenuation_db, &ctx.cfg.drive.powers_dbm, s.points, s.half_width_kappas);
    let ds = fitkit::synthesize(&p, s.attenuation_db, &plan, s.noise_sigma, bl.as_ref(), ctx.seed)?;
    ctx.out.write("dataset.csv", &dataset_csv(&ds)?)?;
    ctx.out.write_json(
        "synth.json",
        &json!({
            "parameters_Hz": params_hz(&p),
            "attenuation_db": s.attenuation_db,
            "noise_sigma": s.noise_sigma,
            "seed": ctx.seed,
            "baseline": bl.map(|b| b.to_json()),
            "units": { "power_dbm": "dBm at source", "freq_hz": "Hz", "re_s21": "dimensionless", "im_s21": "dimensionless" },
        }),
    )
}

pub fn bifurcation_cmd(ctx: &mut Ctx) -> Result<()> {
    let p = ctx.cfg.params()?;
    let critical = classical::critical_epsilon(&p);
    let reference = -140.0;
    let critical_power = critical.map(|e| reference + 20.0 * (e / epsilon_from_dbm(reference, &p)).log10());
    let grid = match &ctx.cfg.drive.freq_hz {
        Some(f) => f.iter().map(|v| TWO_PI * v).collect(),
        None => linspace(p.omega_r - 10.0 * p.kappa(), p.omega_r + p.kappa(), ctx.cfg.drive.points.max(401)),
    };
    let found = classical::bifurcation_power(&p, &grid, &ctx.cfg.drive.powers_dbm);
    ctx.out.write_json(
        "bifurcation.json",
        &json!({
            "parameters_Hz": params_hz(&p),
            "critical_epsilon_Hz": critical.map(to_hz),
            "critical_power_dbm": critical_power,
            "critical_detuning_Hz": critical.map(|_| to_hz(3f64.sqrt() * p.kappa() / 2.0)),
            "grid_powers_dbm": ctx.cfg.drive.powers_dbm,
            "grid_bifurcation_power_dbm": found,
            "units": { "power": "dBm at device", "critical_detuning_Hz": "(ω_r − ω_d)/2π" },
        }),
    )
}

/// Error document written on failure.
pub fn error_json(err: &Error) -> Value {
    json!({ "error": { "kind": err.kind(), "message": err.to_string() } })
}

pub fn write_error(dir: &Path, err: &Error) {
    if std::fs::create_dir_all(dir).is_ok() {
        let text = serde_json::to_string_pretty(&error_json(err)).unwrap_or_default();
        let _ = std::fs::write(dir.join("error.json"), text + "\n");
    }
}
