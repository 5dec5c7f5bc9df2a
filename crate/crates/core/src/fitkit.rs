//! Model fitting against measured transmission: weighted cost, a bounded
//! Powell minimizer, quantum and classical-with-damping fits, synthetic
//! datasets and residual bootstrap.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibrate::{impose_baseline, Baseline, RawDataset, RawTrace};
use crate::constants::{to_hz, TWO_PI};
use crate::device::{epsilon_from_dbm, CircuitParams};
use crate::lindblad;
use crate::response::{self, Backend, DriveGrid, SweepOptions, SweepTrace};
use crate::{Error, Result, C64};

/// Weight of the dip-depth and dip-position terms, in units of points.
pub const DIP_WEIGHT: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    Quantum,
    ClassicalNl,
}

impl FitModel {
    pub fn name(&self) -> &'static str {
        match self {
            FitModel::Quantum => "quantum",
            FitModel::ClassicalNl => "classical_nl",
        }
    }

    fn required(&self) -> &'static [ParamName] {
        use ParamName::*;
        match self {
            FitModel::Quantum => &[OmegaR, KappaInt, KappaExt, Kerr, Attenuation],
            FitModel::ClassicalNl => &[OmegaR, KappaInt, KappaExt, Kerr, Attenuation, Gamma],
        }
    }
}

/// Fit parameters. Rates are in rad/s, attenuation in dB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    OmegaR,
    KappaInt,
    KappaExt,
    Kerr,
    #[serde(rename = "attenuation_db")]
    Attenuation,
    Gamma,
    NTh,
}

impl ParamName {
    pub fn name(&self) -> &'static str {
        match self {
            ParamName::OmegaR => "omega_r",
            ParamName::KappaInt => "kappa_int",
            ParamName::KappaExt => "kappa_ext",
            ParamName::Kerr => "kerr",
            ParamName::Attenuation => "attenuation_db",
            ParamName::Gamma => "gamma",
            ParamName::NTh => "n_th",
        }
    }

    pub fn is_rate(&self) -> bool {
        !matches!(self, ParamName::Attenuation | ParamName::NTh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeParam {
    pub name: ParamName,
    pub lower: f64,
    pub upper: f64,
    pub initial: f64,
}

impl FreeParam {
    /// Bounds at `initial·(1 ± rel)`.
    pub fn around(name: ParamName, initial: f64, rel: f64) -> Self {
        let (a, b) = (initial * (1.0 - rel), initial * (1.0 + rel));
        Self {
            name,
            lower: a.min(b),
            upper: a.max(b),
            initial,
        }
    }
}

pub type ParamMap = BTreeMap<ParamName, f64>;

/// Dip position and depth of one trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct DipTarget {
    min_abs: f64,
    omega_min: f64,
}

/// A calibrated dataset, a model and the split into free and fixed
/// parameters.
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub dataset: RawDataset,
    pub model: FitModel,
    pub free: Vec<FreeParam>,
    pub fixed: ParamMap,
    /// Fock cutoff per trace for the quantum model; kept fixed so the cost
    /// is a continuous function of the parameters.
    pub dims: Vec<usize>,
    data_dips: Vec<DipTarget>,
}

fn trace_as_sweep(t: &RawTrace, s21: Vec<C64>) -> SweepTrace {
    SweepTrace {
        power_dbm: t.power_dbm,
        epsilon: f64::NAN,
        kappa_ext: f64::NAN,
        backend: Backend::Quantum,
        omega_d: t.freq_hz.iter().map(|f| TWO_PI * f).collect(),
        s21,
    }
}

fn dip_of(t: &RawTrace, s21: &[C64]) -> Result<DipTarget> {
    let d = response::extract_min(&trace_as_sweep(t, s21.to_vec()))?;
    Ok(DipTarget {
        min_abs: d.min_abs_s21,
        omega_min: d.omega_min,
    })
}

fn circuit(p: &ParamMap) -> Result<CircuitParams> {
    let get = |n: ParamName| p.get(&n).copied().unwrap_or(0.0);
    CircuitParams::new(
        get(ParamName::OmegaR),
        get(ParamName::KappaInt),
        get(ParamName::KappaExt),
        get(ParamName::Kerr),
        get(ParamName::NTh),
    )
}

impl FitProblem {
    pub fn new(dataset: RawDataset, model: FitModel, free: Vec<FreeParam>, fixed: ParamMap) -> Result<Self> {
        if dataset.traces.is_empty() {
            return Err(Error::Domain("dataset has no traces".into()));
        }
        for t in &dataset.traces {
            t.validate()?;
        }
        for (i, f) in free.iter().enumerate() {
            if fixed.contains_key(&f.name) || free[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::Config(format!("parameter {} listed twice", f.name.name())));
            }
            if !(f.lower.is_finite() && f.upper.is_finite() && f.lower < f.upper) {
                return Err(Error::Config(format!("bounds of {} must be finite and ordered", f.name.name())));
            }
            if !(f.initial >= f.lower && f.initial <= f.upper) {
                return Err(Error::Config(format!("initial {} lies outside its bounds", f.name.name())));
            }
        }
        for name in model.required() {
            if !fixed.contains_key(name) && !free.iter().any(|f| f.name == *name) {
                return Err(Error::Config(format!("parameter {} is neither free nor fixed", name.name())));
            }
        }
        let data_dips = dataset
            .traces
            .iter()
            .map(|t| dip_of(t, &t.s21))
            .collect::<Result<Vec<_>>>()?;
        let mut problem = Self {
            dataset,
            model,
            free,
            fixed,
            dims: Vec::new(),
            data_dips,
        };
        let start = problem.initial_params();
        let p = circuit(&start)?;
        let att = start[&ParamName::Attenuation];
        problem.dims = problem
            .dataset
            .traces
            .iter()
            .map(|t| lindblad::default_dim(&p, epsilon_from_dbm(t.power_dbm - att, &p)) + 4)
            .collect();
        Ok(problem)
    }

    /// Quantum-model problem with the five device parameters free within
    /// `±rel` of a starting guess.
    pub fn quantum(dataset: RawDataset, guess: &CircuitParams, attenuation_db: f64, rel: f64) -> Result<Self> {
        let free = vec![
            FreeParam::around(ParamName::OmegaR, guess.omega_r, rel * 1e-3),
            FreeParam::around(ParamName::KappaInt, guess.kappa_int, rel),
            FreeParam::around(ParamName::KappaExt, guess.kappa_ext, rel),
            FreeParam::around(ParamName::Kerr, guess.kerr, rel),
            FreeParam::around(ParamName::Attenuation, attenuation_db, rel * 0.05),
        ];
        let fixed = ParamMap::from([(ParamName::NTh, guess.n_th)]);
        Self::new(dataset, FitModel::Quantum, free, fixed)
    }

    /// Classical model with ad-hoc damping: `γ` and `K` free, the rest fixed.
    pub fn classical_nl(
        dataset: RawDataset,
        fixed_params: &CircuitParams,
        attenuation_db: f64,
        gamma_bounds: (f64, f64, f64),
        kerr_rel: f64,
    ) -> Result<Self> {
        let (lower, upper, initial) = gamma_bounds;
        let free = vec![
            FreeParam {
                name: ParamName::Gamma,
                lower,
                upper,
                initial,
            },
            FreeParam::around(ParamName::Kerr, fixed_params.kerr, kerr_rel),
        ];
        let fixed = ParamMap::from([
            (ParamName::OmegaR, fixed_params.omega_r),
            (ParamName::KappaInt, fixed_params.kappa_int),
            (ParamName::KappaExt, fixed_params.kappa_ext),
            (ParamName::Attenuation, attenuation_db),
            (ParamName::NTh, fixed_params.n_th),
        ]);
        Self::new(dataset, FitModel::ClassicalNl, free, fixed)
    }

    pub fn initial_params(&self) -> ParamMap {
        let mut p = self.fixed.clone();
        for f in &self.free {
            p.insert(f.name, f.initial);
        }
        p
    }

    fn assemble(&self, x: &[f64]) -> ParamMap {
        let mut p = self.fixed.clone();
        for (f, v) in self.free.iter().zip(x) {
            p.insert(f.name, *v);
        }
        p
    }

    pub fn n_points(&self) -> usize {
        self.dataset.traces.iter().map(|t| t.len()).sum()
    }

    /// Model transmission at every data frequency.
    pub fn model_s21(&self, params: &ParamMap) -> Result<Vec<Vec<C64>>> {
        let p = circuit(params)?;
        let att = params.get(&ParamName::Attenuation).copied().unwrap_or(0.0);
        let gamma = params.get(&ParamName::Gamma).copied().unwrap_or(0.0);
        self.dataset
            .traces
            .iter()
            .zip(&self.dims)
            .map(|(t, &dim)| {
                let grid = DriveGrid {
                    power_dbm_at_source: t.power_dbm,
                    attenuation_db: att,
                    omega_d: t.freq_hz.iter().map(|f| TWO_PI * f).collect(),
                };
                let (backend, opts) = match self.model {
                    FitModel::Quantum => (
                        Backend::Quantum,
                        SweepOptions {
                            dim: Some(dim),
                            ..Default::default()
                        },
                    ),
                    FitModel::ClassicalNl => (
                        Backend::ClassicalNl,
                        SweepOptions {
                            gamma_nl: gamma,
                            ..Default::default()
                        },
                    ),
                };
                Ok(response::sweep(backend, &p, &grid, &opts)?.s21)
            })
            .collect()
    }
}

/// Cost contributions of one trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerResidual {
    pub power_dbm: f64,
    /// `Σ|S21_model − S21_data|`.
    pub points: f64,
    /// `|min|S21|_model − min|S21|_data|`.
    pub depth: f64,
    /// `|ω_min,model − ω_min,data| / κ`.
    pub position: f64,
}

impl PowerResidual {
    pub fn total(&self) -> f64 {
        self.points + DIP_WEIGHT * (self.depth + self.position)
    }
}

/// Point term of the cost for one trace; a plain sum, so independent of the
/// sample order.
pub fn point_term(model: &[C64], data: &[C64]) -> f64 {
    model.iter().zip(data).map(|(m, d)| (m - d).norm()).sum()
}

/// Per-trace cost terms; `None` when the model has no interior dip.
pub fn cost_terms(problem: &FitProblem, params: &ParamMap) -> Option<Vec<PowerResidual>> {
    let model = problem.model_s21(params).ok()?;
    let kappa = params[&ParamName::KappaInt] + params[&ParamName::KappaExt];
    problem
        .dataset
        .traces
        .iter()
        .zip(&model)
        .zip(&problem.data_dips)
        .map(|((t, m), target)| {
            let dip = dip_of(t, m).ok()?;
            Some(PowerResidual {
                power_dbm: t.power_dbm,
                points: point_term(m, &t.s21),
                depth: (dip.min_abs - target.min_abs).abs(),
                position: (dip.omega_min - target.omega_min).abs() / kappa,
            })
        })
        .collect()
}

/// Weighted cost; `+∞` when the model cannot be evaluated.
pub fn cost(problem: &FitProblem, params: &ParamMap) -> f64 {
    match cost_terms(problem, params) {
        Some(terms) => terms.iter().map(PowerResidual::total).sum(),
        None => f64::INFINITY,
    }
}

/// Point term alone, summed over traces; `+∞` when the model fails.
pub fn point_cost(problem: &FitProblem, params: &ParamMap) -> f64 {
    match problem.model_s21(params) {
        Ok(model) => problem
            .dataset
            .traces
            .iter()
            .zip(&model)
            .map(|(t, m)| point_term(m, &t.s21))
            .sum(),
        Err(_) => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowellOptions {
    /// Relative cost improvement over a full cycle below which the search stops.
    pub tol: f64,
    pub max_evals: usize,
    /// Line-search resolution in unit-box coordinates.
    pub xtol: f64,
}

impl Default for PowellOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_evals: 20_000,
            xtol: 1e-9,
        }
    }
}

/// Outcome of [`powell_minimize`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub cost: f64,
    pub n_evals: usize,
    pub converged: bool,
    /// Cost after each direction cycle.
    pub cost_trace: Vec<f64>,
}

/// Objective in unit-box coordinates with an evaluation budget.
struct Boxed<'a, F> {
    f: &'a mut F,
    bounds: &'a [(f64, f64)],
    evals: usize,
    max_evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Boxed<'_, F> {
    fn to_x(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.bounds)
            .map(|(u, (lo, hi))| lo + u.clamp(0.0, 1.0) * (hi - lo))
            .collect()
    }

    fn eval(&mut self, u: &[f64]) -> f64 {
        self.evals += 1;
        let x = self.to_x(u);
        let v = (self.f)(&x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    fn exhausted(&self) -> bool {
        self.evals >= self.max_evals
    }
}

fn along(u: &[f64], d: &[f64], t: f64) -> Vec<f64> {
    u.iter().zip(d).map(|(a, b)| (a + t * b).clamp(0.0, 1.0)).collect()
}

/// Range of `t` keeping `u + t·d` inside the unit box.
fn feasible(u: &[f64], d: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (ui, di) in u.iter().zip(d) {
        if *di > 0.0 {
            lo = lo.max(-ui / di);
            hi = hi.min((1.0 - ui) / di);
        } else if *di < 0.0 {
            lo = lo.max((1.0 - ui) / di);
            hi = hi.min(-ui / di);
        }
    }
    (lo.min(0.0), hi.max(0.0))
}

/// Line minimum along `d` from `u` (where the value is `fu`): expanding
/// bracket, then Brent. Returns `(t, f)`.
fn line_min<F: FnMut(&[f64]) -> f64>(
    obj: &mut Boxed<F>,
    u: &[f64],
    d: &[f64],
    fu: f64,
    step: f64,
    xtol: f64,
) -> (f64, f64) {
    let (tlo, thi) = feasible(u, d);
    if thi - tlo <= xtol {
        return (0.0, fu);
    }
    let g = |t: f64, obj: &mut Boxed<F>| obj.eval(&along(u, d, t));
    // bracket (a, x, b) with f(x) ≤ f(a), f(b)
    let step = step.clamp(xtol * 10.0, thi - tlo);
    let mut t1 = step.min(thi);
    if t1 <= 0.0 {
        t1 = (-step).max(tlo);
    }
    let f1 = g(t1, obj);
    let (mut a, mut fa, mut x, mut fx) = if f1 <= fu { (0.0, fu, t1, f1) } else { (t1, f1, 0.0, fu) };
    let dir = if x > a { 1.0 } else { -1.0 };
    let edge = if dir > 0.0 { thi } else { tlo };
    let (b, _fb) = loop {
        if obj.exhausted() {
            return if fx < fu { (x, fx) } else { (0.0, fu) };
        }
        if (edge - x) * dir <= 0.0 {
            break (x, fx);
        }
        let next = if (x - a).abs() > 0.0 {
            x + 1.618 * (x - a)
        } else {
            x + dir * step
        };
        let next = if (next - edge) * dir > 0.0 { edge } else { next };
        let fnext = g(next, obj);
        if fnext > fx {
            break (next, fnext);
        }
        a = x;
        fa = fx;
        x = next;
        fx = fnext;
    };
    let _ = fa;
    let (mut lo, mut hi) = if a < b { (a, b) } else { (b, a) };
    if x == b {
        // minimum sits on the box edge
        return (x, fx);
    }
    // Brent on [lo, hi] starting from x
    const CGOLD: f64 = 0.381_966_011_250_105;
    let (mut w, mut v) = (x, x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut dstep, mut e) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        if obj.exhausted() {
            break;
        }
        let xm = 0.5 * (lo + hi);
        let tol1 = 1e-8 * x.abs() + xtol;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (hi - lo) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 && fx.is_finite() && fw.is_finite() && fv.is_finite() {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            if !(p.abs() >= (0.5 * q * etemp).abs() || p <= q * (lo - x) || p >= q * (hi - x)) {
                e = dstep;
                dstep = p / q;
                let trial = x + dstep;
                if trial - lo < tol2 || hi - trial < tol2 {
                    dstep = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { lo - x } else { hi - x };
            dstep = CGOLD * e;
        }
        let t = if dstep.abs() >= tol1 { x + dstep } else { x + tol1.copysign(dstep) };
        let ft = g(t, obj);
        if ft <= fx {
            if t >= x {
                lo = x;
            } else {
                hi = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = t;
            fx = ft;
        } else {
            if t < x {
                lo = t;
            } else {
                hi = t;
            }
            if ft <= fw || w == x {
                v = w;
                fv = fw;
                w = t;
                fw = ft;
            } else if ft <= fv || v == x || v == w {
                v = t;
                fv = ft;
            }
        }
    }
    if fx < fu {
        (x, fx)
    } else {
        (0.0, fu)
    }
}

/// Powell conjugate-direction search inside `bounds`, with line searches in
/// coordinates scaled to the unit box. Deterministic for given inputs.
pub fn powell_minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    bounds: &[(f64, f64)],
    opts: &PowellOptions,
) -> Result<Minimum> {
    let n = x0.len();
    if bounds.len() != n {
        return Err(Error::Shape {
            left: n,
            right: bounds.len(),
        });
    }
    for ((lo, hi), x) in bounds.iter().zip(x0) {
        if !(lo.is_finite() && hi.is_finite() && lo < hi && x >= lo && x <= hi) {
            return Err(Error::Domain("start must lie inside finite, ordered bounds".into()));
        }
    }
    let mut obj = Boxed {
        f: &mut f,
        bounds,
        evals: 0,
        max_evals: opts.max_evals,
    };
    let mut u: Vec<f64> = x0.iter().zip(bounds).map(|(x, (lo, hi))| (x - lo) / (hi - lo)).collect();
    let mut fu = obj.eval(&u);
    if !fu.is_finite() {
        return Err(Error::Domain("objective is not finite at the start point".into()));
    }
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut steps = vec![0.05; n];
    let mut trace = Vec::new();
    let mut converged = false;
    while !obj.exhausted() {
        let (f_start, u_start) = (fu, u.clone());
        let (mut ibig, mut del) = (0, 0.0);
        for i in 0..n {
            let before = fu;
            let (t, ft) = line_min(&mut obj, &u, &dirs[i], fu, steps[i], opts.xtol);
            if t != 0.0 {
                u = along(&u, &dirs[i], t);
                fu = ft;
                steps[i] = (2.0 * t.abs()).max(1e3 * opts.xtol);
            } else {
                steps[i] = (steps[i] * 0.5).max(1e3 * opts.xtol);
            }
            if before - fu > del {
                del = before - fu;
                ibig = i;
            }
        }
        trace.push(fu);
        if 2.0 * (f_start - fu) <= opts.tol * (f_start.abs() + fu.abs()) + f64::MIN_POSITIVE {
            converged = true;
            break;
        }
        let shift: Vec<f64> = u.iter().zip(&u_start).map(|(a, b)| a - b).collect();
        let extrapolated: Vec<f64> = u.iter().zip(&shift).map(|(a, s)| (a + s).clamp(0.0, 1.0)).collect();
        let fe = obj.eval(&extrapolated);
        if fe < f_start {
            let t = 2.0 * (f_start - 2.0 * fu + fe) * (f_start - fu - del).powi(2) - del * (f_start - fe).powi(2);
            let norm = shift.iter().map(|s| s * s).sum::<f64>().sqrt();
            if t < 0.0 && norm > 0.0 {
                let dnew: Vec<f64> = shift.iter().map(|s| s / norm).collect();
                let (t, ft) = line_min(&mut obj, &u, &dnew, fu, norm, opts.xtol);
                if t != 0.0 {
                    u = along(&u, &dnew, t);
                    fu = ft;
                }
                dirs[ibig] = dirs[n - 1].clone();
                steps[ibig] = steps[n - 1];
                dirs[n - 1] = dnew;
                steps[n - 1] = norm.max(1e3 * opts.xtol);
            }
        }
    }
    let x = obj.to_x(&u);
    Ok(Minimum {
        x,
        cost: fu,
        n_evals: obj.evals,
        converged,
        cost_trace: trace,
    })
}

/// Fitted parameters and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub params: ParamMap,
    pub cost: f64,
    pub n_evals: usize,
    pub converged: bool,
    pub per_power: Vec<PowerResidual>,
    pub cost_trace: Vec<f64>,
}

fn minimize_problem(problem: &FitProblem, start: &[f64], opts: &PowellOptions) -> Result<Minimum> {
    let bounds: Vec<(f64, f64)> = problem.free.iter().map(|f| (f.lower, f.upper)).collect();
    powell_minimize(|x| cost(problem, &problem.assemble(x)), start, &bounds, opts)
}

fn minimize_points(problem: &FitProblem, start: &[f64], opts: &PowellOptions) -> Result<Minimum> {
    let bounds: Vec<(f64, f64)> = problem.free.iter().map(|f| (f.lower, f.upper)).collect();
    powell_minimize(|x| point_cost(problem, &problem.assemble(x)), start, &bounds, opts)
}

/// Minimizes the cost over the free parameters.
///
/// The dip terms are kinked on hypersurfaces where model and data dips
/// coincide, and coordinate line searches stall where two such surfaces
/// meet. The search therefore starts with the point term alone, continues
/// with the full cost, and restarts once from the converged point with fresh
/// directions and a tighter tolerance.
pub fn fit(problem: &FitProblem) -> Result<FitResult> {
    fit_with(problem, &PowellOptions::default())
}

pub fn fit_with(problem: &FitProblem, opts: &PowellOptions) -> Result<FitResult> {
    let x0: Vec<f64> = problem.free.iter().map(|f| f.initial).collect();
    let pre = minimize_points(problem, &x0, opts)?;
    let remaining = |used: usize| PowellOptions {
        max_evals: opts.max_evals.saturating_sub(used).max(1),
        ..*opts
    };
    let first = minimize_problem(problem, &pre.x, &remaining(pre.n_evals))?;
    let tight = PowellOptions {
        tol: opts.tol * 1e-2,
        ..remaining(pre.n_evals + first.n_evals)
    };
    let second = minimize_problem(problem, &first.x, &tight)?;
    let params = problem.assemble(&second.x);
    let per_power = cost_terms(problem, &params)
        .ok_or_else(|| Error::Domain("model cannot be evaluated at the fitted point".into()))?;
    let mut cost_trace = first.cost_trace;
    cost_trace.extend(second.cost_trace);
    Ok(FitResult {
        params,
        cost: second.cost,
        n_evals: pre.n_evals + first.n_evals + second.n_evals,
        converged: pre.converged && first.converged && second.converged,
        per_power,
        cost_trace,
    })
}

/// One entry of a synthetic drive plan: source power and frequencies (Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTrace {
    pub power_dbm_at_source: f64,
    pub freq_hz: Vec<f64>,
}

/// Frequencies of `points` samples within `±half_width_kappas·κ` of the
/// expected dip at each device power.
pub fn synth_plan(
    params: &CircuitParams,
    attenuation_db: f64,
    device_powers_dbm: &[f64],
    points: usize,
    half_width_kappas: f64,
) -> Vec<SynthTrace> {
    device_powers_dbm
        .iter()
        .map(|&p| SynthTrace {
            power_dbm_at_source: p + attenuation_db,
            freq_hz: response::dip_grid(params, p, half_width_kappas, points)
                .into_iter()
                .map(to_hz)
                .collect(),
        })
        .collect()
}

/// Quantum-backend dataset, optionally passed through a chain response and
/// with i.i.d. complex Gaussian noise (`sigma` per quadrature).
pub fn synthesize(
    params: &CircuitParams,
    attenuation_db: f64,
    plan: &[SynthTrace],
    sigma: f64,
    baseline: Option<&Baseline>,
    seed: u64,
) -> Result<RawDataset> {
    if !(sigma >= 0.0) {
        return Err(Error::Domain(format!("noise σ = {sigma} must be ≥ 0")));
    }
    let mut traces = Vec::with_capacity(plan.len());
    for entry in plan {
        let grid = DriveGrid {
            power_dbm_at_source: entry.power_dbm_at_source,
            attenuation_db,
            omega_d: entry.freq_hz.iter().map(|f| TWO_PI * f).collect(),
        };
        let sweep = response::sweep(Backend::Quantum, params, &grid, &SweepOptions::default())?;
        traces.push(RawTrace::new(entry.power_dbm_at_source, entry.freq_hz.clone(), sweep.s21)?);
    }
    let mut ds = RawDataset::new(traces)?;
    if let Some(bl) = baseline {
        ds = impose_baseline(&ds, bl);
    }
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
        for t in &mut ds.traces {
            for z in &mut t.s21 {
                *z += C64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            }
        }
    }
    Ok(ds)
}

/// Spread of fitted parameters over residual-resampled replicas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bootstrap {
    pub replicas: usize,
    pub seed: u64,
    pub mean: ParamMap,
    pub std: ParamMap,
}

/// Residual bootstrap around a fit: each replica is the fitted model plus
/// residuals drawn with replacement within each trace, refitted from the
/// fitted point.
pub fn bootstrap(problem: &FitProblem, fitted: &FitResult, replicas: usize, seed: u64) -> Result<Bootstrap> {
    if replicas < 2 {
        return Err(Error::Domain("bootstrap needs at least 2 replicas".into()));
    }
    let model = problem.model_s21(&fitted.params)?;
    let residuals: Vec<Vec<C64>> = problem
        .dataset
        .traces
        .iter()
        .zip(&model)
        .map(|(t, m)| t.s21.iter().zip(m).map(|(d, m)| d - m).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<ParamMap> = Vec::with_capacity(replicas);
    for _ in 0..replicas {
        let mut ds = problem.dataset.clone();
        for ((t, m), r) in ds.traces.iter_mut().zip(&model).zip(&residuals) {
            for (z, mi) in t.s21.iter_mut().zip(m) {
                *z = mi + r[rng.gen_range(0..r.len())];
            }
        }
        let free = problem
            .free
            .iter()
            .map(|f| FreeParam {
                initial: fitted.params[&f.name],
                ..*f
            })
            .collect();
        let replica = FitProblem::new(ds, problem.model, free, problem.fixed.clone())?;
        let first = minimize_problem(
            &replica,
            &replica.free.iter().map(|f| f.initial).collect::<Vec<_>>(),
            &PowellOptions::default(),
        )?;
        samples.push(replica.assemble(&first.x));
    }
    let mut mean = ParamMap::new();
    let mut std = ParamMap::new();
    for f in &problem.free {
        let vals: Vec<f64> = samples.iter().map(|s| s[&f.name]).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        mean.insert(f.name, m);
        std.insert(f.name, var.sqrt());
    }
    Ok(Bootstrap {
        replicas,
        seed,
        mean,
        std,
    })
}

fn display_value(name: ParamName, v: f64) -> f64 {
    if name.is_rate() {
        to_hz(v)
    } else {
        v
    }
}

fn display_map(p: &ParamMap) -> serde_json::Map<String, serde_json::Value> {
    p.iter()
        .map(|(k, v)| (k.name().to_string(), serde_json::json!(display_value(*k, *v))))
        .collect()
}

/// Report with rates as ordinary frequencies in Hz.
pub fn report_json(problem: &FitProblem, result: &FitResult, boot: Option<&Bootstrap>, seed: Option<u64>) -> serde_json::Value {
    let free: Vec<serde_json::Value> = problem
        .free
        .iter()
        .map(|f| {
            serde_json::json!({
                "name": f.name.name(),
                "lower": display_value(f.name, f.lower),
                "upper": display_value(f.name, f.upper),
                "initial": display_value(f.name, f.initial),
            })
        })
        .collect();
    let mut v = serde_json::json!({
        "model": problem.model.name(),
        "units": {
            "rates": "Hz (ordinary frequency)",
            "attenuation_db": "dB",
            "cost": "dimensionless",
        },
        "free": free,
        "fixed": display_map(&problem.fixed),
        "fitted": display_map(&result.params),
        "cost": result.cost,
        "cost_trace": result.cost_trace,
        "n_evals": result.n_evals,
        "converged": result.converged,
        "per_power": result.per_power,
        "dims": problem.dims,
        "frequency_weight": "1/kappa",
        "dip_weight": DIP_WEIGHT,
        "seed": seed,
    });
    if let Some(b) = boot {
        v["bootstrap"] = serde_json::json!({
            "replicas": b.replicas,
            "seed": b.seed,
            "mean": display_map(&b.mean),
            "std": display_map(&b.std),
        });
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::khz;
    use crate::device::REFERENCE_ATTENUATION_DB;

    #[test]
    fn quadratic_bowl() {
        let c = [0.3, -1.7, 2.2];
        let bounds = [(-5.0, 5.0); 3];
        let m = powell_minimize(
            |x| x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum(),
            &[0.0, 0.0, 0.0],
            &bounds,
            &PowellOptions::default(),
        )
        .unwrap();
        assert!(m.converged);
        for (x, c) in m.x.iter().zip(&c) {
            assert!((x - c).abs() < 1e-6, "{x} vs {c}");
        }
    }

    #[test]
    fn rosenbrock() {
        let m = powell_minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[(-5.0, 5.0), (-5.0, 5.0)],
            &PowellOptions {
                max_evals: 5000,
                tol: 1e-12,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(m.cost < 1e-8, "cost {} after {} evals", m.cost, m.n_evals);
        assert!(m.n_evals <= 5000);
    }

    #[test]
    fn infinite_plateau_is_avoided() {
        let m = powell_minimize(
            |x| if x[0] < 0.5 { f64::INFINITY } else { (x[0] - 1.0).powi(2) + (x[1] + 0.5).powi(2) },
            &[2.0, 2.0],
            &[(-3.0, 3.0), (-3.0, 3.0)],
            &PowellOptions::default(),
        )
        .unwrap();
        assert!(m.cost.is_finite() && m.cost < 1e-10);
        assert!(m.x[0] >= -3.0 && m.x[0] <= 3.0);
    }

    #[test]
    fn minimum_on_bound() {
        let m = powell_minimize(|x| x[0], &[0.5], &[(0.0, 1.0)], &PowellOptions::default()).unwrap();
        assert!(m.x[0].abs() < 1e-9);
    }

    #[test]
    fn budget_exhaustion_reports_unconverged() {
        let m = powell_minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[(-5.0, 5.0), (-5.0, 5.0)],
            &PowellOptions {
                max_evals: 30,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!m.converged);
    }

    #[test]
    fn start_must_be_finite() {
        assert!(powell_minimize(|_| f64::INFINITY, &[0.0], &[(-1.0, 1.0)], &PowellOptions::default()).is_err());
    }

    fn classical_problem() -> FitProblem {
        let p = CircuitParams::reference();
        let plan = synth_plan(&p, REFERENCE_ATTENUATION_DB, &[-135.0, -125.0], 41, 3.0);
        // classical data with known damping
        let gamma = khz(4.0);
        let traces = plan
            .iter()
            .map(|e| {
                let grid = DriveGrid {
                    power_dbm_at_source: e.power_dbm_at_source,
                    attenuation_db: REFERENCE_ATTENUATION_DB,
                    omega_d: e.freq_hz.iter().map(|f| TWO_PI * f).collect(),
                };
                let opts = SweepOptions {
                    gamma_nl: gamma,
                    ..Default::default()
                };
                let s = response::sweep(Backend::ClassicalNl, &p, &grid, &opts).unwrap();
                RawTrace::new(e.power_dbm_at_source, e.freq_hz.clone(), s.s21).unwrap()
            })
            .collect();
        let ds = RawDataset::new(traces).unwrap();
        FitProblem::classical_nl(ds, &p, REFERENCE_ATTENUATION_DB, (0.0, khz(20.0), khz(8.0)), 0.2).unwrap()
    }

    #[test]
    fn cost_zero_at_truth_and_larger_off_truth() {
        let problem = classical_problem();
        let mut truth = problem.initial_params();
        truth.insert(ParamName::Gamma, khz(4.0));
        assert!(cost(&problem, &truth) < 1e-12);
        let mut off = truth.clone();
        off.insert(ParamName::KappaInt, truth[&ParamName::KappaInt] * 1.1);
        assert!(cost(&problem, &off) > cost(&problem, &truth));
    }

    #[test]
    fn point_term_is_offset_times_count() {
        let data = vec![C64::new(0.5, 0.1); 500];
        let model: Vec<C64> = data.iter().map(|z| z + C64::new(0.003, 0.0)).collect();
        assert!((point_term(&model, &data) - 500.0 * 0.003).abs() < 1e-12);
    }

    #[test]
    fn classical_fit_recovers_damping() {
        let problem = classical_problem();
        let r = fit(&problem).unwrap();
        let g = r.params[&ParamName::Gamma];
        assert!((g / khz(4.0) - 1.0).abs() < 1e-3, "γ = {} kHz", to_hz(g) / 1e3);
        assert!((r.params[&ParamName::Kerr] / khz(76.0) - 1.0).abs() < 1e-4);
        assert!(r.converged);
        let report = report_json(&problem, &r, None, Some(3));
        assert_eq!(report["model"], "classical_nl");
        assert!((report["fitted"]["gamma"].as_f64().unwrap() - 4000.0).abs() < 5.0);
    }

    #[test]
    fn problem_validation() {
        let problem = classical_problem();
        let mut fixed = problem.fixed.clone();
        fixed.insert(ParamName::Gamma, 1.0);
        assert!(FitProblem::new(problem.dataset.clone(), FitModel::ClassicalNl, problem.free.clone(), fixed).is_err());
        let mut free = problem.free.clone();
        free[0].initial = free[0].upper * 2.0;
        assert!(FitProblem::new(problem.dataset.clone(), FitModel::ClassicalNl, free, problem.fixed.clone()).is_err());
        let mut fixed = problem.fixed.clone();
        fixed.remove(&ParamName::OmegaR);
        assert!(FitProblem::new(problem.dataset.clone(), FitModel::ClassicalNl, problem.free.clone(), fixed).is_err());
    }

    #[test]
    fn synthesis_is_deterministic() {
        let p = CircuitParams::reference();
        let plan = synth_plan(&p, REFERENCE_ATTENUATION_DB, &[-140.0], 9, 2.0);
        let clean = synthesize(&p, REFERENCE_ATTENUATION_DB, &plan, 0.0, None, 1).unwrap();
        let grid = DriveGrid {
            power_dbm_at_source: plan[0].power_dbm_at_source,
            attenuation_db: REFERENCE_ATTENUATION_DB,
            omega_d: plan[0].freq_hz.iter().map(|f| TWO_PI * f).collect(),
        };
        let direct = response::sweep(Backend::Quantum, &p, &grid, &SweepOptions::default()).unwrap();
        assert_eq!(clean.traces[0].s21, direct.s21);
        let a = synthesize(&p, REFERENCE_ATTENUATION_DB, &plan, 0.002, None, 7).unwrap();
        let b = synthesize(&p, REFERENCE_ATTENUATION_DB, &plan, 0.002, None, 7).unwrap();
        let c = synthesize(&p, REFERENCE_ATTENUATION_DB, &plan, 0.002, None, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
