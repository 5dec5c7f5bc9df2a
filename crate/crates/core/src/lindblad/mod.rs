//! Rotating-frame Liouvillian of the driven Kerr oscillator.
//!
//! `∂ρ/∂t = −i[Δ_q n̂ − (K/2)â†â†ââ + iε(â† − â), ρ] + κ(n_th+1)D[â]ρ + κ n_th D[â†]ρ`
//! with `D[L]ρ = LρL† − ½{L†L, ρ}`. The detuning `Δ_q = ω_r − K − ω_d` is the
//! quantum convention; callers map physical drive frequencies onto it.
//!
//! `ρ` is vectorized column-major, `vec(ρ)[m + N n] = ρ_mn`. Every generator
//! couples `ρ_mn` only to neighbours within `N + 1` positions, so the
//! superoperator is banded and the steady state comes from a banded LU.

mod banded;
mod csr;
mod ode;

use nalgebra::DMatrix;

pub use csr::Csr;
pub use ode::Tolerances;

use crate::device::CircuitParams;
use crate::fock::{adequate_dim, DensityMatrix, Operator};
use crate::{Error, Result, C64};

use banded::BandMatrix;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Superoperator split into the conservative part (detuning and Kerr) and
/// the part carrying drive and dissipation.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    dim: usize,
    params: CircuitParams,
    delta_q: f64,
    epsilon: f64,
    total: Csr,
    conservative: Csr,
    driven_damped: Csr,
}

/// Which generator terms to assemble.
#[derive(Clone, Copy, PartialEq)]
enum Part {
    All,
    Conservative,
    DrivenDamped,
}

/// Builds the Liouvillian, checking that `dim` can hold the linear-response
/// amplitude `2ε/κ` whenever the drive is on.
pub fn build(params: &CircuitParams, delta_q: f64, epsilon: f64, dim: usize) -> Result<Liouvillian> {
    params.validate()?;
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    if !(epsilon >= 0.0) || !delta_q.is_finite() {
        return Err(Error::Domain(format!(
            "need ε ≥ 0 and finite detuning (ε={epsilon}, Δ={delta_q})"
        )));
    }
    let needed = adequate_dim(params.linear_amplitude(epsilon));
    if epsilon > 0.0 && dim < needed {
        return Err(Error::Truncation {
            dim,
            suggested: needed,
        });
    }
    let make = |part| assemble(params, delta_q, epsilon, dim, part);
    Ok(Liouvillian {
        dim,
        params: *params,
        delta_q,
        epsilon,
        total: make(Part::All),
        conservative: make(Part::Conservative),
        driven_damped: make(Part::DrivenDamped),
    })
}

/// Default cutoff for a drive: the coherent-state adequacy rule applied to
/// `2ε/κ`, widened for a thermal bath.
pub fn default_dim(params: &CircuitParams, epsilon: f64) -> usize {
    let base = adequate_dim(params.linear_amplitude(epsilon));
    let thermal = (10.0 * params.n_th).ceil() as usize;
    base + thermal
}

fn assemble(p: &CircuitParams, delta: f64, eps: f64, n: usize, part: Part) -> Csr {
    let kappa = p.kappa();
    let down = kappa * (p.n_th + 1.0);
    let up = kappa * p.n_th;
    let with_h = part != Part::DrivenDamped;
    let with_d = part != Part::Conservative;
    let h = |m: usize| {
        let m = m as f64;
        delta * m - 0.5 * p.kerr * m * (m - 1.0)
    };
    // diagonal of the truncated â â†
    let aad = |m: usize| if m + 1 < n { (m + 1) as f64 } else { 0.0 };
    let sq = |x: usize| (x as f64).sqrt();

    Csr::from_rows(n * n, |row, push| {
        let (m, k) = (row % n, row / n);
        if with_d {
            if m >= 1 && k >= 1 {
                push(row - n - 1, C64::from(up * sq(m * k)));
            }
            if k >= 1 {
                push(row - n, C64::from(eps * sq(k)));
            }
            if m >= 1 {
                push(row - 1, C64::from(eps * sq(m)));
            }
        }
        let mut diag = ZERO;
        if with_h {
            diag += C64::new(0.0, -(h(m) - h(k)));
        }
        if with_d {
            diag -= C64::from(0.5 * down * (m + k) as f64 + 0.5 * up * (aad(m) + aad(k)));
        }
        push(row, diag);
        if with_d {
            if m + 1 < n {
                push(row + 1, C64::from(-eps * sq(m + 1)));
            }
            if k + 1 < n {
                push(row + n, C64::from(-eps * sq(k + 1)));
            }
            if m + 1 < n && k + 1 < n {
                push(row + n + 1, C64::from(down * sq((m + 1) * (k + 1))));
            }
        }
    })
}

impl Liouvillian {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &CircuitParams {
        &self.params
    }

    pub fn delta_q(&self) -> f64 {
        self.delta_q
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The full `N² × N²` superoperator.
    pub fn matrix(&self) -> &Csr {
        &self.total
    }

    /// Detuning and Kerr commutator only.
    pub fn conservative(&self) -> &Csr {
        &self.conservative
    }

    /// Drive commutator plus both dissipators.
    pub fn driven_damped(&self) -> &Csr {
        &self.driven_damped
    }

    /// `L[ρ]` as a matrix.
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        self.apply_with(&self.total, rho)
    }

    pub fn apply_conservative(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        self.apply_with(&self.conservative, rho)
    }

    pub fn apply_driven_damped(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        self.apply_with(&self.driven_damped, rho)
    }

    fn apply_with(&self, op: &Csr, rho: &DMatrix<C64>) -> DMatrix<C64> {
        assert_eq!(rho.nrows(), self.dim);
        // nalgebra storage is column-major, matching vec(ρ)
        let out = op.mul_vec(rho.as_slice());
        DMatrix::from_vec(self.dim, self.dim, out)
    }

    /// Rotating-frame Hamiltonian as a dense operator.
    pub fn hamiltonian(&self) -> Operator {
        let n = self.dim;
        let mut h = DMatrix::zeros(n, n);
        for m in 0..n {
            let mf = m as f64;
            h[(m, m)] = C64::from(self.delta_q * mf - 0.5 * self.params.kerr * mf * (mf - 1.0));
            if m + 1 < n {
                let s = ((m + 1) as f64).sqrt() * self.epsilon;
                // iε(â† − â)
                h[(m + 1, m)] = C64::new(0.0, s);
                h[(m, m + 1)] = C64::new(0.0, -s);
            }
        }
        Operator::from_matrix(h).expect("square")
    }
}

/// Options for [`steady_state_with`].
#[derive(Debug, Clone, Copy)]
pub struct SteadyStateOptions {
    /// Escalate a populated cutoff level to an error.
    pub strict: bool,
    /// Largest acceptable population of the last Fock level.
    pub cutoff_tolerance: f64,
    /// Residual bound relative to κ.
    pub residual_tolerance: f64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            strict: false,
            cutoff_tolerance: 1e-7,
            residual_tolerance: 1e-10,
        }
    }
}

/// Steady state together with its diagnostics.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    /// `‖L·vec(ρ)‖∞` in rad/s.
    pub residual: f64,
    pub cutoff_population: f64,
}

pub fn steady_state(liouv: &Liouvillian) -> Result<DensityMatrix> {
    steady_state_with(liouv, &SteadyStateOptions::default()).map(|s| s.rho)
}

/// Solves `L·vec(ρ) = 0` with one diagonal equation replaced by a pin on the
/// most populated level, then normalizes the trace.
pub fn steady_state_with(liouv: &Liouvillian, opts: &SteadyStateOptions) -> Result<SteadyState> {
    let n = liouv.dim;
    let size = n * n;
    let kappa = liouv.params.kappa();
    let alpha2 = liouv.params.linear_amplitude(liouv.epsilon).powi(2) + liouv.params.n_th;
    let pin_level = (alpha2.round() as usize).min(n - 1);

    let mut rho = solve_pinned(liouv, pin_level);
    let acceptable = |v: &Option<Vec<C64>>| {
        v.as_ref()
            .map(|x| residual_inf(liouv, x) < opts.residual_tolerance * kappa)
            .unwrap_or(false)
    };
    if !acceptable(&rho) && pin_level != 0 {
        rho = solve_pinned(liouv, 0);
    }
    if !acceptable(&rho) {
        log::debug!("pinned solve rejected, falling back to inverse iteration");
        rho = inverse_iteration(liouv);
    }
    let vec = rho.ok_or(Error::SolverFailure {
        residual: f64::INFINITY,
    })?;
    let residual = residual_inf(liouv, &vec);
    if !(residual < opts.residual_tolerance * kappa) {
        return Err(Error::SolverFailure { residual });
    }
    debug_assert_eq!(vec.len(), size);
    let state = DensityMatrix::from_matrix_unchecked(DMatrix::from_vec(n, n, vec))?;
    state.validate()?;
    let cutoff_population = state.cutoff_population();
    if cutoff_population > opts.cutoff_tolerance {
        let suggested = n + 8;
        if opts.strict {
            return Err(Error::Truncation { dim: n, suggested });
        }
        log::warn!(
            "cutoff level holds population {cutoff_population:e} at dim {n}; consider dim {suggested}"
        );
    }
    Ok(SteadyState {
        rho: state,
        residual,
        cutoff_population,
    })
}

fn band_of(liouv: &Liouvillian) -> BandMatrix {
    let n = liouv.dim;
    let mut band = BandMatrix::zeros(n * n, n + 1, n + 1);
    for i in 0..n * n {
        for (j, v) in liouv.total.row(i) {
            band.set(i, j, v);
        }
    }
    band
}

fn solve_pinned(liouv: &Liouvillian, level: usize) -> Option<Vec<C64>> {
    let n = liouv.dim;
    let p = level * (n + 1);
    let mut band = band_of(liouv);
    band.clear_row(p);
    band.set(p, p, C64::from(liouv.params.kappa()));
    let lu = band.factorize()?;
    let mut x = vec![ZERO; n * n];
    x[p] = C64::from(liouv.params.kappa());
    lu.solve_in_place(&mut x);
    normalize(n, x)
}

fn inverse_iteration(liouv: &Liouvillian) -> Option<Vec<C64>> {
    let n = liouv.dim;
    let shift = 1e-9 * liouv.params.kappa();
    let mut band = band_of(liouv);
    for i in 0..n * n {
        let v = band.get(i, i);
        band.set(i, i, v - C64::from(shift));
    }
    let lu = band.factorize()?;
    let mut x = vec![ZERO; n * n];
    for m in 0..n {
        x[m * (n + 1)] = C64::from(1.0 / n as f64);
    }
    for _ in 0..4 {
        lu.solve_in_place(&mut x);
        let scale = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if !(scale > 0.0) || !scale.is_finite() {
            return None;
        }
        x.iter_mut().for_each(|v| *v /= scale);
    }
    normalize(n, x)
}

/// Hermitizes and scales to unit trace.
fn normalize(n: usize, mut x: Vec<C64>) -> Option<Vec<C64>> {
    let tr: C64 = (0..n).map(|m| x[m * (n + 1)]).sum();
    if tr.norm() == 0.0 || !tr.is_finite() {
        return None;
    }
    x.iter_mut().for_each(|v| *v /= tr);
    for m in 0..n {
        for k in m..n {
            let a = x[m + n * k];
            let b = x[k + n * m];
            let avg = 0.5 * (a + b.conj());
            x[m + n * k] = avg;
            x[k + n * m] = avg.conj();
        }
    }
    Some(x)
}

fn residual_inf(liouv: &Liouvillian, x: &[C64]) -> f64 {
    liouv
        .total
        .mul_vec(x)
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max)
}

/// Phase-state probabilities `P_j = ⟨θ_j|ρ|θ_j⟩` on `N` states
/// `θ_j = θ₀ + 2πj/N`.
pub fn phase_distribution(rho: &DMatrix<C64>, theta0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rho.nrows();
    // s_d = Σ_{m−k=d} ρ_mk, d ∈ [−(N−1), N−1]
    let mut diag_sums = vec![ZERO; 2 * n - 1];
    for k in 0..n {
        for m in 0..n {
            diag_sums[m + n - 1 - k] += rho[(m, k)];
        }
    }
    let step = std::f64::consts::TAU / n as f64;
    let thetas: Vec<f64> = (0..n).map(|j| theta0 + step * j as f64).collect();
    let probs = thetas
        .iter()
        .map(|&th| {
            let mut acc = diag_sums[n - 1].re;
            for d in 1..n {
                // pair ±d: e^{−idθ} s_d + e^{idθ} s_{−d}
                let e = C64::from_polar(1.0, -(d as f64) * th);
                acc += (e * diag_sums[n - 1 + d] + e.conj() * diag_sums[n - 1 - d]).re;
            }
            acc / n as f64
        })
        .collect();
    (thetas, probs)
}

/// Phase window start centered on the mean field phase.
pub fn phase_window(rho: &DensityMatrix) -> Result<f64> {
    let photons = rho.mean_photons();
    if photons < 1e-6 {
        return Err(Error::UndefinedPhase(photons));
    }
    Ok(rho.mean_amplitude().arg() - std::f64::consts::PI)
}

/// Spread `Δφ` of the truncated phase-state operator, window centered on
/// `arg⟨â⟩`.
pub fn phase_variance(rho: &DensityMatrix) -> Result<f64> {
    let theta0 = phase_window(rho)?;
    let (thetas, probs) = phase_distribution(rho.matrix(), theta0);
    Ok(phase_moments(&thetas, &probs).1)
}

/// Mean and standard deviation of a phase distribution.
fn phase_moments(thetas: &[f64], probs: &[f64]) -> (f64, f64) {
    let mean: f64 = thetas.iter().zip(probs).map(|(t, p)| t * p).sum();
    let second: f64 = thetas.iter().zip(probs).map(|(t, p)| t * t * p).sum();
    (mean, (second - mean * mean).max(0.0).sqrt())
}

/// Dense phase operator `Σ_j θ_j |θ_j⟩⟨θ_j|`.
pub fn phase_operator(dim: usize, theta0: f64) -> Result<Operator> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let step = std::f64::consts::TAU / dim as f64;
    let mut mat = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let th = theta0 + step * j as f64;
        for m in 0..dim {
            for k in 0..dim {
                mat[(m, k)] += C64::from_polar(th / dim as f64, (m as f64 - k as f64) * th);
            }
        }
    }
    Operator::from_matrix(mat)
}

/// Time derivative of an observable split by generator.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct RateSplit {
    /// Contribution of detuning and Kerr.
    pub conservative: f64,
    /// Contribution of drive and dissipation.
    pub driven_damped: f64,
}

/// Observables along a trajectory.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct EvolutionRecord {
    pub times: Vec<f64>,
    pub amp: Vec<C64>,
    pub photon: Vec<f64>,
    /// `NaN` where the phase is undefined.
    pub phase_var: Vec<f64>,
    pub amp_rate: Vec<RateSplit>,
    pub photon_rate: Vec<RateSplit>,
    pub phase_rate: Vec<RateSplit>,
}

impl EvolutionRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Propagates `ρ` and records `⟨â⟩`, `⟨n̂⟩`, `Δφ` and the rates of `|⟨â⟩|`,
/// `⟨n̂⟩` and `Δφ` under each generator, evaluated on the same snapshot.
pub fn evolve(liouv: &Liouvillian, rho0: &DensityMatrix, times: &[f64]) -> Result<EvolutionRecord> {
    evolve_with(liouv, rho0, times, Tolerances::default())
}

pub fn evolve_with(
    liouv: &Liouvillian,
    rho0: &DensityMatrix,
    times: &[f64],
    tol: Tolerances,
) -> Result<EvolutionRecord> {
    if rho0.dim() != liouv.dim {
        return Err(Error::Shape {
            left: liouv.dim,
            right: rho0.dim(),
        });
    }
    if times.is_empty() || times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("times must start at 0 and increase strictly".into()));
    }
    let n = liouv.dim;
    let mut rec = EvolutionRecord::default();
    let mut failure: Option<Error> = None;
    let result = ode::integrate(
        |_, y, dy| liouv.total.mul_vec_into(y, dy),
        rho0.matrix().as_slice(),
        times,
        tol,
        |t, y| {
            if failure.is_some() {
                return;
            }
            let rho = DMatrix::from_column_slice(n, n, y);
            if let Err(e) = record(liouv, &rho, t, &mut rec) {
                failure = Some(e);
            }
        },
    );
    if let Err(last_good_time) = result {
        return Err(Error::Integration { last_good_time });
    }
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(rec)
}

fn record(liouv: &Liouvillian, rho: &DMatrix<C64>, t: f64, rec: &mut EvolutionRecord) -> Result<()> {
    let state = DensityMatrix::from_matrix_unchecked(rho.clone())?;
    let d_cons = DensityMatrix::from_matrix_unchecked(liouv.apply_conservative(rho))?;
    let d_drive = DensityMatrix::from_matrix_unchecked(liouv.apply_driven_damped(rho))?;

    let amp = state.mean_amplitude();
    let photon = state.mean_photons();
    let amp_rate = |d: &DensityMatrix| {
        if amp.norm() > 0.0 {
            (amp.conj() * d.mean_amplitude()).re / amp.norm()
        } else {
            d.mean_amplitude().norm()
        }
    };

    let (phase_var, phase_rate) = match phase_window(&state) {
        Ok(theta0) => {
            let (thetas, probs) = phase_distribution(rho, theta0);
            let (mean, spread) = phase_moments(&thetas, &probs);
            let rate = |d: &DMatrix<C64>| {
                let (_, dp) = phase_distribution(d, theta0);
                let d_first: f64 = thetas.iter().zip(&dp).map(|(t, p)| t * p).sum();
                let d_second: f64 = thetas.iter().zip(&dp).map(|(t, p)| t * t * p).sum();
                if spread > 0.0 {
                    (d_second - 2.0 * mean * d_first) / (2.0 * spread)
                } else {
                    0.0
                }
            };
            (
                spread,
                RateSplit {
                    conservative: rate(d_cons.matrix()),
                    driven_damped: rate(d_drive.matrix()),
                },
            )
        }
        Err(_) => (
            f64::NAN,
            RateSplit {
                conservative: f64::NAN,
                driven_damped: f64::NAN,
            },
        ),
    };

    rec.times.push(t);
    rec.amp.push(amp);
    rec.photon.push(photon);
    rec.phase_var.push(phase_var);
    rec.amp_rate.push(RateSplit {
        conservative: amp_rate(&d_cons),
        driven_damped: amp_rate(&d_drive),
    });
    rec.photon_rate.push(RateSplit {
        conservative: d_cons.mean_photons(),
        driven_damped: d_drive.mean_photons(),
    });
    rec.phase_rate.push(phase_rate);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::khz;
    use crate::device::epsilon_from_dbm;
    use crate::fock::{coherent_ket, destroy, expect, thermal_density, Ket};

    fn unit_params(kerr: f64, n_th: f64) -> CircuitParams {
        CircuitParams::new(100.0, 0.0, 1.0, kerr, n_th).unwrap()
    }

    /// Dense reference: −i[H,ρ] + Σ rate·D[L]ρ built from operator products.
    fn dense_rhs(liouv: &Liouvillian, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let n = liouv.dim();
        let p = liouv.params();
        let h = liouv.hamiltonian().into_matrix();
        let a = destroy(n).unwrap().into_matrix();
        let ad = a.adjoint();
        let i = C64::new(0.0, 1.0);
        let diss = |l: &DMatrix<C64>, rate: f64| {
            let ld = l.adjoint();
            let ll = &ld * l;
            (l * rho * &ld - (&ll * rho + rho * &ll) * C64::from(0.5)) * C64::from(rate)
        };
        -(&h * rho - rho * &h) * i
            + diss(&a, p.kappa() * (p.n_th + 1.0))
            + diss(&ad, p.kappa() * p.n_th)
    }

    #[test]
    fn sparse_matches_dense_operator_products() {
        let p = CircuitParams::new(50.0, 0.2, 1.0, 0.07, 0.3).unwrap();
        let l = build(&p, 0.4, 0.9, 22).unwrap();
        let rho = thermal_density(22, 0.8).unwrap().into_matrix()
            + coherent_ket(22, C64::new(0.3, 0.2)).unwrap().to_density().into_matrix();
        let rho = rho * C64::from(0.5);
        let diff = l.apply(&rho) - dense_rhs(&l, &rho);
        assert!(diff.norm() < 1e-12, "diff {}", diff.norm());
        let split = l.apply_conservative(&rho) + l.apply_driven_damped(&rho) - l.apply(&rho);
        assert!(split.norm() < 1e-13);
    }

    #[test]
    fn vacuum_is_steady_without_drive() {
        let l = build(&unit_params(0.0, 0.0), 0.37, 0.0, 10).unwrap();
        let vac = Ket::basis(10, 0).unwrap().to_density();
        assert!(l.apply(vac.matrix()).norm() < 1e-10);
    }

    #[test]
    fn three_level_decay_entry() {
        let l = build(&unit_params(0.0, 0.0), 0.0, 0.0, 3).unwrap();
        // ρ_11 sits at vec index 1 + 3·1 = 4
        assert_eq!(l.matrix().get(4, 4), C64::new(-1.0, 0.0));
        // feeds ρ_00 at rate 1
        assert_eq!(l.matrix().get(0, 4), C64::new(1.0, 0.0));
    }

    #[test]
    fn trace_functional_is_left_null() {
        let p = CircuitParams::reference().with_n_th(0.1);
        let eps = epsilon_from_dbm(-125.0, &p);
        let n = default_dim(&p, eps);
        let l = build(&p, -khz(300.0), eps, n).unwrap();
        let mut colsum = vec![ZERO; n * n];
        for m in 0..n {
            for (j, v) in l.matrix().row(m * (n + 1)) {
                colsum[j] += v;
            }
        }
        let worst = colsum.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(worst < 1e-8 * p.kappa(), "worst column sum {worst:e}");
    }

    #[test]
    fn band_structure() {
        let l = build(&unit_params(0.1, 0.2), 0.0, 0.5, 17).unwrap();
        assert_eq!(l.matrix().bandwidths(), (18, 18));
    }

    #[test]
    fn rejects_inadequate_dim() {
        let p = CircuitParams::reference();
        let eps = epsilon_from_dbm(-122.0, &p);
        match build(&p, 0.0, eps, 40) {
            Err(Error::Truncation { suggested, .. }) => assert_eq!(suggested, 63),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn linear_steady_state_is_coherent() {
        let p = CircuitParams::reference().with_kerr(0.0);
        let eps = epsilon_from_dbm(-130.0, &p);
        let l = build(&p, 0.0, eps, default_dim(&p, eps)).unwrap();
        let rho = steady_state(&l).unwrap();
        let a = rho.mean_amplitude();
        let alpha = 2.0 * eps / p.kappa();
        assert!((a.re - alpha).abs() < 1e-6, "{a} vs {alpha}");
        assert!(a.im.abs() < 1e-9);
    }

    #[test]
    fn undriven_thermal_steady_state() {
        let p = unit_params(0.0, 0.5);
        let l = build(&p, 0.0, 0.0, 30).unwrap();
        let rho = steady_state(&l).unwrap();
        let th = thermal_density(30, 0.5).unwrap();
        let worst = (rho.matrix() - th.matrix()).camax();
        assert!(worst < 1e-8, "worst {worst:e}");
    }

    #[test]
    fn kerr_steady_state_invariants() {
        let p = CircuitParams::reference();
        let eps = epsilon_from_dbm(-124.0, &p);
        let n = default_dim(&p, eps);
        let l = build(&p, -khz(800.0), eps, n).unwrap();
        let ss = steady_state_with(&l, &SteadyStateOptions::default()).unwrap();
        assert!(ss.residual < 1e-10 * p.kappa());
        ss.rho.validate().unwrap();
        assert!(ss.cutoff_population < 1e-7);
        let a = expect(&destroy(n).unwrap(), &ss.rho).unwrap();
        assert!(a.norm() < p.linear_amplitude(eps));
    }

    #[test]
    fn strict_mode_flags_populated_cutoff() {
        // dim allowed by the build check but far too small for a thermal bath
        let p = unit_params(0.0, 2.0);
        let l = build(&p, 0.0, 0.0, 10).unwrap();
        let opts = SteadyStateOptions {
            strict: true,
            ..Default::default()
        };
        assert!(matches!(steady_state_with(&l, &opts), Err(Error::Truncation { .. })));
        let lax = steady_state_with(&l, &SteadyStateOptions::default()).unwrap();
        assert!(lax.cutoff_population > 1e-7);
    }

    #[test]
    fn phase_variance_uniform_distribution() {
        let rho = thermal_density(40, 2.0).unwrap();
        let dphi = phase_variance(&rho).unwrap();
        let flat = std::f64::consts::PI / 3f64.sqrt();
        assert!((dphi / flat - 1.0).abs() < 0.01, "Δφ = {dphi}");
    }

    #[test]
    fn phase_variance_vacuum_undefined() {
        let vac = Ket::basis(10, 0).unwrap().to_density();
        assert!(matches!(phase_variance(&vac), Err(Error::UndefinedPhase(_))));
    }

    #[test]
    fn phase_distribution_matches_operator() {
        let rho = coherent_ket(30, C64::from_polar(2.0, 0.7)).unwrap().to_density();
        let theta0 = phase_window(&rho).unwrap();
        let phi = phase_operator(30, theta0).unwrap();
        let phi2 = phi.mul(&phi).unwrap();
        let m1 = expect(&phi, &rho).unwrap().re;
        let m2 = expect(&phi2, &rho).unwrap().re;
        let dense = (m2 - m1 * m1).sqrt();
        let fast = phase_variance(&rho).unwrap();
        assert!((dense - fast).abs() < 1e-10, "{dense} vs {fast}");
        // the unpaired window edge at θ₀ carries ~1e−4 weight
        assert!((m1 - 0.7).abs() < 1e-3, "mean {m1}");
    }

    #[test]
    fn phase_spread_of_coherent_state() {
        // continuous phase distribution P(θ) = |Σ c_n e^{-inθ}|²/2π integrated
        // by midpoint quadrature; for |α| = 4.83 the spread is ≈ 1/(2|α|)
        let alpha = 4.83f64;
        let dim = 63;
        let ket = coherent_ket(dim, C64::new(alpha, 0.0)).unwrap();
        let c = ket.amplitudes();
        let samples = 20_000;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for s in 0..samples {
            let th = -std::f64::consts::PI + std::f64::consts::TAU * (s as f64 + 0.5) / samples as f64;
            let amp: C64 = (0..dim).map(|n| c[n] * C64::from_polar(1.0, -(n as f64) * th)).sum();
            let w = amp.norm_sqr() / samples as f64;
            m1 += th * w;
            m2 += th * th * w;
        }
        let oracle = (m2 - m1 * m1).sqrt();
        let dphi = phase_variance(&ket.to_density()).unwrap();
        assert!((dphi / oracle - 1.0).abs() < 1e-3, "{dphi} vs {oracle}");
        assert!((dphi * 2.0 * alpha - 1.0).abs() < 0.05);
    }

    #[test]
    fn evolution_from_steady_state_is_stationary() {
        let p = CircuitParams::reference();
        let eps = epsilon_from_dbm(-130.0, &p);
        let n = default_dim(&p, eps);
        let l = build(&p, 0.0, eps, n).unwrap();
        let rho = steady_state(&l).unwrap();
        let times: Vec<f64> = (0..=5).map(|i| i as f64 * 0.5 / p.kappa()).collect();
        let rec = evolve(&l, &rho, &times).unwrap();
        assert_eq!(rec.len(), 6);
        for i in 1..rec.len() {
            assert!((rec.amp[i] - rec.amp[0]).norm() < 1e-6 * rec.amp[0].norm());
            assert!((rec.photon[i] / rec.photon[0] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn evolve_rejects_bad_times() {
        let l = build(&unit_params(0.0, 0.0), 0.0, 0.0, 4).unwrap();
        let vac = Ket::basis(4, 0).unwrap().to_density();
        assert!(evolve(&l, &vac, &[0.0, 1.0, 1.0]).is_err());
        assert!(evolve(&l, &vac, &[0.5, 1.0]).is_err());
    }
}
