//! Classical steady state of the driven Kerr oscillator with an optional
//! amplitude-dependent damping `γ|a|²`:
//!
//! `(iΔ_c − iK|a|² + (κ + γ|a|²)/2) a = ε`, with `Δ_c = ω_r − ω_d`.
//!
//! Taking the modulus squared gives a cubic in `u = |a|²`, solved through the
//! eigenvalues of its companion matrix and polished by Newton steps.

use nalgebra::Matrix3;

use crate::device::{epsilon_from_dbm, CircuitParams};
use crate::response::{Backend, SweepTrace};
use crate::{Error, Result, C64};

const REAL_ROOT_TOL: f64 = 1e-9;

/// Real steady states at one drive point.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSolution {
    /// One entry per real nonnegative root, ordered by increasing `|a|`.
    pub amplitudes: Vec<C64>,
    pub multistable: bool,
}

/// Coefficients `[c0, c1, c2, c3]` of the cubic in `u = |a|²`.
pub fn cubic_coefficients(params: &CircuitParams, gamma_nl: f64, delta_c: f64, epsilon: f64) -> [f64; 4] {
    let (k, kappa, g) = (params.kerr, params.kappa(), gamma_nl);
    [
        -epsilon * epsilon,
        kappa * kappa / 4.0 + delta_c * delta_c,
        g * kappa / 2.0 - 2.0 * delta_c * k,
        g * g / 4.0 + k * k,
    ]
}

fn horner(c: &[f64; 4], u: f64) -> (f64, f64) {
    let value = ((c[3] * u + c[2]) * u + c[1]) * u + c[0];
    let slope = (3.0 * c[3] * u + 2.0 * c[2]) * u + c[1];
    (value, slope)
}

/// Amplitude for a given `u`, from the complex steady-state identity.
fn amplitude_ratio(params: &CircuitParams, gamma_nl: f64, delta_c: f64, u: f64) -> C64 {
    C64::new(0.5 * (params.kappa() + gamma_nl * u), delta_c - params.kerr * u).inv()
}

/// All real steady states at detuning `delta_c`.
pub fn amplitude_roots(
    params: &CircuitParams,
    gamma_nl: f64,
    delta_c: f64,
    epsilon: f64,
) -> Result<ClassicalSolution> {
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!("drive ε = {epsilon} must be ≥ 0")));
    }
    if !(gamma_nl >= 0.0) || !delta_c.is_finite() {
        return Err(Error::Domain(format!(
            "need γ ≥ 0 and finite detuning (γ={gamma_nl}, Δ={delta_c})"
        )));
    }
    if epsilon == 0.0 {
        return Ok(ClassicalSolution {
            amplitudes: vec![C64::new(0.0, 0.0)],
            multistable: false,
        });
    }
    let c = cubic_coefficients(params, gamma_nl, delta_c, epsilon);
    let roots = if c[3] == 0.0 {
        vec![-c[0] / c[1]]
    } else {
        real_cubic_roots(&c, params.linear_amplitude(epsilon).powi(2))
    };
    let mut amplitudes = Vec::with_capacity(roots.len());
    for u in roots {
        let (value, _) = horner(&c, u);
        if value.abs() > 1e-9 * epsilon * epsilon {
            return Err(Error::Domain(format!("cubic root {u:e} failed to converge")));
        }
        amplitudes.push(amplitude_with_phase(params, gamma_nl, delta_c, epsilon, u)?);
    }
    let multistable = amplitudes.len() > 1;
    Ok(ClassicalSolution {
        amplitudes,
        multistable,
    })
}

/// Real nonnegative roots of the cubic, computed in units of `scale` so the
/// companion matrix is well conditioned.
fn real_cubic_roots(c: &[f64; 4], scale: f64) -> Vec<f64> {
    // v = u/scale: c3 s³ v³ + c2 s² v² + c1 s v + c0 = 0
    let s = scale.max(f64::MIN_POSITIVE);
    let d = [c[0], c[1] * s, c[2] * s * s, c[3] * s * s * s];
    let (a2, a1, a0) = (d[2] / d[3], d[1] / d[3], d[0] / d[3]);
    let companion = Matrix3::new(0.0, 0.0, -a0, 1.0, 0.0, -a1, 0.0, 1.0, -a2);
    let mut roots: Vec<f64> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < REAL_ROOT_TOL * z.re.abs().max(1.0))
        .map(|z| z.re)
        .filter(|&v| v >= -REAL_ROOT_TOL)
        .map(|v| polish(&d, v.max(0.0)) * s)
        .collect();
    roots.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()));
    roots
}

fn polish(c: &[f64; 4], mut v: f64) -> f64 {
    for _ in 0..8 {
        let (value, slope) = horner(c, v);
        if slope == 0.0 {
            break;
        }
        let step = value / slope;
        v -= step;
        if step.abs() <= 1e-16 * v.abs() {
            break;
        }
    }
    v
}

/// Builds `a = |a|e^{iφ}` from the arctan phase, picking the branch that
/// satisfies the complex steady-state identity.
fn amplitude_with_phase(
    params: &CircuitParams,
    gamma_nl: f64,
    delta_c: f64,
    epsilon: f64,
    u: f64,
) -> Result<C64> {
    let modulus = u.sqrt();
    let damping = params.kappa() + gamma_nl * u;
    let principal = (2.0 * (delta_c - params.kerr * u) / damping).atan();
    let lhs = C64::new(0.5 * damping, delta_c - params.kerr * u);
    let candidates = [principal, -principal, principal + std::f64::consts::PI, std::f64::consts::PI - principal];
    let (best, err) = candidates
        .iter()
        .map(|&phi| {
            let a = C64::from_polar(modulus, phi);
            (a, (lhs * a - epsilon).norm())
        })
        .min_by(|x, y| x.1.partial_cmp(&y.1).expect("finite"))
        .expect("nonempty");
    if err > 1e-8 * epsilon {
        return Err(Error::Domain(format!(
            "steady-state identity violated by {:e} relative",
            err / epsilon
        )));
    }
    Ok(best)
}

/// Picks the branch closest to `previous`, or to the linear response when
/// there is none.
fn select_root(sol: &ClassicalSolution, previous: Option<f64>, linear_u: f64) -> C64 {
    let target = previous.unwrap_or(linear_u);
    *sol.amplitudes
        .iter()
        .min_by(|a, b| {
            (a.norm_sqr() - target)
                .abs()
                .partial_cmp(&(b.norm_sqr() - target).abs())
                .expect("finite")
        })
        .expect("at least one root")
}

/// `S21 = 1 − κ_ext a/(2ε)` over a drive-frequency grid, following the branch
/// continuously as the frequency increases.
pub fn s21_trace(
    params: &CircuitParams,
    gamma_nl: f64,
    epsilon: f64,
    omega_d_grid: &[f64],
) -> Result<SweepTrace> {
    if omega_d_grid.is_empty() {
        return Err(Error::Domain("empty frequency grid".into()));
    }
    let mut order: Vec<usize> = (0..omega_d_grid.len()).collect();
    order.sort_by(|&i, &j| omega_d_grid[i].partial_cmp(&omega_d_grid[j]).expect("finite grid"));
    let mut s21 = vec![C64::new(0.0, 0.0); omega_d_grid.len()];
    let mut previous: Option<f64> = None;
    for &i in &order {
        let delta_c = params.omega_r - omega_d_grid[i];
        let ratio = if epsilon == 0.0 {
            amplitude_ratio(params, gamma_nl, delta_c, 0.0)
        } else {
            let sol = amplitude_roots(params, gamma_nl, delta_c, epsilon).map_err(|e| Error::Backend {
                index: i,
                source: Box::new(e),
            })?;
            let linear_u = (epsilon * amplitude_ratio(params, gamma_nl, delta_c, 0.0)).norm_sqr();
            let a = select_root(&sol, previous, linear_u);
            previous = Some(a.norm_sqr());
            a / epsilon
        };
        s21[i] = C64::new(1.0, 0.0) - 0.5 * params.kappa_ext * ratio;
    }
    Ok(SweepTrace {
        power_dbm: f64::NAN,
        epsilon,
        kappa_ext: params.kappa_ext,
        backend: if gamma_nl > 0.0 { Backend::ClassicalNl } else { Backend::Classical },
        omega_d: omega_d_grid.to_vec(),
        s21,
    })
}

/// Drive at which the `γ = 0` cubic first admits three real roots:
/// `ε_c² = κ³/(3√3 K)`, reached at `Δ_c = √3κ/2`.
pub fn critical_epsilon(params: &CircuitParams) -> Option<f64> {
    if params.kerr <= 0.0 {
        return None;
    }
    Some((params.kappa().powi(3) / (3.0 * 3f64.sqrt() * params.kerr)).sqrt())
}

/// Lowest grid power (dBm at the device) at which some grid frequency has
/// more than one real steady state for `γ = 0`; `None` when no grid point
/// bifurcates.
pub fn bifurcation_power(params: &CircuitParams, omega_d_grid: &[f64], power_grid_dbm: &[f64]) -> Option<f64> {
    let mut powers = power_grid_dbm.to_vec();
    powers.sort_by(|a, b| a.partial_cmp(b).expect("finite powers"));
    powers.into_iter().find(|&p| {
        let eps = epsilon_from_dbm(p, params);
        omega_d_grid.iter().any(|&w| {
            amplitude_roots(params, 0.0, params.omega_r - w, eps)
                .map(|s| s.multistable)
                .unwrap_or(false)
        })
    })
}

/// Leading-order position and height of the amplitude maximum:
/// `Δ_c = Kα²` and `|a| = α(1 − α²γ/κ)` with `α = 2ε/κ`.
pub fn perturbative_peak(params: &CircuitParams, gamma_nl: f64, epsilon: f64) -> (f64, f64) {
    let alpha = params.linear_amplitude(epsilon);
    let shift = params.kerr * alpha * alpha;
    if shift > params.kappa() / 5.0 {
        log::warn!("Kα² = {shift:e} exceeds κ/5; leading-order peak is outside its regime");
    }
    (shift, alpha * (1.0 - alpha * alpha * gamma_nl / params.kappa()))
}
