//! Closed-form steady state of the weakly nonlinear oscillator near its
//! amplitude maximum.
//!
//! Writing `â = ⟨â⟩ + d̂`, the Kerr term converts the deviation moments into
//! an effective nonlinear damping `γ = (4K²/κ)(n_th + ½)`. The `½` is the
//! vacuum contribution `⟨[â, â†]⟩/2`, so zero-point noise acts like half a
//! thermal quantum.

use serde::Serialize;

use crate::device::CircuitParams;
use crate::{Error, Result, C64};

/// Second moments of the deviation operator `d̂ = â − ⟨â⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseMoments {
    /// `⟨d̂†d̂⟩`.
    pub dd: f64,
    /// `⟨d̂²⟩`.
    pub d2: C64,
}

/// Leading-order values at the amplitude maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeadingOrder {
    pub amp: f64,
    /// `√⟨â†â⟩`.
    pub sqrt_photon: f64,
    /// Quantum detuning at which the amplitude peaks.
    pub delta_at_max: f64,
}

/// Emergent nonlinear damping `(4K²/κ)(n_th + ½)`.
pub fn gamma_nl(params: &CircuitParams) -> f64 {
    gamma_nl_with_commutator(params, 1.0)
}

/// `(2K²/κ)(⟨[â,â†]⟩ + 2n_th)` with an explicit commutator expectation; a
/// value of zero switches off the vacuum contribution.
pub fn gamma_nl_with_commutator(params: &CircuitParams, commutator: f64) -> f64 {
    2.0 * params.kerr * params.kerr / params.kappa() * (commutator + 2.0 * params.n_th)
}

/// `b = (4K²/κ²)(n_th + ½)`, the coefficient of the cubic `b x³ + x = α`.
fn cubic_b(params: &CircuitParams) -> f64 {
    gamma_nl(params) / params.kappa()
}

fn regime_warnings(params: &CircuitParams, amp2: f64) {
    if params.kerr * amp2 > params.kappa() / 5.0 {
        log::warn!("K|α|² exceeds κ/5; perturbative closure is outside its regime");
    }
    if amp2 > 0.0 && params.n_th > amp2 / 10.0 {
        log::warn!("n_th exceeds |α|²/10; perturbative closure is outside its regime");
    }
}

/// Steady-state deviation moments for mean field `amp`.
pub fn noise_moments(params: &CircuitParams, amp: C64) -> NoiseMoments {
    let u = amp.norm_sqr();
    regime_warnings(params, u);
    let (k, kappa) = (params.kerr, params.kappa());
    let half = params.n_th + 0.5;
    let quartic = 4.0 * k * k * u * u / (kappa * kappa);
    NoiseMoments {
        dd: params.n_th + quartic * half,
        d2: half * C64::new(-quartic, 2.0 * k * u / kappa),
    }
}

/// Peak amplitude from the real root of `b x³ + x − α = 0`, `α = 2ε/κ`.
pub fn amplitude_cardano(params: &CircuitParams, epsilon: f64) -> Result<f64> {
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!("drive ε = {epsilon} must be ≥ 0")));
    }
    let alpha = params.linear_amplitude(epsilon);
    regime_warnings(params, alpha * alpha);
    let b = cubic_b(params);
    if b == 0.0 || alpha == 0.0 {
        return Ok(alpha);
    }
    let half = alpha / (2.0 * b);
    let root = (half * half + 1.0 / (27.0 * b * b * b)).sqrt();
    let mut x = (half + root).cbrt() + (half - root).cbrt();
    if !(x.is_finite() && x > 0.0 && x <= alpha) {
        x = alpha;
    }
    // Newton polish: the two cube roots cancel badly when b α² ≪ 1
    for _ in 0..3 {
        let f = b * x * x * x + x - alpha;
        x -= f / (3.0 * b * x * x + 1.0);
    }
    Ok(x)
}

/// Leading-order amplitude, photon number and peak detuning.
pub fn leading_order(params: &CircuitParams, epsilon: f64) -> LeadingOrder {
    let alpha = params.linear_amplitude(epsilon);
    regime_warnings(params, alpha * alpha);
    let (k, kappa, n_th) = (params.kerr, params.kappa(), params.n_th);
    let reduction = k * k * alpha * alpha / (kappa * kappa) * (n_th + 0.5);
    let thermal = if alpha > 0.0 { n_th / (2.0 * alpha * alpha) } else { 0.0 };
    LeadingOrder {
        amp: alpha * (1.0 - 4.0 * reduction),
        sqrt_photon: alpha * (1.0 + thermal - 2.0 * reduction),
        delta_at_max: k * (alpha * alpha + 2.0 * n_th),
    }
}
