//! Dormand–Prince 5(4) with error-per-step control for complex vector ODEs.

use crate::C64;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 2_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = f(t, y)` and calls `observe(t, y)` at every entry of
/// `times` (the first entry is the initial condition). On failure returns the
/// last time reached successfully.
pub fn integrate<F, O>(
    mut f: F,
    y0: &[C64],
    times: &[f64],
    tol: Tolerances,
    mut observe: O,
) -> std::result::Result<(), f64>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    O: FnMut(f64, &[C64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = times[0];
    observe(t, &y);
    if times.len() == 1 {
        return Ok(());
    }
    let zero = C64::new(0.0, 0.0);
    let mut k: Vec<Vec<C64>> = (0..7).map(|_| vec![zero; n]).collect();
    let mut tmp = vec![zero; n];
    let mut y_new = vec![zero; n];
    f(t, &y, &mut k[0]);

    let span = times[times.len() - 1] - times[0];
    let mut h = initial_step(&y, &k[0], tol, span);
    let mut steps = 0usize;
    let mut rejected_in_row = 0usize;

    for &t_out in &times[1..] {
        while t < t_out {
            if steps >= tol.max_steps || rejected_in_row > 50 || !h.is_finite() {
                return Err(t);
            }
            let last = t + h >= t_out;
            let h_step = if last { t_out - t } else { h };
            stage(&y, &k, &[A21], h_step, &mut tmp);
            f(t + C2 * h_step, &tmp, &mut k[1]);
            stage(&y, &k, &[A31, A32], h_step, &mut tmp);
            f(t + C3 * h_step, &tmp, &mut k[2]);
            stage(&y, &k, &[A41, A42, A43], h_step, &mut tmp);
            f(t + C4 * h_step, &tmp, &mut k[3]);
            stage(&y, &k, &[A51, A52, A53, A54], h_step, &mut tmp);
            f(t + C5 * h_step, &tmp, &mut k[4]);
            stage(&y, &k, &[A61, A62, A63, A64, A65], h_step, &mut tmp);
            f(t + h_step, &tmp, &mut k[5]);
            stage(&y, &k, &[B1, 0.0, B3, B4, B5, B6], h_step, &mut y_new);
            f(t + h_step, &y_new, &mut k[6]);

            let mut err = 0.0f64;
            for i in 0..n {
                let e = h_step
                    * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                        + E7 * k[6][i]);
                let scale = tol.atol + tol.rtol * y[i].norm().max(y_new[i].norm());
                let r = e.norm() / scale;
                err += r * r;
            }
            err = (err / n as f64).sqrt();
            steps += 1;

            if err <= 1.0 {
                t = if last { t_out } else { t + h_step };
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);
                rejected_in_row = 0;
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = h_step * factor;
                } else {
                    h = h.max(h_step * factor.min(1.0));
                }
            } else {
                rejected_in_row += 1;
                h = h_step * (0.9 * err.powf(-0.2)).max(0.1);
            }
        }
        observe(t, &y);
    }
    Ok(())
}

fn stage(y: &[C64], k: &[Vec<C64>], coeffs: &[f64], h: f64, out: &mut [C64]) {
    out.copy_from_slice(y);
    for (j, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let hc = h * c;
        for (o, kv) in out.iter_mut().zip(&k[j]) {
            *o += hc * kv;
        }
    }
}

fn initial_step(y: &[C64], dy: &[C64], tol: Tolerances, span: f64) -> f64 {
    let mut d0 = 0.0f64;
    let mut d1 = 0.0f64;
    for (a, b) in y.iter().zip(dy) {
        let s = tol.atol + tol.rtol * a.norm();
        d0 += (a.norm() / s).powi(2);
        d1 += (b.norm() / s).powi(2);
    }
    let n = y.len().max(1) as f64;
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
    h.min(span).max(span * 1e-12)
}
