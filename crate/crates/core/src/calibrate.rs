//! Measured-trace ingestion and data reduction: baseline removal and block
//! decimation.
//!
//! The measurement chain is modelled as
//! `S21_meas(ν) = (A + Bν)·e^{i(C + Dν)}·S21_dev(ν)` with the device alone
//! `S21_dev(ν) = 1 − G/(E − i(ν − F))`. `ν` is the frequency in Hz relative
//! to the trace midpoint; `E`, `F` are in Hz and `G` (complex) in Hz.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// One power's worth of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrace {
    pub power_dbm: f64,
    pub freq_hz: Vec<f64>,
    pub s21: Vec<C64>,
}

impl RawTrace {
    pub fn new(power_dbm: f64, freq_hz: Vec<f64>, s21: Vec<C64>) -> Result<Self> {
        let t = Self { power_dbm, freq_hz, s21 };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.freq_hz.len() != self.s21.len() {
            return Err(Error::Shape {
                left: self.freq_hz.len(),
                right: self.s21.len(),
            });
        }
        if self.freq_hz.is_empty() {
            return Err(Error::Domain(format!("empty trace at {} dBm", self.power_dbm)));
        }
        if self.freq_hz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(format!(
                "frequencies at {} dBm are not strictly increasing",
                self.power_dbm
            )));
        }
        if !self.power_dbm.is_finite() || self.s21.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain(format!("non-finite sample at {} dBm", self.power_dbm)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.freq_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq_hz.is_empty()
    }

    fn center_hz(&self) -> f64 {
        0.5 * (self.freq_hz[0] + self.freq_hz[self.len() - 1])
    }
}

/// Traces ordered as read; powers need not be sorted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawDataset {
    pub traces: Vec<RawTrace>,
}

/// Column-oriented JSON form, same field names as the CSV header.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetColumns {
    power_dbm: Vec<f64>,
    freq_hz: Vec<f64>,
    re_s21: Vec<f64>,
    im_s21: Vec<f64>,
}

pub const DATASET_HEADER: &str = "power_dbm,freq_hz,re_s21,im_s21";

impl RawDataset {
    pub fn new(traces: Vec<RawTrace>) -> Result<Self> {
        for t in &traces {
            t.validate()?;
        }
        Ok(Self { traces })
    }

    pub fn powers_dbm(&self) -> Vec<f64> {
        self.traces.iter().map(|t| t.power_dbm).collect()
    }

    /// Trace with the lowest power.
    pub fn lowest_power(&self) -> Option<&RawTrace> {
        self.traces
            .iter()
            .min_by(|a, b| a.power_dbm.total_cmp(&b.power_dbm))
    }

    fn from_rows(rows: impl IntoIterator<Item = (f64, f64, C64)>) -> Result<Self> {
        let mut traces: Vec<RawTrace> = Vec::new();
        for (power, freq, z) in rows {
            match traces.last_mut() {
                Some(t) if t.power_dbm == power => {
                    t.freq_hz.push(freq);
                    t.s21.push(z);
                }
                _ => {
                    if traces.iter().any(|t| t.power_dbm == power) {
                        return Err(Error::Domain(format!("rows for {power} dBm are not contiguous")));
                    }
                    traces.push(RawTrace {
                        power_dbm: power,
                        freq_hz: vec![freq],
                        s21: vec![z],
                    });
                }
            }
        }
        Self::new(traces)
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        match lines.next() {
            Some((_, Ok(h))) if h.trim_end_matches('\r') == DATASET_HEADER => {}
            Some((_, Ok(h))) => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header `{DATASET_HEADER}`, found `{h}`"),
                })
            }
            Some((_, Err(e))) => return Err(e.into()),
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty file".into(),
                })
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            if fields.len() != 4 {
                return Err(parse_err(format!("expected 4 fields, found {}", fields.len())));
            }
            let mut vals = [0.0; 4];
            for (v, f) in vals.iter_mut().zip(&fields) {
                *v = f.trim().parse().map_err(|_| parse_err(format!("not a number: `{f}`")))?;
            }
            rows.push((vals[0], vals[1], C64::new(vals[2], vals[3])));
        }
        Self::from_rows(rows)
    }

    /// LF line endings; values use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{DATASET_HEADER}")?;
        for t in &self.traces {
            for (f, z) in t.freq_hz.iter().zip(&t.s21) {
                writeln!(out, "{},{},{},{}", t.power_dbm, f, z.re, z.im)?;
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: DatasetColumns = serde_json::from_str(text)?;
        let n = c.power_dbm.len();
        for len in [c.freq_hz.len(), c.re_s21.len(), c.im_s21.len()] {
            if len != n {
                return Err(Error::Shape { left: n, right: len });
            }
        }
        Self::from_rows((0..n).map(|i| (c.power_dbm[i], c.freq_hz[i], C64::new(c.re_s21[i], c.im_s21[i]))))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut c = DatasetColumns {
            power_dbm: vec![],
            freq_hz: vec![],
            re_s21: vec![],
            im_s21: vec![],
        };
        for t in &self.traces {
            for (f, z) in t.freq_hz.iter().zip(&t.s21) {
                c.power_dbm.push(t.power_dbm);
                c.freq_hz.push(*f);
                c.re_s21.push(z.re);
                c.im_s21.push(z.im);
            }
        }
        serde_json::to_value(c).expect("plain numeric columns")
    }
}

/// Chain response plus the Lorentzian nuisance fitted alongside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baseline {
    #[serde(rename = "A")]
    pub a: f64,
    /// 1/Hz.
    #[serde(rename = "B")]
    pub b: f64,
    /// rad.
    #[serde(rename = "C")]
    pub c: f64,
    /// rad/Hz.
    #[serde(rename = "D")]
    pub d: f64,
    /// Hz.
    #[serde(rename = "E")]
    pub e: f64,
    /// Hz, relative to `center_hz`.
    #[serde(rename = "F")]
    pub f: f64,
    /// Hz.
    #[serde(rename = "G")]
    pub g: C64,
    /// Frequency origin of `ν`.
    pub center_hz: f64,
    /// RMS of the complex fit residual.
    pub residual_rms: f64,
}

impl Baseline {
    pub fn identity() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: 0.0,
            e: 1.0,
            f: 0.0,
            g: C64::new(0.0, 0.0),
            center_hz: 0.0,
            residual_rms: 0.0,
        }
    }

    fn is_chain_identity(&self) -> bool {
        self.a == 1.0 && self.b == 0.0 && self.c == 0.0 && self.d == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.a, self.b, self.c, self.d, self.e, self.f, self.g.re, self.g.im, self.center_hz]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Calibration("baseline has non-finite entries".into()));
        }
        Ok(())
    }

    /// `(A + Bν)·e^{i(C + Dν)}` at absolute frequency `freq_hz`.
    pub fn chain(&self, freq_hz: f64) -> C64 {
        let nu = freq_hz - self.center_hz;
        C64::from_polar(1.0, self.c + self.d * nu) * (self.a + self.b * nu)
    }

    /// `1 − G/(E − i(ν − F))`.
    pub fn device(&self, freq_hz: f64) -> C64 {
        let nu = freq_hz - self.center_hz;
        C64::new(1.0, 0.0) - self.g / C64::new(self.e, self.f - nu)
    }

    pub fn model(&self, freq_hz: f64) -> C64 {
        self.chain(freq_hz) * self.device(freq_hz)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("finite baseline")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let b: Baseline = serde_json::from_str(text)?;
        b.validate()?;
        Ok(b)
    }
}

/// Internal parameters on a frequency axis scaled to the half-span `s`:
/// `[A, B·s, C, D·s, E/s, F/s, Re G/s, Im G/s]`.
struct Scaled {
    center: f64,
    span: f64,
}

impl Scaled {
    fn model(&self, q: &[f64], freq: f64) -> C64 {
        let x = (freq - self.center) / self.span;
        let chain = C64::from_polar(1.0, q[2] + q[3] * x) * (q[0] + q[1] * x);
        chain * (C64::new(1.0, 0.0) - C64::new(q[6], q[7]) / C64::new(q[4], q[5] - x))
    }

    fn residuals(&self, q: &[f64], trace: &RawTrace) -> DVector<f64> {
        let n = trace.len();
        let mut r = DVector::zeros(2 * n);
        for i in 0..n {
            let d = self.model(q, trace.freq_hz[i]) - trace.s21[i];
            r[2 * i] = d.re;
            r[2 * i + 1] = d.im;
        }
        r
    }

    fn baseline(&self, q: &[f64], rms: f64) -> Baseline {
        let s = self.span;
        Baseline {
            a: q[0],
            b: q[1] / s,
            c: q[2],
            d: q[3] / s,
            e: q[4] * s,
            f: q[5] * s,
            g: C64::new(q[6], q[7]) * s,
            center_hz: self.center,
            residual_rms: rms,
        }
    }
}

fn rms(r: &DVector<f64>) -> f64 {
    (r.norm_squared() / (r.len() / 2).max(1) as f64).sqrt()
}

/// Least-squares line through `(x, y)`: `(intercept, slope)`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

fn initial_guess(sc: &Scaled, trace: &RawTrace) -> Vec<f64> {
    let n = trace.len();
    let xs: Vec<f64> = trace.freq_hz.iter().map(|f| (f - sc.center) / sc.span).collect();
    // chain from the outer tenth on each side
    let edge = (n / 10).max(2).min(n);
    let idx: Vec<usize> = (0..edge).chain(n.saturating_sub(edge)..n).collect();
    let ex: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
    let mags: Vec<f64> = idx.iter().map(|&i| trace.s21[i].norm()).collect();
    let (a, b) = line_fit(&ex, &mags);
    let mut phases: Vec<f64> = trace.s21.iter().map(|z| z.arg()).collect();
    for i in 1..n {
        let jump = phases[i] - phases[i - 1];
        phases[i] -= std::f64::consts::TAU * (jump / std::f64::consts::TAU).round();
    }
    // an over-coupled dip winds the phase by a full turn between the edges
    let (c, d) = (-1..=1)
        .map(|turns| {
            let eph: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(k, &i)| phases[i] - if k >= edge { turns as f64 * std::f64::consts::TAU } else { 0.0 })
                .collect();
            let (c, d) = line_fit(&ex, &eph);
            let misfit: f64 = ex.iter().zip(&eph).map(|(x, y)| (y - c - d * x).powi(2)).sum();
            (misfit, c, d)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c, d)| (c, d))
        .unwrap();
    let q0 = [a, b, c, d, 1.0, 0.0, 0.0, 0.0];
    // device part from the chain-normalized trace
    let dev: Vec<C64> = (0..n)
        .map(|i| trace.s21[i] / (C64::from_polar(1.0, c + d * xs[i]) * (a + b * xs[i])))
        .collect();
    let depth: Vec<f64> = dev.iter().map(|z| (C64::new(1.0, 0.0) - z).norm()).collect();
    let peak = (0..n).max_by(|&i, &j| depth[i].total_cmp(&depth[j])).unwrap_or(0);
    let half = depth[peak] / 2f64.sqrt();
    let mut lo = peak;
    while lo > 0 && depth[lo] > half {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < n && depth[hi] > half {
        hi += 1;
    }
    let e = ((xs[hi] - xs[lo]) / 2.0).max(2.0 / n as f64);
    let g = (C64::new(1.0, 0.0) - dev[peak]) * e;
    let mut q = q0.to_vec();
    q[4] = e;
    q[5] = xs[peak];
    q[6] = g.re.max(0.0);
    q[7] = g.im;
    q
}

/// Joint Levenberg–Marquardt fit of chain and Lorentzian to a linear-regime
/// trace.
pub fn fit_baseline(trace: &RawTrace) -> Result<Baseline> {
    trace.validate()?;
    if trace.len() < 12 {
        return Err(Error::Calibration(format!("{} points cannot fix 8 parameters", trace.len())));
    }
    let span = 0.5 * (trace.freq_hz[trace.len() - 1] - trace.freq_hz[0]);
    let sc = Scaled {
        center: trace.center_hz(),
        span,
    };
    let mut q = initial_guess(&sc, trace);
    let mut r = sc.residuals(&q, trace);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut trail = vec![rms(&r)];
    let scale_floor = trace.s21.iter().map(|z| z.norm_sqr()).sum::<f64>() * 1e-30;
    let mut converged = false;
    for _ in 0..500 {
        let jac = jacobian(&sc, &q, trace, &r);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut accepted = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for k in 0..8 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = q.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = sc.residuals(&trial, trace);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct <= cost {
                let small = step.norm() <= 1e-12 * (1e-6 + DVector::from_column_slice(&q).norm());
                let gain = cost - ct;
                q = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                trail.push(rms(&r));
                if small || gain <= 1e-14 * cost || cost <= scale_floor {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if converged || !accepted {
            converged |= !accepted && jtr.norm() <= 1e-9 * (1.0 + cost.sqrt());
            if !accepted && !converged {
                // no descent left at any damping: treat as stationary point
                converged = true;
            }
            break;
        }
    }
    if !converged {
        return Err(Error::Calibration(format!("baseline fit did not converge; rms trail {trail:?}")));
    }
    let bl = sc.baseline(&q, rms(&r));
    bl.validate()?;
    let half = span;
    if !(bl.e > 0.0) || bl.f.abs() > half || bl.g.re < 0.0 {
        return Err(Error::Calibration(format!(
            "fitted Lorentzian outside its domain (E = {:.4e} Hz, F = {:.4e} Hz, G = {:.4e}); rms trail {:?}",
            bl.e, bl.f, bl.g, trail
        )));
    }
    Ok(bl)
}

fn jacobian(sc: &Scaled, q: &[f64], trace: &RawTrace, r0: &DVector<f64>) -> DMatrix<f64> {
    let n = r0.len();
    let mut jac = DMatrix::zeros(n, q.len());
    let mut qp = q.to_vec();
    for k in 0..q.len() {
        let h = 1e-7 * q[k].abs().max(1e-3);
        qp[k] = q[k] + h;
        let rp = sc.residuals(&qp, trace);
        qp[k] = q[k] - h;
        let rm = sc.residuals(&qp, trace);
        qp[k] = q[k];
        jac.set_column(k, &((rp - rm) / (2.0 * h)));
    }
    jac
}

/// Divides every trace by the chain response.
pub fn apply_baseline(dataset: &RawDataset, bl: &Baseline) -> Result<RawDataset> {
    bl.validate()?;
    if bl.is_chain_identity() {
        return Ok(dataset.clone());
    }
    let mut out = dataset.clone();
    for t in &mut out.traces {
        let amp = |f: f64| bl.a + bl.b * (f - bl.center_hz);
        let (lo, hi) = (amp(t.freq_hz[0]), amp(t.freq_hz[t.len() - 1]));
        if lo * hi <= 0.0 {
            return Err(Error::Calibration(format!(
                "baseline amplitude crosses zero within the band at {} dBm",
                t.power_dbm
            )));
        }
        for (z, f) in t.s21.iter_mut().zip(&t.freq_hz) {
            *z /= bl.chain(*f);
        }
    }
    Ok(out)
}

/// Multiplies every trace by the chain response (the inverse of
/// [`apply_baseline`]).
pub fn impose_baseline(dataset: &RawDataset, bl: &Baseline) -> RawDataset {
    let mut out = dataset.clone();
    for t in &mut out.traces {
        for (z, f) in t.s21.iter_mut().zip(&t.freq_hz) {
            *z *= bl.chain(*f);
        }
    }
    out
}

/// Block averages of `block` consecutive points; a trailing partial block is
/// averaged as-is.
pub fn decimate(dataset: &RawDataset, block: usize) -> Result<RawDataset> {
    if block == 0 {
        return Err(Error::Domain("decimation block must be ≥ 1".into()));
    }
    if block == 1 {
        return Ok(dataset.clone());
    }
    let traces = dataset
        .traces
        .iter()
        .map(|t| {
            let freq_hz = t.freq_hz.chunks(block).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
            let s21 = t
                .s21
                .chunks(block)
                .map(|c| c.iter().sum::<C64>() / c.len() as f64)
                .collect();
            RawTrace {
                power_dbm: t.power_dbm,
                freq_hz,
                s21,
            }
        })
        .collect();
    Ok(RawDataset { traces })
}
