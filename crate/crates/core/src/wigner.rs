//! Phase-space picture: Wigner function, Wigner currents and the
//! Kerr-deformation and squeezing diagnostics.
//!
//! Quadratures are `x̂ = (â + â†)/√2`, `p̂ = (â − â†)/(i√2)`, so the vacuum is
//! `W = e^{−x²−p²}/π` and `⟨â⟩ = ∬ (x + ip) W / √2`. Currents satisfy
//! `∂W/∂t + ∇·ΣJ = 0` and are stored in rad/s.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::constants::to_hz;
use crate::device::CircuitParams;
use crate::fock::{adequate_dim, coherent_ket, DensityMatrix, Ket};
use crate::lindblad::Liouvillian;
use crate::{par_map, Error, Result, C64};

/// Frame offset that keeps the deformed state centered on the x axis.
pub const DEFORM_LAMBDA: f64 = 22.5751;
/// Deformation time in units of `1/K`.
pub const DEFORM_TIME_KERR_UNITS: f64 = 1.0 / 45.0;

const SUPPORT_TOL: f64 = 1e-7;
const STENCIL_TOL: f64 = 0.05;
/// Nodes at each edge where stencils are not evaluated.
const BORDER: usize = 2;

/// Uniform rectangular grid in `(x, p)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSpaceGrid {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseSpaceGrid {
    pub fn new(x: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        for axis in [&x, &p] {
            if axis.len() < 2 * BORDER + 3 {
                return Err(Error::Resolution(format!("axis with {} nodes", axis.len())));
            }
            let h = axis[1] - axis[0];
            if !(h > 0.0) || axis.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
                return Err(Error::Domain("grid axes must be uniform and increasing".into()));
            }
        }
        Ok(Self { x, p })
    }

    /// Square grid of `n × n` nodes over `[−half_width, half_width]²`.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        let axis = crate::response::linspace(-half_width, half_width, n);
        Self::new(axis.clone(), axis)
    }

    /// Default grid for a state of amplitude `|α|`: 201 × 201 over
    /// `±(√2|α| + 5)`.
    pub fn for_amplitude(alpha_abs: f64) -> Self {
        Self::symmetric(2f64.sqrt() * alpha_abs + 5.0, 201).expect("valid default grid")
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn np(&self) -> usize {
        self.p.len()
    }

    pub fn hx(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    pub fn hp(&self) -> f64 {
        self.p[1] - self.p[0]
    }

    #[inline]
    pub fn index(&self, ix: usize, ip: usize) -> usize {
        ix * self.p.len() + ip
    }

    fn half_extent(&self) -> f64 {
        let ends = [self.x[0], self.x[self.nx() - 1], self.p[0], self.p[self.np() - 1]];
        ends.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Trapezoidal `∬ f dx dp`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let (nx, np) = (self.nx(), self.np());
        let mut total = 0.0;
        for ix in 0..nx {
            let wx = if ix == 0 || ix == nx - 1 { 0.5 } else { 1.0 };
            for ip in 0..np {
                let wp = if ip == 0 || ip == np - 1 { 0.5 } else { 1.0 };
                total += wx * wp * f[self.index(ix, ip)];
            }
        }
        total * self.hx() * self.hp()
    }
}

/// Named contributions to the Wigner current.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurrentKind {
    Harmonic,
    Drive,
    Kerr1,
    Kerr2,
    Damping,
    Diffusion,
}

impl CurrentKind {
    pub const ALL: [CurrentKind; 6] = [
        CurrentKind::Harmonic,
        CurrentKind::Drive,
        CurrentKind::Kerr1,
        CurrentKind::Kerr2,
        CurrentKind::Damping,
        CurrentKind::Diffusion,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CurrentKind::Harmonic => "harmonic",
            CurrentKind::Drive => "drive",
            CurrentKind::Kerr1 => "kerr1",
            CurrentKind::Kerr2 => "kerr2",
            CurrentKind::Damping => "damping",
            CurrentKind::Diffusion => "diffusion",
        }
    }
}

/// `(J_x, J_p)` per node, rad/s × density.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct VectorField {
    pub jx: Vec<f64>,
    pub jp: Vec<f64>,
}

impl VectorField {
    fn zeros(n: usize) -> Self {
        Self {
            jx: vec![0.0; n],
            jp: vec![0.0; n],
        }
    }

    fn add_assign(&mut self, other: &VectorField) {
        for (a, b) in self.jx.iter_mut().zip(&other.jx) {
            *a += b;
        }
        for (a, b) in self.jp.iter_mut().zip(&other.jp) {
            *a += b;
        }
    }
}

/// Parameters entering the current formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurrentParams {
    /// Rotating-frame detuning of the Hamiltonian, rad/s.
    pub delta: f64,
    pub kerr: f64,
    pub kappa: f64,
    pub n_th: f64,
    pub epsilon: f64,
}

impl CurrentParams {
    pub fn new(params: &CircuitParams, delta: f64, epsilon: f64) -> Self {
        Self {
            delta,
            kerr: params.kerr,
            kappa: params.kappa(),
            n_th: params.n_th,
            epsilon,
        }
    }

    pub fn from_liouvillian(liouv: &Liouvillian) -> Self {
        Self::new(liouv.params(), liouv.delta_q(), liouv.epsilon())
    }
}

/// Wigner function on a grid with optional current fields.
#[derive(Debug, Clone)]
pub struct WignerField {
    pub grid: PhaseSpaceGrid,
    /// Row-major in `(x, p)`: `w[ix·np + ip]`.
    pub w: Vec<f64>,
    pub currents: BTreeMap<CurrentKind, VectorField>,
    pub current_params: Option<CurrentParams>,
    rho: DMatrix<C64>,
}

impl WignerField {
    pub fn rho(&self) -> &DMatrix<C64> {
        &self.rho
    }

    pub fn normalization(&self) -> f64 {
        self.grid.integrate(&self.w)
    }

    /// `∬ (x + ip) W dx dp / √2`.
    pub fn mean_amplitude(&self) -> C64 {
        let g = &self.grid;
        let fx: Vec<f64> = (0..self.w.len()).map(|i| g.x[i / g.np()] * self.w[i]).collect();
        let fp: Vec<f64> = (0..self.w.len()).map(|i| g.p[i % g.np()] * self.w[i]).collect();
        C64::new(g.integrate(&fx), g.integrate(&fp)) / 2f64.sqrt()
    }

    pub fn min_value(&self) -> f64 {
        self.w.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn total_current(&self, kinds: &[CurrentKind]) -> VectorField {
        let mut total = VectorField::zeros(self.w.len());
        for k in kinds {
            if let Some(j) = self.currents.get(k) {
                total.add_assign(j);
            }
        }
        total
    }
}

/// Wigner values of a Hermitian matrix (not necessarily a state) at the
/// grid nodes, using the displaced-parity ladder recurrence.
pub fn wigner_values(rho: &DMatrix<C64>, grid: &PhaseSpaceGrid) -> Vec<f64> {
    let n = rho.nrows();
    let rows: Vec<usize> = (0..grid.nx()).collect();
    let sq: Vec<f64> = (0..n).map(|k| (k as f64).sqrt()).collect();
    let per_row = par_map(&rows, |&ix| {
        let mut out = Vec::with_capacity(grid.np());
        let mut list = vec![C64::new(0.0, 0.0); n];
        for &p in &grid.p {
            out.push(wigner_point(rho, grid.x[ix], p, &sq, &mut list));
        }
        out
    });
    per_row.into_iter().flatten().collect()
}

/// `W(x, p)` for a single point.
pub fn wigner_at(rho: &DMatrix<C64>, x: f64, p: f64) -> f64 {
    let n = rho.nrows();
    let sq: Vec<f64> = (0..n).map(|k| (k as f64).sqrt()).collect();
    let mut list = vec![C64::new(0.0, 0.0); n];
    wigner_point(rho, x, p, &sq, &mut list)
}

/// `list[n]` walks the Wigner functions of `|m⟩⟨n|` row by row.
fn wigner_point(rho: &DMatrix<C64>, x: f64, p: f64, sq: &[f64], list: &mut [C64]) -> f64 {
    let n = rho.nrows();
    let a = C64::new(x, p) / 2f64.sqrt();
    let two_a = 2.0 * a;
    let two_ac = two_a.conj();
    list[0] = C64::from((-2.0 * a.norm_sqr()).exp() / std::f64::consts::PI);
    let mut w = rho[(0, 0)].re * list[0].re;
    for k in 1..n {
        list[k] = two_a * list[k - 1] / sq[k];
        w += 2.0 * (rho[(0, k)] * list[k]).re;
    }
    for m in 1..n {
        let mut temp = list[m];
        list[m] = (two_ac * temp - sq[m] * list[m - 1]) / sq[m];
        w += (rho[(m, m)] * list[m]).re;
        for k in m + 1..n {
            let next = (two_a * list[k - 1] - sq[m] * temp) / sq[k];
            temp = list[k];
            list[k] = next;
            w += 2.0 * (rho[(m, k)] * list[k]).re;
        }
    }
    w
}

/// Wigner function of a state; fails when the grid edge still carries
/// appreciable weight.
pub fn wigner_grid(rho: &DensityMatrix, grid: &PhaseSpaceGrid) -> Result<WignerField> {
    let w = wigner_values(rho.matrix(), grid);
    let peak = w.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let (nx, np) = (grid.nx(), grid.np());
    let mut edge = 0.0f64;
    for ix in 0..nx {
        for ip in 0..np {
            if ix == 0 || ip == 0 || ix == nx - 1 || ip == np - 1 {
                edge = edge.max(w[grid.index(ix, ip)].abs());
            }
        }
    }
    let ratio = edge / peak;
    if ratio > SUPPORT_TOL {
        let center = rho.mean_amplitude().norm() * 2f64.sqrt();
        return Err(Error::Grid {
            ratio,
            suggested_half_width: (center + 5.0).max(1.5 * grid.half_extent()),
        });
    }
    Ok(WignerField {
        grid: grid.clone(),
        w,
        currents: BTreeMap::new(),
        current_params: None,
        rho: rho.matrix().clone(),
    })
}

/// First and second derivatives by 4th-order central differences; zero on
/// the `BORDER` outermost nodes.
struct Derivatives {
    x: Vec<f64>,
    p: Vec<f64>,
    xx: Vec<f64>,
    pp: Vec<f64>,
    xp: Vec<f64>,
}

fn d1_x(grid: &PhaseSpaceGrid, f: &[f64]) -> Vec<f64> {
    let (nx, np, h) = (grid.nx(), grid.np(), grid.hx());
    let mut out = vec![0.0; f.len()];
    for ix in BORDER..nx - BORDER {
        for ip in 0..np {
            let g = |d: isize| f[grid.index((ix as isize + d) as usize, ip)];
            out[grid.index(ix, ip)] = (g(-2) - 8.0 * g(-1) + 8.0 * g(1) - g(2)) / (12.0 * h);
        }
    }
    out
}

fn d1_p(grid: &PhaseSpaceGrid, f: &[f64]) -> Vec<f64> {
    let (nx, np, h) = (grid.nx(), grid.np(), grid.hp());
    let mut out = vec![0.0; f.len()];
    for ix in 0..nx {
        for ip in BORDER..np - BORDER {
            let g = |d: isize| f[grid.index(ix, (ip as isize + d) as usize)];
            out[grid.index(ix, ip)] = (g(-2) - 8.0 * g(-1) + 8.0 * g(1) - g(2)) / (12.0 * h);
        }
    }
    out
}

fn d2_x(grid: &PhaseSpaceGrid, f: &[f64]) -> Vec<f64> {
    let (nx, np, h) = (grid.nx(), grid.np(), grid.hx());
    let mut out = vec![0.0; f.len()];
    for ix in BORDER..nx - BORDER {
        for ip in 0..np {
            let g = |d: isize| f[grid.index((ix as isize + d) as usize, ip)];
            out[grid.index(ix, ip)] =
                (-g(-2) + 16.0 * g(-1) - 30.0 * g(0) + 16.0 * g(1) - g(2)) / (12.0 * h * h);
        }
    }
    out
}

fn d2_p(grid: &PhaseSpaceGrid, f: &[f64]) -> Vec<f64> {
    let (nx, np, h) = (grid.nx(), grid.np(), grid.hp());
    let mut out = vec![0.0; f.len()];
    for ix in 0..nx {
        for ip in BORDER..np - BORDER {
            let g = |d: isize| f[grid.index(ix, (ip as isize + d) as usize)];
            out[grid.index(ix, ip)] =
                (-g(-2) + 16.0 * g(-1) - 30.0 * g(0) + 16.0 * g(1) - g(2)) / (12.0 * h * h);
        }
    }
    out
}

/// Second-order central first derivative in x, for the stencil-noise test.
fn d1_x_low(grid: &PhaseSpaceGrid, f: &[f64]) -> Vec<f64> {
    let (nx, np, h) = (grid.nx(), grid.np(), grid.hx());
    let mut out = vec![0.0; f.len()];
    for ix in BORDER..nx - BORDER {
        for ip in 0..np {
            out[grid.index(ix, ip)] = (f[grid.index(ix + 1, ip)] - f[grid.index(ix - 1, ip)]) / (2.0 * h);
        }
    }
    out
}

fn derivatives(grid: &PhaseSpaceGrid, w: &[f64]) -> Derivatives {
    let x = d1_x(grid, w);
    let p = d1_p(grid, w);
    let xp = d1_x(grid, &p);
    Derivatives {
        xx: d2_x(grid, w),
        pp: d2_p(grid, w),
        x,
        p,
        xp,
    }
}

/// Rejects grids whose 2nd- and 4th-order derivatives disagree by more than
/// a few percent.
fn check_resolution(grid: &PhaseSpaceGrid, w: &[f64], fine: &[f64]) -> Result<()> {
    let coarse = d1_x_low(grid, w);
    let scale = fine.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let diff = fine
        .iter()
        .zip(&coarse)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if scale > 0.0 && diff > STENCIL_TOL * scale {
        return Err(Error::Resolution(format!(
            "stencil orders disagree by {:.1}% (spacing {:.3})",
            100.0 * diff / scale,
            grid.hx()
        )));
    }
    Ok(())
}

/// Fills all six current fields.
pub fn currents(field: WignerField, params: &CircuitParams, delta_wigner: f64, epsilon: f64) -> Result<WignerField> {
    currents_with(field, CurrentParams::new(params, delta_wigner, epsilon))
}

pub fn currents_with(mut field: WignerField, cp: CurrentParams) -> Result<WignerField> {
    let grid = &field.grid;
    let w = &field.w;
    let d = derivatives(grid, w);
    check_resolution(grid, w, &d.x)?;
    let n = w.len();
    let np = grid.np();
    let mut out: BTreeMap<CurrentKind, VectorField> =
        CurrentKind::ALL.iter().map(|&k| (k, VectorField::zeros(n))).collect();
    let sqrt2 = 2f64.sqrt();
    let diffusion = -0.5 * cp.kappa * (cp.n_th + 0.5);
    for i in 0..n {
        let (x, p) = (grid.x[i / np], grid.p[i % np]);
        let wi = w[i];
        let r2 = x * x + p * p;
        let mut set = |k: CurrentKind, jx: f64, jp: f64| {
            let f = out.get_mut(&k).expect("all kinds present");
            f.jx[i] = jx;
            f.jp[i] = jp;
        };
        let rot = cp.delta + cp.kerr;
        set(CurrentKind::Harmonic, rot * p * wi, -rot * x * wi);
        set(CurrentKind::Drive, sqrt2 * cp.epsilon * wi, 0.0);
        let k1 = -0.5 * cp.kerr * r2;
        set(CurrentKind::Kerr1, k1 * p * wi, -k1 * x * wi);
        let k2 = cp.kerr / 24.0;
        set(
            CurrentKind::Kerr2,
            k2 * (p * (3.0 * d.xx[i] + d.pp[i]) - 2.0 * x * d.xp[i]),
            k2 * (-x * (d.xx[i] + 3.0 * d.pp[i]) + 2.0 * p * d.xp[i]),
        );
        set(CurrentKind::Damping, -0.5 * cp.kappa * x * wi, -0.5 * cp.kappa * p * wi);
        set(CurrentKind::Diffusion, diffusion * d.x[i], diffusion * d.p[i]);
    }
    field.currents = out;
    field.current_params = Some(cp);
    Ok(field)
}

/// `∇·J` by 4th-order central differences.
pub fn divergence(grid: &PhaseSpaceGrid, j: &VectorField) -> Vec<f64> {
    let dx = d1_x(grid, &j.jx);
    let dp = d1_p(grid, &j.jp);
    dx.iter().zip(&dp).map(|(a, b)| a + b).collect()
}

/// Both sides of the continuity equation compared on interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuityResidual {
    /// `‖∂W − (−∇·J)‖ / ‖∂W‖`.
    pub ratio: f64,
    /// `‖∂W − (−∇·J)‖`, rad/s (L2 over phase space).
    pub abs: f64,
    /// `‖∂W‖`, with `∂W` the Wigner transform of `L[ρ]`.
    pub reference: f64,
    /// Largest `‖∇·J_k‖` over the summed kinds; the natural scale when
    /// `ρ` is stationary and `‖∂W‖` vanishes.
    pub term_scale: f64,
}

impl ContinuityResidual {
    /// `abs / term_scale`.
    pub fn relative_to_terms(&self) -> f64 {
        self.abs / self.term_scale
    }
}

/// Compares the Wigner transform of `L[ρ]` with `−∇·ΣJ`. Currents are
/// computed from the Liouvillian when the field has none.
pub fn continuity_residual(field: &WignerField, liouv: &Liouvillian) -> Result<ContinuityResidual> {
    continuity_residual_using(field, liouv, &CurrentKind::ALL)
}

/// As [`continuity_residual`] but summing only `kinds`.
pub fn continuity_residual_using(
    field: &WignerField,
    liouv: &Liouvillian,
    kinds: &[CurrentKind],
) -> Result<ContinuityResidual> {
    if field.rho.nrows() != liouv.dim() {
        return Err(Error::Shape {
            left: field.rho.nrows(),
            right: liouv.dim(),
        });
    }
    let owned;
    let with_currents = if field.currents.is_empty() {
        owned = currents_with(field.clone(), CurrentParams::from_liouvillian(liouv))?;
        &owned
    } else {
        field
    };
    let grid = &field.grid;
    let dw = wigner_values(&liouv.apply(&field.rho), grid);
    let div = divergence(grid, &with_currents.total_current(kinds));
    let margin = 2 * BORDER;
    let (nx, np) = (grid.nx(), grid.np());
    let cell = grid.hx() * grid.hp();
    let interior_norm = |f: &dyn Fn(usize) -> f64| {
        let mut sum = 0.0;
        for ix in margin..nx - margin {
            for ip in margin..np - margin {
                sum += f(grid.index(ix, ip)).powi(2);
            }
        }
        (sum * cell).sqrt()
    };
    let abs = interior_norm(&|i| dw[i] + div[i]);
    let reference = interior_norm(&|i| dw[i]);
    let term_scale = kinds
        .iter()
        .filter_map(|k| with_currents.currents.get(k))
        .map(|j| {
            let d = divergence(grid, j);
            interior_norm(&|i| d[i])
        })
        .fold(0.0, f64::max);
    Ok(ContinuityResidual {
        ratio: if reference > 0.0 { abs / reference } else { f64::INFINITY },
        abs,
        reference,
        term_scale,
    })
}

/// Pure state after evolving `|α⟩` under `λK n̂ − (K/2)â†â†ââ` for `duration`.
pub fn kerr_deform(alpha: C64, params: &CircuitParams, lambda_coeff: f64, duration: f64) -> Result<DensityMatrix> {
    if !(duration > 0.0) {
        return Err(Error::Domain(format!("duration {duration} must be > 0")));
    }
    let dim = adequate_dim(alpha.norm());
    let ket = coherent_ket(dim, alpha)?;
    Ok(kerr_evolve_ket(&ket, params.kerr, lambda_coeff, duration).to_density())
}

/// Applies the diagonal propagator `e^{−iE_n t}`, `E_n = λK n − (K/2)n(n−1)`.
pub fn kerr_evolve_ket(ket: &Ket, kerr: f64, lambda_coeff: f64, duration: f64) -> Ket {
    let amps = ket.amplitudes();
    let evolved = DVector::from_fn(amps.len(), |n, _| {
        let nf = n as f64;
        let energy = lambda_coeff * kerr * nf - 0.5 * kerr * nf * (nf - 1.0);
        amps[n] * C64::from_polar(1.0, -energy * duration)
    });
    Ket::new(evolved).expect("unitary evolution keeps the norm")
}

/// Integrals comparing the drive current with the environmental current
/// `J_env = J_damping + J_diffusion`, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurrentBalance {
    /// `∬|J_env|`.
    pub env_abs: f64,
    /// `∬|J_drive|`.
    pub drive_abs: f64,
    /// `∬|J_drive · Ĵ_env|`.
    pub drive_along_env: f64,
}

impl CurrentBalance {
    /// Values as ordinary frequencies in MHz.
    pub fn to_mhz(&self) -> (f64, f64, f64) {
        let f = |v: f64| to_hz(v) * 1e-6;
        (f(self.env_abs), f(self.drive_abs), f(self.drive_along_env))
    }
}

pub fn current_balance(field: &WignerField) -> Result<CurrentBalance> {
    let get = |k: CurrentKind| {
        field
            .currents
            .get(&k)
            .ok_or_else(|| Error::Domain(format!("current {} not computed", k.name())))
    };
    let drive = get(CurrentKind::Drive)?;
    let env = field.total_current(&[CurrentKind::Damping, CurrentKind::Diffusion]);
    get(CurrentKind::Damping)?;
    let n = field.w.len();
    let mut env_abs = vec![0.0; n];
    let mut drive_abs = vec![0.0; n];
    let mut along = vec![0.0; n];
    for i in 0..n {
        let e = env.jx[i].hypot(env.jp[i]);
        env_abs[i] = e;
        drive_abs[i] = drive.jx[i].hypot(drive.jp[i]);
        if e > 0.0 {
            along[i] = ((drive.jx[i] * env.jx[i] + drive.jp[i] * env.jp[i]) / e).abs();
        }
    }
    let g = &field.grid;
    Ok(CurrentBalance {
        env_abs: g.integrate(&env_abs),
        drive_abs: g.integrate(&drive_abs),
        drive_along_env: g.integrate(&along),
    })
}

/// Minimum quadrature spread over rotation angles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SqueezeScan {
    /// Angle of the minimum in `[−π/2, π/2)`, rad.
    pub theta_min: f64,
    /// `min Δu / Δu_coherent`, with `Δu_coherent = 1`.
    pub du_min_rel: f64,
    /// `(θ, Δu(θ))` on the requested grid.
    pub curve: Vec<(f64, f64)>,
}

/// `Δu(θ)` for `û = e^{iθ}â† + e^{−iθ}â`. The variance is
/// `A + 2|B| cos(arg B − 2θ)`, so the minimum is located exactly; the grid
/// only samples the curve.
pub fn squeeze_scan(rho: &DensityMatrix, theta_grid: &[f64]) -> Result<SqueezeScan> {
    if theta_grid.is_empty() {
        return Err(Error::Domain("empty angle grid".into()));
    }
    let a = rho.mean_amplitude();
    let a2 = rho.mean_a_squared();
    let n = rho.mean_photons();
    // Var û = 2⟨n⟩ + 1 − 2|⟨â⟩|² + 2 Re(e^{−2iθ}(⟨â²⟩ − ⟨â⟩²))
    let base = 2.0 * n + 1.0 - 2.0 * a.norm_sqr();
    let b = a2 - a * a;
    let spread = |th: f64| (base + 2.0 * (C64::from_polar(1.0, -2.0 * th) * b).re).max(0.0).sqrt();
    let curve = theta_grid.iter().map(|&th| (th, spread(th))).collect();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let theta = (b.arg() - std::f64::consts::PI) / 2.0;
    let theta_min = (theta + half_pi).rem_euclid(std::f64::consts::PI) - half_pi;
    Ok(SqueezeScan {
        theta_min,
        du_min_rel: (base - 2.0 * b.norm()).max(0.0).sqrt(),
        curve,
    })
}

/// Writes `x,p,W` plus `Jx_<name>,Jp_<name>` columns for each current.
pub fn write_csv<W: Write>(mut out: W, field: &WignerField) -> Result<()> {
    let kinds: Vec<CurrentKind> = CurrentKind::ALL
        .iter()
        .copied()
        .filter(|k| field.currents.contains_key(k))
        .collect();
    write!(out, "x,p,W")?;
    for k in &kinds {
        write!(out, ",Jx_{0},Jp_{0}", k.name())?;
    }
    writeln!(out)?;
    let np = field.grid.np();
    for i in 0..field.w.len() {
        write!(out, "{},{},{}", field.grid.x[i / np], field.grid.p[i % np], field.w[i])?;
        for k in &kinds {
            let j = &field.currents[k];
            // currents in MHz of ordinary frequency, like the sidecar integrals
            write!(out, ",{},{}", to_hz(j.jx[i]) * 1e-6, to_hz(j.jp[i]) * 1e-6)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Metadata sidecar for [`write_csv`].
pub fn sidecar_json(field: &WignerField, balance: Option<&CurrentBalance>) -> serde_json::Value {
    let g = &field.grid;
    let mut v = serde_json::json!({
        "grid": {
            "nx": g.nx(),
            "np": g.np(),
            "x_min": g.x[0],
            "x_max": g.x[g.nx() - 1],
            "p_min": g.p[0],
            "p_max": g.p[g.np() - 1],
            "hx": g.hx(),
            "hp": g.hp(),
        },
        "units": {
            "x": "dimensionless, x = (a + a†)/√2",
            "p": "dimensionless, p = (a − a†)/(i√2)",
            "W": "probability density per dx dp",
            "J": "MHz (ordinary frequency) × density",
        },
        "normalization": field.normalization(),
        "mean_amplitude": [field.mean_amplitude().re, field.mean_amplitude().im],
        "currents": field.currents.keys().map(|k| k.name()).collect::<Vec<_>>(),
    });
    if let Some(cp) = &field.current_params {
        v["parameters_Hz"] = serde_json::json!({
            "delta": to_hz(cp.delta),
            "kerr": to_hz(cp.kerr),
            "kappa": to_hz(cp.kappa),
            "epsilon": to_hz(cp.epsilon),
            "n_th": cp.n_th,
        });
    }
    if let Some(b) = balance {
        let (env, drive, along) = b.to_mhz();
        v["integrals_MHz"] = serde_json::json!({
            "env_abs": env,
            "drive_abs": drive,
            "drive_along_env": along,
        });
    }
    v
}
