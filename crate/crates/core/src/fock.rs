//! Truncated Fock-space kernel: ladder operators, canonical states and
//! expectation values.
//!
//! Everything here is dense. At the cutoffs used for this oscillator
//! (`N ≤ 256`) an `N × N` complex matrix is small; only the Liouvillian in
//! [`crate::lindblad`] needs a sparse representation.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result, C64};

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = -1e-8;

/// Smallest cutoff for which a coherent state of amplitude `alpha` loses less
/// than ~1e-9 of its norm to truncation: `N ≥ |α|² + 6|α| + 10`.
pub fn adequate_dim(alpha_abs: f64) -> usize {
    let a = alpha_abs.abs();
    (a * a + 6.0 * a + 10.0).ceil() as usize
}

/// Operator on a truncated Fock space of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    mat: DMatrix<C64>,
}

impl Operator {
    pub fn from_matrix(mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Shape {
                left: mat.nrows(),
                right: mat.ncols(),
            });
        }
        check_dim(mat.nrows())?;
        Ok(Self { mat })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            mat: DMatrix::identity(dim, dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn dagger(&self) -> Operator {
        Operator {
            mat: self.mat.adjoint(),
        }
    }

    pub fn mul(&self, other: &Operator) -> Result<Operator> {
        same_dim(self.dim(), other.dim())?;
        Ok(Operator {
            mat: &self.mat * &other.mat,
        })
    }

    /// `[self, other] = self·other − other·self`.
    pub fn commutator(&self, other: &Operator) -> Result<Operator> {
        same_dim(self.dim(), other.dim())?;
        Ok(Operator {
            mat: &self.mat * &other.mat - &other.mat * &self.mat,
        })
    }
}

/// Annihilation operator `â` with `â[n−1, n] = √n`.
pub fn destroy(dim: usize) -> Result<Operator> {
    check_dim(dim)?;
    let mut mat = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        mat[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    Ok(Operator { mat })
}

/// Creation operator `â†`.
pub fn create(dim: usize) -> Result<Operator> {
    Ok(destroy(dim)?.dagger())
}

/// Number operator `â†â`, diagonal `0, 1, …, N−1`.
pub fn number(dim: usize) -> Result<Operator> {
    check_dim(dim)?;
    let diag = DVector::from_fn(dim, |n, _| C64::new(n as f64, 0.0));
    Ok(Operator {
        mat: DMatrix::from_diagonal(&diag),
    })
}

/// Normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Ket {
    amps: DVector<C64>,
}

impl Ket {
    /// Normalizes `amps`; fails on a zero vector.
    pub fn new(amps: DVector<C64>) -> Result<Self> {
        check_dim(amps.len())?;
        let norm = amps.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Domain("cannot normalize a zero state".into()));
        }
        Ok(Self { amps: amps / C64::from(norm) })
    }

    pub fn basis(dim: usize, n: usize) -> Result<Self> {
        check_dim(dim)?;
        if n >= dim {
            return Err(Error::Domain(format!("level {n} outside cutoff {dim}")));
        }
        let mut amps = DVector::zeros(dim);
        amps[n] = C64::new(1.0, 0.0);
        Ok(Self { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            mat: &self.amps * self.amps.adjoint(),
        }
    }
}

/// Coherent state `|α⟩` truncated to `dim` levels and renormalized.
pub fn coherent_ket(dim: usize, alpha: C64) -> Result<Ket> {
    check_dim(dim)?;
    let needed = adequate_dim(alpha.norm());
    if dim < needed {
        return Err(Error::Truncation {
            dim,
            suggested: needed,
        });
    }
    let mut amps = DVector::zeros(dim);
    let mut c = C64::from((-0.5 * alpha.norm_sqr()).exp());
    amps[0] = c;
    for n in 1..dim {
        c = c * alpha / (n as f64).sqrt();
        amps[n] = c;
    }
    Ket::new(amps)
}

/// Hermitian, unit-trace, positive semidefinite state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validates all density-matrix invariants.
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(mat)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Only checks the shape; the caller is responsible for the physical
    /// invariants (see [`DensityMatrix::validate`]).
    pub fn from_matrix_unchecked(mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Shape {
                left: mat.nrows(),
                right: mat.ncols(),
            });
        }
        check_dim(mat.nrows())?;
        Ok(Self { mat })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    /// Largest `|ρ − ρ†|` element.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.mat + self.mat.adjoint()) * C64::from(0.5);
        herm.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::Domain(format!("density matrix not Hermitian ({herm:e})")));
        }
        let tr = self.trace();
        if (tr - C64::from(1.0)).norm() > TRACE_TOL {
            return Err(Error::Domain(format!("density matrix trace {tr} ≠ 1")));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < POSITIVITY_TOL {
            return Err(Error::Domain(format!("density matrix eigenvalue {min_eig:e} < 0")));
        }
        Ok(())
    }

    /// Population of the last Fock level.
    pub fn cutoff_population(&self) -> f64 {
        let n = self.dim();
        self.mat[(n - 1, n - 1)].re
    }

    /// Population on levels `≥ level`.
    pub fn tail_population(&self, level: usize) -> f64 {
        (level..self.dim()).map(|n| self.mat[(n, n)].re).sum()
    }

    /// `⟨â⟩ = Σ √(n+1) ρ[n+1, n]`.
    pub fn mean_amplitude(&self) -> C64 {
        (0..self.dim() - 1)
            .map(|n| self.mat[(n + 1, n)] * ((n + 1) as f64).sqrt())
            .sum()
    }

    /// `⟨â†â⟩`.
    pub fn mean_photons(&self) -> f64 {
        (0..self.dim()).map(|n| n as f64 * self.mat[(n, n)].re).sum()
    }

    /// `⟨â²⟩`.
    pub fn mean_a_squared(&self) -> C64 {
        (0..self.dim().saturating_sub(2))
            .map(|n| self.mat[(n + 2, n)] * (((n + 1) * (n + 2)) as f64).sqrt())
            .sum()
    }
}

/// Thermal state with mean occupation `n_th`, renormalized on the cutoff.
pub fn thermal_density(dim: usize, n_th: f64) -> Result<DensityMatrix> {
    check_dim(dim)?;
    if !(n_th >= 0.0) || !n_th.is_finite() {
        return Err(Error::Domain(format!("thermal occupation {n_th} must be ≥ 0")));
    }
    let ratio = n_th / (1.0 + n_th);
    let weights: Vec<f64> = (0..dim).map(|n| ratio.powi(n as i32)).collect();
    let total: f64 = weights.iter().sum();
    let diag = DVector::from_iterator(dim, weights.iter().map(|w| C64::from(w / total)));
    Ok(DensityMatrix {
        mat: DMatrix::from_diagonal(&diag),
    })
}

/// `Tr(op · ρ)`.
pub fn expect(op: &Operator, rho: &DensityMatrix) -> Result<C64> {
    same_dim(op.dim(), rho.dim())?;
    let n = op.dim();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += op.mat[(i, j)] * rho.mat[(j, i)];
        }
    }
    Ok(acc)
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        Err(Error::InvalidDimension(dim))
    } else {
        Ok(())
    }
}

fn same_dim(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::Shape { left, right })
    }
}
