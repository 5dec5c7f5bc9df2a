//! Simulation and data-reduction toolkit for the driven-dissipative Kerr
//! oscillator.
//!
//! Three independent routes compute the steady-state field amplitude of a
//! weakly anharmonic, driven and damped resonator:
//!
//! * [`lindblad`]: the full master-equation steady state on a truncated Fock
//!   space,
//! * [`classical`]: the classical cubic amplitude equation, optionally with an
//!   ad-hoc nonlinear damping term,
//! * [`perturbative`]: closed-form expressions in which quantum and thermal
//!   noise produce an effective nonlinear damping `γ = 4K²/κ (n_th + ½)`.
//!
//! [`wigner`] maps states to phase space and decomposes their dynamics into
//! Wigner currents, [`response`] turns amplitudes into `S21` sweeps, and
//! [`calibrate`] / [`fitkit`] implement the measurement data reduction and the
//! model fits.
//!
//! All frequencies and rates are angular (rad/s) unless a name says otherwise.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod classical;
pub mod constants;
pub mod device;
mod error;
pub mod fitkit;
pub mod fock;
pub mod lindblad;
pub mod perturbative;
pub mod response;
pub mod wigner;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
