//! Simulator and analysis toolkit for the cross-resonance (CR) two-qubit gate
//! on coupled multi-level transmons.
//!
//! The crate propagates pulsed dynamics with a 2nd-order Magnus solver,
//! calibrates a direct CNOT (cancellation tone + π condition), evaluates
//! closed-form effective-Hamiltonian rates and off-resonant-error estimators,
//! and drives the rise-time / DRAG / amplitude / gate-time parameter sweeps.
//!
//! # Units
//! Config files and public constructors carry **linear frequencies in MHz** and
//! **times in ns**. Internally every frequency-like quantity is angular,
//! rad/ns = 2π·10⁻³ · MHz; see [`units`].
//!
//! # Layout
//! - [`model`] — truncated two-transmon Hamiltonians, interaction frame,
//!   dressed computational basis.
//! - [`pulses`] — square-Gaussian envelope, Y-DRAG composite, spectra,
//!   ramp-area functionals.
//! - [`propagator`] — Magnus solver, matrix exponential, adaptive ODE oracle.
//! - [`rates`] — closed-form effective rates (orders 0–4), collective
//!   frequencies, effective block-diagonal unitary, non-BD elements.
//! - [`offres`] — off-resonant transition-probability estimators in time and
//!   frequency domain, adiabatic expansion, DRAG residual/optima.
//! - [`calibrate`] — cancellation tone, π-condition amplitude, numeric
//!   refinement.
//! - [`experiments`] — transition probabilities, average population error,
//!   parameter sweeps.
//! - [`cli`] — run-config parsing and subcommand dispatch for the binary.

pub mod calibrate;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod offres;
pub mod propagator;
pub mod pulses;
pub mod quad;
pub mod rates;
pub mod units;

pub use error::CrError;
pub use linalg::OperatorMatrix;
