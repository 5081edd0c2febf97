//! Nonlinear pulse propagation in silicon waveguides and extraction of the
//! Kerr, two-photon and free-carrier coefficients from transmission scans and
//! output spectra.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod fitting;
pub mod materials;
pub mod optimize;
pub mod phase_retrieval;
pub mod pipeline;
pub mod propagation;
pub mod pulse;
pub mod scans;
pub mod units;

pub use error::{Error, Result};
