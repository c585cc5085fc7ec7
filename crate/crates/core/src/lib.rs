//! Best linear one-step prediction of functional linear processes with the
//! innovations algorithm, on fixed and on growing finite-dimensional subspaces.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod covariance;
pub mod error;
pub mod hilbert;
pub mod innovations;
pub mod io;
mod linalg;
pub mod process;

pub use error::{Error, Result};
