//! Pseudo-spectral simulator and verification harness for the 2D stochastic
//! self-consistent Keller-Segel-Navier-Stokes system on a periodic box.
//!
//! The library is organized around a spectral substrate ([`grid`], [`field`],
//! [`ops`]), exact semigroup propagators ([`semigroup`]), a truncated Wiener
//! forcing model ([`noise`]), mild-formulation time integrators and stopping
//! detectors ([`stepper`], [`runner`]), the free-energy/entropy diagnostics
//! and inequality checkers ([`functionals`]), Monte-Carlo orchestration
//! ([`ensemble`]) and file-level I/O ([`config`], [`output`]).
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod config;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod freespace;
pub mod functionals;
pub mod grid;
pub mod noise;
pub mod ops;
pub mod output;
pub mod runner;
pub mod semigroup;
pub mod state;
pub mod stepper;
pub mod verify;

pub use error::{Error, Result};
pub use field::{RealField, VectorField};
pub use grid::{make_grid, Grid, Spectrum};
pub use state::{ExponentSet, InitialData, State, XNorms};
