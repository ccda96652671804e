//! Spectral laboratory for diffusion-based PDE inverse problems.
//!
//! The crate builds a fully analytic test bench around linear PDEs that are
//! diagonal in the sine eigenbasis of the Laplacian on the unit square:
//! Gaussian random field priors, exact spectral solvers, closed-form
//! Gaussian-mixture score models, posterior samplers that decouple the
//! coefficient field from the observed solution field, and verification
//! routines for the covariance and guidance-attenuation theory that predicts
//! when joint-space samplers stall.
//!
//! Start with the `examples/` directory: each example exercises one
//! capability end to end and prints the quantities it checks.

pub mod config;
pub mod error;
pub mod grf;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod operators;
pub mod runner;
pub mod samplers;
pub mod score;
pub mod theory;

pub use error::{DdisError, Result};
pub use grf::{GrfSpec, ObservationSet, RngSeed, RngStream};
pub use grid::{Boundary, Field, GridSpec, SineCoeffs};
pub use operators::{OperatorHandle, PdeTask, SurrogateFit};
pub use score::{MixtureScoreModel, NoiseSchedule};
