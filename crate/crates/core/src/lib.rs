//! Finite-difference solver for the three-dimensional viscous primitive
//! equations of the moist atmosphere on the spherical shell S² × (0,1), in
//! the pressure-based vertical coordinate p = (P − p₀)ξ + p₀.
//!
//! The discretisation is mimetic: gradient, Laplacians and the pressure-
//! gradient force are quadrature adjoints of the flux-form divergence, so the
//! integral cancellations behind the system's energy budget (advection
//! neutrality, pressure–buoyancy exchange, integration by parts) hold to
//! round-off and are enforced by an identity battery. Time integration is
//! first-order IMEX with an exact Coriolis rotation, implicit vertical
//! diffusion and a conjugate-gradient barotropic projection.
//!
//! Modules:
//! - [`geometry`]: grid, quadrature, physical constants;
//! - [`operators`]: discrete differential/integral operators;
//! - [`model`]: prognostic state and explicit tendencies;
//! - [`timestepper`]: IMEX step, projection, column solves, CFL;
//! - [`diagnostics`]: norm functionals, energy budget, run-level experiments;
//! - [`harness`]: config, snapshots, drivers, CLI plumbing.

pub mod diagnostics;
pub mod error;
pub mod field;
pub mod filter;
pub mod geometry;
pub mod harness;
pub mod model;
pub mod operators;
pub mod timestepper;

pub use error::{Error, Result};
pub use field::{LevelField, ScalarField, VectorField};
pub use geometry::{build_grid, build_grid_with_band, Grid, Params};
pub use model::{Forcing, State};
pub use timestepper::{step, EllipticWorkspace, StepConfig};
