//! Desk-scale spectral laboratory for multi-bubble blow-up dynamics of the
//! L2-critical nonlinear Schrodinger equation with lower-order perturbations.
//!
//! The crate builds the explicit blow-up and soliton profiles, solves the
//! ground-state and rho elliptic problems, integrates the PDE with a
//! Lawson (integrating-factor) RK4 scheme, extracts modulation parameters by
//! orthogonality fits, and evaluates the mass/energy/monotonicity diagnostics
//! that are checkable at finite resolution.

pub mod acceptance;
pub mod decomposition;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod fields;
pub mod groundstate;
pub mod perturbation;
pub mod profiles;
pub mod scenario;
pub mod util;

pub use error::{Error, Result};
pub use fields::{make_grid, ComplexField, Grid, Norms};
