//! Shared numerical helpers.

pub mod hermite;
pub mod linalg;
pub mod quad;
pub mod spline;
