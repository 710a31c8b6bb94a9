use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be 1 or 2, got {0}")]
    UnsupportedDimension(usize),

    #[error("grid size must be a power of two >= 64, got {0}")]
    BadGridSize(usize),

    #[error("box half-width must be positive, got {0}")]
    BadBoxSize(f64),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field contains non-finite samples after {op}")]
    NonFinite { op: &'static str },

    #[error("profile under-resolved: scale {scale:.3e} < 8 dx = {min_scale:.3e}")]
    UnderResolved { scale: f64, min_scale: f64 },

    #[error("point {point:?} too close to the box boundary (margin {margin})")]
    OutsideSafeRegion { point: Vec<f64>, margin: f64 },

    #[error("shooting bisection failed to bracket a decaying solution in [{lo}, {hi}]")]
    ShootingBracket { lo: f64, hi: f64 },

    #[error("residual {value:.3e} exceeds tolerance {tol:.3e} in {what}")]
    ResidualTooLarge {
        what: &'static str,
        value: f64,
        tol: f64,
    },

    #[error("linear system is singular ({context})")]
    SingularSystem { context: &'static str },

    #[error("time {t} outside the stored domain [{lo}, {hi}]")]
    TimeOutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("blow-up reached at t = {t}: max |v| = {max_abs:.3e}")]
    BlowUp { t: f64, max_abs: f64 },

    #[error("time step {dt:.3e} exceeds stability cap {cap:.3e}")]
    StepTooLarge { dt: f64, cap: f64 },

    #[error("parameter fit did not converge after {iterations} iterations (residual {residual:.3e})")]
    FitDiverged { iterations: usize, residual: f64 },

    #[error("no admissible localizer direction after {tries} seeded rotations")]
    DegenerateDirection { tries: usize },

    #[error("modulation stencil needs {needed} consecutive converged rows, found {found}")]
    StencilUnavailable { needed: usize, found: usize },

    #[error("denominator {0:.3e} below 1e-14 in coercivity ratio")]
    DegenerateRatio(f64),

    #[error("quadrature balls overlap or leave the box")]
    BadBalls,

    #[error("rate fit needs >= 4 strictly positive samples")]
    BadRateFitInput,

    #[error("snapshot format: {0}")]
    SnapshotFormat(String),

    #[error("scenario: {path}: {message}")]
    Scenario { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
