//! Crate-wide error type.
//!
//! Numerical failures are reported as structured variants rather than panics so
//! that callers (in particular the CLI) can distinguish configuration mistakes
//! from genuine numerical breakdown.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The construction requires n ≥ 6; lower dimensions have a different
    /// blow-up rate structure and are rejected up front.
    #[error("dimension n = {0} not supported, need n >= 6")]
    DimensionTooSmall(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A truncated improper integral whose tail estimate exceeds the requested
    /// tolerance.
    #[error("quadrature tail {estimate:.3e} exceeds tolerance {tolerance:.3e} for {what}")]
    QuadratureTail {
        what: &'static str,
        estimate: f64,
        tolerance: f64,
    },

    /// r^{n-1} W(Z0, Ztilde) must be constant; a large spread means the second
    /// kernel element was lost to roundoff.
    #[error("Wronskian constancy violated: relative spread {0:.3e}")]
    WronskianDegenerate(f64),

    #[error("eigenvalue solve failed: {0}")]
    EigenSolve(String),

    /// Solvability of the mode-0 inverse requires the datum to be orthogonal
    /// to Z0 on the ball.
    #[error("orthogonality defect {value:.3e} exceeds {tolerance:.3e}")]
    NotOrthogonal { value: f64, tolerance: f64 },

    #[error("point (x1, rho) = ({x1:.6}, {rho:.6}) lies outside the domain")]
    OutsideDomain { x1: f64, rho: f64 },

    /// Angular resolution too low for the requested decomposition: the modal
    /// energies fail to reproduce the total L^2 mass.
    #[error("Parseval defect {defect:.3e} exceeds {tolerance:.3e}; increase angular resolution")]
    UnderResolved { defect: f64, tolerance: f64 },

    /// Adaptive time stepping rejected too many consecutive steps.
    #[error("step rejection cascade at time {0:.6e}")]
    RejectionCascade(f64),

    #[error("time step underflow: dt = {dt:.3e} at t = {t:.6e}")]
    StepUnderflow { t: f64, dt: f64 },

    /// The simulated solution collapsed instead of blowing up (expected when
    /// the initial data is perturbed off the codimension-one stable set).
    #[error("solution quenched at t = {t:.6e}: sup u = {sup:.3e}")]
    Quench { t: f64, sup: f64 },

    #[error("fixed point iteration diverged after {0} sweeps")]
    Diverged(usize),

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for configuration errors, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionTooSmall(_) | Error::InvalidConfig(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
