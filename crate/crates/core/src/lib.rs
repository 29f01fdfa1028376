//! Numerical kernels for a two-bubble construction of type II blow-up in the
//! critical heat equation
//!
//! ```text
//!     u_t = Δu + (1/x₁) ∂₁u + u^p,    p = (n+2)/(n-2),
//! ```
//!
//! posed on an axially symmetric domain in (x₁, x̄) ∈ ℝ²_+ × ℝ^{n-2}, with the
//! solution concentrating a shrinking bubble at a moving point near the unit
//! sphere. The crate provides, bottom-up:
//!
//! - exact bubble profiles and the kernel of the linearized operator
//!   ([`bubble`]),
//! - the radial spectral theory of `L₀ = Δ + pU^{p-1}` ([`spectral`]),
//! - the corrected two-bubble ansatz and its derivative bundles ([`ansatz`]),
//! - residual (error term) expansions and weighted space-time norms
//!   ([`residual`]),
//! - the reduced parameter ODE system and its contraction solver
//!   ([`param_odes`]),
//! - mode-by-mode linear solvers for the inner problem ([`inner_modes`]),
//! - an adaptive axially symmetric nonlinear solver ([`pdesim`]),
//! - CSV/JSON export helpers ([`export`]).
//!
//! All routines are deterministic: reruns with identical inputs produce
//! byte-identical outputs.

pub mod ansatz;
pub mod bubble;
pub mod config;
pub mod error;
pub mod export;
pub mod inner_modes;
pub mod param_odes;
pub mod pdesim;
pub mod profile;
pub mod quad;
pub mod residual;
pub mod spectral;

pub use config::{DimensionConfig, NormSpec};
pub use error::{Error, Result};
