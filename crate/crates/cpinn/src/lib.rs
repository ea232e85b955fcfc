//! Consistent physics-informed collocation for the heat equation on the
//! unit box with Dirichlet data.
//!
//! The crate provides the pieces needed to study collocation methods that
//! see `f`, `g`, and `u0` only through point samples:
//!
//! * [`grid`] — space-time data-site sets (interior, lateral boundary,
//!   initial slice) and the dyadic/simplicial partition of the domain.
//! * [`interp`] — piecewise-polynomial Lagrange interpolants over Kuhn
//!   simplices, with sup-norm and mixed-norm error measurement.
//! * [`besov`] — smoothness classes, predicted recovery exponents,
//!   modulus-of-smoothness estimation, bump fixtures, and rate fitting.
//! * [`norms`] — discrete mixed, boundary `L²`, `H^{1/2}`/`H^{1/4}`
//!   seminorms computed from point values, plus quadrature oracles.
//! * [`network`] — a tanh/ReLU³ MLP with exact input derivatives
//!   (gradient, Hessian, time derivative) and exact parameter gradients.
//! * [`loss`] — the classical squared collocation loss, the consistent
//!   squared loss, and the unsquared consistent loss with breakdowns.
//! * [`experiments`] — manufactured solutions, the full-batch momentum
//!   trainer, error/rate studies, and table/figure data export.

pub mod besov;
pub mod error;
pub mod experiments;
pub mod field;
pub mod grid;
pub mod interp;
pub mod linalg;
pub mod loss;
pub mod network;
pub mod norms;
pub mod seq;

pub use error::{Error, Result};
pub use field::Field;
pub use grid::{BoundaryGrid, GridSpec, InitialGrid, SimplexCell, TensorGrid};
pub use interp::Interpolant;
pub use loss::{LossBreakdown, ProblemData};
pub use network::{Jet, MlpNetwork};
