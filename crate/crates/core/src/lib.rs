//! Steady-state mono-energetic radiative transport on a slab with
//! piecewise-constant, heterogeneous cross-sections.
//!
//! Two solution paths are provided and kept consistent with each other:
//!
//! * [`sweep`] marches exact characteristic solutions cell by cell for each
//!   discrete direction and averages over angle (matrix-free).
//! * [`kernel`] assembles the dense Galerkin matrix of the integral operator
//!   `K g(x) = ½ ∫ E1(τ(x, y)) g(y) dy` acting on cell averages.
//!
//! On top of these, [`solve`] runs source iteration and the direct
//! second-kind solve, [`crit`] handles the criticality eigenproblem and
//! [`uq`] drives Monte Carlo over random cross-section fields.

// NaN must fail validation, hence `!(x > 0.0)` over `x <= 0.0`
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crit;
pub mod error;
pub mod io;
pub mod kernel;
pub mod quad;
pub mod solve;
pub mod sweep;
pub mod uq;
pub mod xsec;

pub use error::{Error, Result};
pub use kernel::DenseOperator;
pub use quad::AngularQuadrature;
pub use solve::IterationTrace;
pub use sweep::GridFunction;
pub use xsec::{CrossSections, RandomFieldSpec, SlabDomain};
