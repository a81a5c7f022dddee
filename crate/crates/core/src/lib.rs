//! Deterministic discrete-velocity solver for the ellipsoidal BGK equation
//!
//! `∂_t F + v·∇_x F = A_ν (M_ν[F] - F)`
//!
//! on a periodic box, together with the diagnostics used to audit a run:
//! conservation defects, entropy functionals, weighted sup norms and
//! relaxation toward the global Maxwellian.
//!
//! All reductions are blocked and merged in a fixed order, so results do not
//! depend on the number of worker threads.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod field;
pub mod gaussian;
pub mod grid;
pub mod integrator;
pub mod linalg;
pub mod moments;
pub mod par;
pub mod quadrature;
pub mod scenarios;
pub mod snapshot;

pub use diagnostics::{DiagnosticFlags, DiagnosticsRecord, Monitor};
pub use error::{EsbgkError, Result};
pub use field::DistributionField;
pub use grid::{build_grid, GridSpec, PhaseGrid};
pub use integrator::{Solver, StepConfig};
pub use moments::{compute_moments, MacroState, MomentField};
