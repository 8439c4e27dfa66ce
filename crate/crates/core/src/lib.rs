//! Many eigenpairs of the finite-difference Gross–Pitaevskii eigenproblem
//!
//! ```text
//!     D φ + β φ³ = λ φ,    φᵀφ = c
//! ```
//!
//! by homotopy continuation. A random structured matrix `A` defines a linear
//! start problem `(A + D) φ = λ φ`; each of its eigenpairs is followed along
//!
//! ```text
//!     H(φ, λ, t) = [ (1-t) A φ + D φ + t β φ³ - λ φ ;  ½ (c - φᵀφ) ] = 0
//! ```
//!
//! from `t = 0` to `t = 1` with an Euler predictor and a Newton corrector.

// Index loops mirror the band storage; negated comparisons keep NaN on the
// failing side.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod band;
pub mod discretize;
pub mod error;
pub mod homotopy;
pub mod linalg;
pub mod tracer;
pub mod verify;

pub use band::SymBandMatrix;
pub use discretize::{build_grid, build_operator, Domain, Grid, Potential, ProblemSpec};
pub use error::{Error, LinalgError, Result};
pub use homotopy::{HomotopyProblem, RandomMatrixKind, State};
pub use tracer::{trace_all, trace_path, PathOutcome, PathResult, TraceConfig};
pub use verify::Eigenpair;
