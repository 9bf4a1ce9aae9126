//! Constraint-consistent learning.
//!
//! Observed actions of a redundant system decompose as `u = v + w`: a task
//! part `v = A⁺ b` fixed by a constraint `A(x) u = b(x)` and a null-space
//! part `w = N pi` with `N = I - A⁺ A`. This crate learns `A` (or `N`), `w`
//! and the unconstrained policy `pi` from state/action samples alone.
//!
//! - [`math`]: pseudoinverses, projectors, unit-vector parameterisation,
//!   K-means, RBF features, Levenberg-Marquardt.
//! - [`constraint`]: state-independent and state-dependent constraint learners.
//! - [`nullspace`]: null-space component learning.
//! - [`policy`]: parametric and locally weighted policy learning.
//! - [`eval`]: normalised error metrics.
//! - [`data`]: synthetic demonstrations with known ground truth.
//! - [`io`]: dataset files and model documents.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraint;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod math;
pub mod nullspace;
pub mod policy;
pub mod types;

pub use error::{CclError, Result};
pub use types::{
    mean_sq_norm, normalize, total_variance, DemonstrationSet, GroundTruth, LearnOptions, LearnReport,
    ReportFlag, Termination,
};
