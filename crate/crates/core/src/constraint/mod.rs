//! Learning constraint matrices from null-space observations.
//!
//! All learners take only states and observed actions. They assume the
//! actions are pure null-space motion `u = N(x) pi(x)` and look for the rows
//! `a` that annihilate them, `a . u = 0`.

mod features;
mod nhat;
mod state_dependent;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use features::{FeatureMatrix, FeatureSpec};
pub use nhat::{learn_nhat, StateIndependentConstraint};
pub use state_dependent::{
    learn_alpha, learn_lambda, objective_avn, rotated_moments, ConstraintMode,
    StateDependentConstraintModel,
};

use crate::error::{CclError, Result};
use crate::math::{canonicalize_sign, orthogonal_complement_rotation, unit_vector_from_angles};

/// Upper bound on lattice points visited per search.
pub(crate) const LATTICE_BUDGET: usize = 200_000;

/// Learner settings beyond the shared optimiser options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    /// Number of Gaussian bases for state-dependent angles.
    pub num_basis: usize,
    /// A row is kept while the fraction of total action energy it removes,
    /// `sum (a . u)^2 / sum |u|^2`, stays at or below this value.
    pub row_threshold: f64,
    /// Hard cap on the number of rows.
    pub max_rows: Option<usize>,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            num_basis: 16,
            row_threshold: 1e-2,
            max_rows: None,
        }
    }
}

/// `sum_n |A u_n|^2 = trace(A C A^T)` with `C = sum_n u_n u_n^T`. For
/// orthonormal rows this equals both `sum |u - N u|^2` and `sum |A⁺A u|^2`.
pub fn objective_state_independent(a: &DMatrix<f64>, second_moment: &DMatrix<f64>) -> Result<f64> {
    let dim_u = a.ncols();
    if second_moment.shape() != (dim_u, dim_u) {
        return Err(CclError::Dimension(format!(
            "candidate has {dim_u} columns, second moment is {}x{}",
            second_moment.nrows(),
            second_moment.ncols()
        )));
    }
    Ok((a * second_moment * a.transpose()).trace().max(0.0))
}

/// Stacks orthonormal rows in `R^dim`: row `s` is the unit vector of its
/// angles expressed in the orthogonal complement of rows `0..s`, then
/// sign-canonicalised.
pub(crate) fn build_rows<'a>(
    dim: usize,
    angle_sets: impl IntoIterator<Item = &'a [f64]>,
) -> DMatrix<f64> {
    let mut rows = DMatrix::zeros(0, dim);
    for angles in angle_sets {
        let frame = orthogonal_complement_rotation(&rows).expect("rows are orthonormal by construction");
        let local = unit_vector_from_angles(angles);
        let row = frame.transpose() * local;
        rows = append_row(&rows, row);
    }
    rows
}

pub(crate) fn append_row(rows: &DMatrix<f64>, mut row: DVector<f64>) -> DMatrix<f64> {
    canonicalize_sign(&mut row);
    let mut out = rows.clone().insert_row(rows.nrows(), 0.0);
    out.row_mut(rows.nrows()).copy_from(&row.transpose());
    out
}

/// Exhaustive search over the lattice `{k pi / res}^dim`, shrinking the
/// per-angle resolution so at most [`LATTICE_BUDGET`] points are visited.
/// Returns the first minimiser in lexicographic order.
pub(crate) fn lattice_search(
    dim: usize,
    resolution: usize,
    budget: usize,
    mut f: impl FnMut(&[f64]) -> f64,
) -> (Vec<f64>, f64) {
    if dim == 0 {
        return (Vec::new(), f(&[]));
    }
    let mut res = resolution.max(2);
    while res > 2 && (res as f64).powi(dim as i32) > budget as f64 {
        res -= 1;
    }
    let step = std::f64::consts::PI / res as f64;
    let mut idx = vec![0usize; dim];
    let mut theta = vec![0.0; dim];
    let mut best = (theta.clone(), f64::INFINITY);
    loop {
        for (t, &i) in theta.iter_mut().zip(&idx) {
            *t = i as f64 * step;
        }
        let v = f(&theta);
        if v < best.1 {
            best = (theta.clone(), v);
        }
        let mut k = dim;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < res {
                break;
            }
            idx[k] = 0;
        }
    }
}

pub(crate) fn check_observations(w_obs: &DMatrix<f64>) -> Result<()> {
    let (dim_u, n) = w_obs.shape();
    if dim_u < 2 {
        return Err(CclError::Dimension(
            "constraint learning needs at least two action dimensions".into(),
        ));
    }
    if n < dim_u {
        return Err(CclError::InvalidInput(format!(
            "{n} observations cannot identify a constraint in {dim_u} dimensions"
        )));
    }
    if w_obs.iter().any(|v| !v.is_finite()) {
        return Err(CclError::InvalidInput("observations must be finite".into()));
    }
    if w_obs.norm_squared() == 0.0 {
        return Err(CclError::InvalidInput(
            "all observations are zero; the constraint is unidentifiable".into(),
        ));
    }
    Ok(())
}
