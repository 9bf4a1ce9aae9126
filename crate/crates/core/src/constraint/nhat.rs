//! State-independent constraints: a fixed set of orthonormal rows.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{append_row, build_rows, check_observations, lattice_search, ConstraintConfig, LATTICE_BUDGET};
use crate::error::{CclError, Result};
use crate::math::{
    angles_from_unit_vector, lm_solve, nullspace_projector, orthogonal_complement_rotation,
    unit_vector_from_angles, unit_vector_jacobian, LmProblem,
};
use crate::types::{total_variance, LearnOptions, LearnReport, ReportFlag, Termination};

/// Constraint `A` made of `dim_b` orthonormal rows. Row `s` is parameterised
/// by `dim_u - 1 - s` angles in the orthogonal complement of rows `0..s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateIndependentConstraint {
    pub dim_u: usize,
    pub angles: Vec<Vec<f64>>,
}

impl StateIndependentConstraint {
    pub fn new(dim_u: usize, angles: Vec<Vec<f64>>) -> Result<Self> {
        if angles.is_empty() || angles.len() >= dim_u {
            return Err(CclError::InvalidInput(format!(
                "need 1 <= dim_b <= {} rows, got {}",
                dim_u.saturating_sub(1),
                angles.len()
            )));
        }
        for (s, a) in angles.iter().enumerate() {
            if a.len() != dim_u - 1 - s {
                return Err(CclError::Dimension(format!(
                    "row {s} needs {} angles, got {}",
                    dim_u - 1 - s,
                    a.len()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(CclError::InvalidInput("angles must be finite".into()));
            }
        }
        Ok(Self { dim_u, angles })
    }

    pub fn dim_b(&self) -> usize {
        self.angles.len()
    }

    /// The `dim_b x dim_u` constraint matrix.
    pub fn rows(&self) -> DMatrix<f64> {
        build_rows(self.dim_u, self.angles.iter().map(Vec::as_slice))
    }

    pub fn projector(&self, threshold: f64) -> DMatrix<f64> {
        nullspace_projector(&self.rows(), threshold).projector
    }
}

/// Learns a state-independent constraint from `dim_u x N` null-space
/// observations, one row at a time.
///
/// Each row is found by a lattice search over its angles followed by an LM
/// polish on `sum (a . u)^2`, restricted to the complement of the rows found
/// so far. Rows are added while they remove no more than
/// `config.row_threshold` of the total action energy.
pub fn learn_nhat(
    w_obs: &DMatrix<f64>,
    config: &ConstraintConfig,
    options: &LearnOptions,
) -> Result<(StateIndependentConstraint, LearnReport)> {
    options.validate()?;
    check_observations(w_obs)?;
    let (dim_u, n) = w_obs.shape();
    let second_moment = w_obs * w_obs.transpose();
    let total = second_moment.trace();
    let max_rows = config.max_rows.unwrap_or(dim_u - 1).min(dim_u - 1);

    let mut rows = DMatrix::zeros(0, dim_u);
    let mut angles: Vec<Vec<f64>> = Vec::new();
    let mut objective = 0.0;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = true;
    let mut first_candidate: Option<(Vec<f64>, f64)> = None;

    for _ in 0..max_rows {
        let frame = orthogonal_complement_rotation(&rows)?;
        let rotated = &frame * &second_moment * frame.transpose();
        let (theta, row_objective, lm) = fit_row(&rotated, options)?;
        iterations += lm.iterations;
        if first_candidate.is_none() {
            first_candidate = Some((theta.clone(), row_objective));
        }
        trace.push((objective + row_objective) / total);
        if row_objective / total > config.row_threshold {
            break;
        }
        converged &= lm.converged;
        objective += row_objective;
        let local = unit_vector_from_angles(&theta);
        rows = append_row(&rows, frame.transpose() * &local);
        angles.push(angles_from_unit_vector(&local));
    }

    let mut flags = Vec::new();
    if angles.is_empty() {
        // Nothing fits; hand back the best single row so the model stays valid.
        let (theta, row_objective) = first_candidate.expect("at least one row was tried");
        angles.push(angles_from_unit_vector(&unit_vector_from_angles(&theta)));
        objective = row_objective;
        flags.push(ReportFlag::NoConstraintFound);
    }

    let model = StateIndependentConstraint::new(dim_u, angles)?;
    let termination = if converged { Termination::XTol } else { Termination::MaxIter };
    let mut report = LearnReport::new(objective / n as f64, total_variance(w_obs), objective, termination);
    report.iterations = iterations;
    report.objective_trace = trace;
    report.flags = flags;
    Ok((model, report))
}

/// Minimises `a(theta)^T M a(theta)` over the angles of one row, where `M`
/// is the second moment rotated into the row's frame.
fn fit_row(rotated: &DMatrix<f64>, options: &LearnOptions) -> Result<(Vec<f64>, f64, LearnReport)> {
    let d = rotated.nrows();
    let quad = |theta: &[f64]| {
        let a = unit_vector_from_angles(theta);
        (a.transpose() * rotated * &a)[(0, 0)]
    };
    let (seed, _) = lattice_search(d - 1, options.search_resolution, LATTICE_BUDGET, quad);

    // a^T M a = |S^{1/2} V^T a|^2 turns the quadratic into least squares.
    let eig = SymmetricEigen::new(rotated.clone());
    let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let factor = scale * eig.eigenvectors.transpose();
    let f2 = factor.clone();
    let problem = LmProblem::with_jacobian(
        d - 1,
        move |p: &DVector<f64>| &factor * unit_vector_from_angles(p.as_slice()),
        move |p: &DVector<f64>| &f2 * unit_vector_jacobian(p.as_slice()),
    );
    let sol = lm_solve(&problem, &DVector::from_vec(seed), options)?;
    let theta: Vec<f64> = sol.params.iter().copied().collect();
    let value = quad(&theta).max(0.0);
    Ok((theta, value, sol.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn null_data(a: &DMatrix<f64>, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let proj = nullspace_projector(a, 1e-12).projector;
        let pi = DMatrix::from_fn(a.ncols(), n, |_, _| rng.random_range(-1.0..1.0));
        proj * pi
    }

    #[test]
    fn recovers_angled_constraint_against_fine_grid() {
        let t = 30f64.to_radians();
        let a = DMatrix::from_row_slice(1, 2, &[t.cos(), t.sin()]);
        let w = null_data(&a, 500, 1);
        let (model, report) = learn_nhat(&w, &ConstraintConfig::default(), &LearnOptions::default()).unwrap();
        assert_eq!(model.dim_b(), 1);

        // 0.1 degree exhaustive oracle over the objective.
        let c = &w * w.transpose();
        let mut best = (0.0, f64::INFINITY);
        for k in 0..1800 {
            let th = (k as f64 * 0.1).to_radians();
            let row = DMatrix::from_row_slice(1, 2, &[th.cos(), th.sin()]);
            let v = super::super::objective_state_independent(&row, &c).unwrap();
            if v < best.1 {
                best = (k as f64 * 0.1, v);
            }
        }
        let learned = model.angles[0][0].to_degrees();
        let diff = (learned - best.0).rem_euclid(180.0);
        assert!(diff.min(180.0 - diff) <= 0.1, "{learned} vs oracle {}", best.0);
        let diff = (learned - 30.0).rem_euclid(180.0);
        assert!(diff.min(180.0 - diff) < 0.5);
        assert!(report.final_objective < 1e-10);
    }

    #[test]
    fn axis_constraint_in_three_dimensions() {
        let a = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
        let w = null_data(&a, 300, 2);
        let (model, report) = learn_nhat(&w, &ConstraintConfig::default(), &LearnOptions::default()).unwrap();
        assert_eq!(model.dim_b(), 1);
        let row = model.rows();
        assert!((row[(0, 2)].abs() - 1.0).abs() < 1e-9, "{row}");
        assert!(report.final_objective < 1e-12);
        assert_eq!(report.objective_trace.len(), 2);
    }

    #[test]
    fn two_row_constraint_in_four_dimensions() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0]) / 2f64.sqrt();
        let w = null_data(&a, 400, 3);
        let (model, _) = learn_nhat(&w, &ConstraintConfig::default(), &LearnOptions::default()).unwrap();
        assert_eq!(model.dim_b(), 2);
        let learned = model.projector(1e-8);
        let truth = nullspace_projector(&a, 1e-8).projector;
        assert!((learned - truth).norm() < 1e-6);
    }

    #[test]
    fn isotropic_data_has_no_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = DMatrix::from_fn(2, 500, |_, _| rng.random_range(-1.0..1.0));
        let (model, report) = learn_nhat(&w, &ConstraintConfig::default(), &LearnOptions::default()).unwrap();
        assert!(report.has_flag(&ReportFlag::NoConstraintFound));
        assert_eq!(model.dim_b(), 1);
        assert!(report.objective_trace[0] > 0.1);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let opts = LearnOptions::default();
        let cfg = ConstraintConfig::default();
        assert!(learn_nhat(&DMatrix::zeros(2, 10), &cfg, &opts).is_err());
        assert!(learn_nhat(&DMatrix::from_element(3, 2, 1.0), &cfg, &opts).is_err());
    }

    #[test]
    fn learned_projector_is_consistent_with_objective() {
        let t = 70f64.to_radians();
        let a = DMatrix::from_row_slice(1, 2, &[t.cos(), t.sin()]);
        let mut w = null_data(&a, 200, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        w.iter_mut().for_each(|v| *v += rng.random_range(-0.01..0.01));
        let (model, report) = learn_nhat(&w, &ConstraintConfig::default(), &LearnOptions::default()).unwrap();
        let n_hat = model.projector(1e-8);
        let lhs: f64 = w.column_iter().map(|u| (&n_hat * u - u).norm_squared()).sum::<f64>();
        let rhs = report.final_objective;
        assert!(lhs / w.norm_squared() <= rhs / w.norm_squared() + 1e-9);
    }

    #[test]
    fn angle_validation() {
        assert!(StateIndependentConstraint::new(2, vec![vec![0.6]]).is_ok());
        assert!(StateIndependentConstraint::new(2, vec![vec![0.1, 0.2]]).is_err());
        assert!(StateIndependentConstraint::new(2, vec![]).is_err());
    }
}
