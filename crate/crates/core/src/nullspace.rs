//! Null-space component learning: recover `w(x)` from `u = v + w` when the
//! task part `v` is orthogonal to `w`.
//!
//! The model `w~(x) = W beta(x)` is fitted so that projecting each
//! observation onto the prediction reproduces the prediction,
//! `P~_n u_n = w~_n` with `P~_n = w~_n w~_n^T / |w~_n|^2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CclError, Result};
use crate::math::{lm_solve, LeastSquaresProblem, RbfBasis, RbfModel};
use crate::types::{total_variance, LearnOptions, LearnReport, ReportFlag};

/// Predictions with squared norm below this get a zero projector.
const MIN_PREDICTION_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullspaceComponentModel {
    pub rbf: RbfModel,
}

impl NullspaceComponentModel {
    pub fn new(rbf: RbfModel) -> Self {
        Self { rbf }
    }

    /// Untrained model with `g` K-means centers on `x`.
    pub fn from_data(x: &DMatrix<f64>, dim_u: usize, g: usize, seed: u64) -> Result<Self> {
        Ok(Self::new(RbfModel::zeros(RbfBasis::from_data(x, g, seed)?, dim_u)))
    }

    pub fn dim_u(&self) -> usize {
        self.rbf.dim_out()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.rbf.predict(x)
    }
}

pub fn predict_ncl(model: &NullspaceComponentModel, x: &DMatrix<f64>) -> DMatrix<f64> {
    model.predict(x)
}

/// Objective value, stacked residuals `P~_n u_n - w~_n` and their Jacobian
/// with respect to `vec(W)` (column-major, `dim_u * G` columns).
#[derive(Debug, Clone)]
pub struct NclObjective {
    pub value: f64,
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    /// Samples whose prediction was too small to define `P~_n`.
    pub degenerate: usize,
}

pub fn objective_ncl(weights: &DMatrix<f64>, bx: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<NclObjective> {
    let (dim_u, g) = weights.shape();
    if bx.nrows() != g || bx.ncols() != u.ncols() || u.nrows() != dim_u {
        return Err(CclError::Dimension(format!(
            "weights {dim_u}x{g}, features {}x{}, observations {}x{}",
            bx.nrows(),
            bx.ncols(),
            u.nrows(),
            u.ncols()
        )));
    }
    let n = u.ncols();
    let mut residuals = DVector::zeros(n * dim_u);
    let mut jacobian = DMatrix::zeros(n * dim_u, dim_u * g);
    let mut degenerate = 0;
    for i in 0..n {
        let beta = bx.column(i);
        let w = weights * beta;
        let ui = u.column(i);
        let norm2 = w.norm_squared();
        let (r, dr_dw) = if norm2 < MIN_PREDICTION_NORM * MIN_PREDICTION_NORM {
            degenerate += 1;
            (-&w, -DMatrix::identity(dim_u, dim_u))
        } else {
            let wu = w.dot(&ui);
            let s = wu / norm2;
            let ds = ui / norm2 - &w * (2.0 * wu / (norm2 * norm2));
            let r = &w * (s - 1.0);
            let dr = DMatrix::identity(dim_u, dim_u) * (s - 1.0) + &w * ds.transpose();
            (r, dr)
        };
        residuals.rows_mut(i * dim_u, dim_u).copy_from(&r);
        for gi in 0..g {
            let b = beta[gi];
            let mut block = jacobian.view_mut((i * dim_u, gi * dim_u), (dim_u, dim_u));
            block.copy_from(&(&dr_dw * b));
        }
    }
    Ok(NclObjective {
        value: residuals.norm_squared(),
        residuals,
        jacobian,
        degenerate,
    })
}

struct NclProblem<'a> {
    bx: &'a DMatrix<f64>,
    u: &'a DMatrix<f64>,
}

impl NclProblem<'_> {
    fn weights(&self, p: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.u.nrows(), self.bx.nrows(), p.as_slice())
    }
}

impl LeastSquaresProblem for NclProblem<'_> {
    fn num_params(&self) -> usize {
        self.u.nrows() * self.bx.nrows()
    }

    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        objective_ncl(&self.weights(p), self.bx, self.u)
            .expect("dimensions fixed at construction")
            .residuals
    }

    fn jacobian(&self, p: &DVector<f64>) -> Option<DMatrix<f64>> {
        objective_ncl(&self.weights(p), self.bx, self.u)
            .ok()
            .map(|o| o.jacobian)
    }
}

/// Ridge regression `W = U B^T (B B^T + lambda I)^-1`.
pub(crate) fn ridge_weights(bx: &DMatrix<f64>, targets: &DMatrix<f64>, regularization: f64) -> DMatrix<f64> {
    let g = bx.nrows();
    let mut lhs = bx * bx.transpose();
    let lambda = regularization * (lhs.trace() / g as f64).max(1.0);
    for i in 0..g {
        lhs[(i, i)] += lambda.max(f64::MIN_POSITIVE);
    }
    let rhs = bx * targets.transpose();
    let solved = match lhs.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => crate::math::pinv_truncated(&lhs, 1e-12) * rhs,
    };
    solved.transpose()
}

/// Fits the weights of `model0`'s basis: ridge regression of `U` for a start,
/// then LM on the projection residuals.
pub fn learn_ncl(
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    model0: &NullspaceComponentModel,
    options: &LearnOptions,
) -> Result<(NullspaceComponentModel, LearnReport)> {
    options.validate()?;
    let n = u.ncols();
    if x.ncols() != n {
        return Err(CclError::Dimension(format!("{} states for {n} observations", x.ncols())));
    }
    if x.nrows() != model0.rbf.basis.dim_x() || u.nrows() != model0.dim_u() {
        return Err(CclError::Dimension(format!(
            "model maps R^{} to R^{}, data is R^{} to R^{}",
            model0.rbf.basis.dim_x(),
            model0.dim_u(),
            x.nrows(),
            u.nrows()
        )));
    }
    let g = model0.rbf.basis.len();
    if g > n {
        return Err(CclError::InvalidInput(format!("{g} basis functions for {n} samples")));
    }
    if u.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(CclError::InvalidInput("data must be finite".into()));
    }

    let bx = model0.rbf.basis.feature_matrix(x);
    let w0 = ridge_weights(&bx, u, options.regularization);
    let problem = NclProblem { bx: &bx, u };
    let sol = lm_solve(&problem, &DVector::from_column_slice(w0.as_slice()), options)?;
    let weights = problem.weights(&sol.params);
    let model = NullspaceComponentModel::new(RbfModel::new(model0.rbf.basis.clone(), weights)?);

    let fit = objective_ncl(&model.rbf.weights, &bx, u)?;
    let pred = model.predict(x);
    let targets = &pred + DMatrix::from_column_slice(u.nrows(), n, fit.residuals.as_slice());
    let mut report = LearnReport::new(fit.value / n as f64, total_variance(&targets), fit.value, sol.report.termination);
    report.iterations = sol.report.iterations;
    report.objective_trace = sol.report.objective_trace;
    if fit.degenerate > 0 {
        report.flags.push(ReportFlag::DegenerateProjectors { count: fit.degenerate });
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::jacobian_relative_error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn perfect_model_has_zero_objective() {
        let bx = random(4, 30, 1).abs();
        let w = random(2, 4, 2);
        let u = &w * &bx;
        assert!(objective_ncl(&w, &bx, &u).unwrap().value < 1e-25);
    }

    #[test]
    fn orthogonal_task_part_is_ignored() {
        let bx = random(4, 30, 3).abs();
        let weights = random(2, 4, 4);
        let w = &weights * &bx;
        let scale = random(1, 30, 5);
        let mut u = w.clone();
        for i in 0..30 {
            let perp = DVector::from_vec(vec![-w[(1, i)], w[(0, i)]]) * scale[(0, i)];
            u.set_column(i, &(w.column(i) + perp));
        }
        assert!(objective_ncl(&weights, &bx, &u).unwrap().value < 1e-25);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let x = random(2, 40, 6);
        let u = random(3, 40, 7);
        let basis = RbfBasis::from_data(&x, 5, 0).unwrap();
        let bx = basis.feature_matrix(&x);
        let problem = NclProblem { bx: &bx, u: &u };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let p = DVector::from_fn(15, |_, _| rng.random_range(-1.0..1.0));
            assert!(jacobian_relative_error(&problem, &p).unwrap() < 1e-5);
        }
    }

    #[test]
    fn projector_is_scale_invariant() {
        let w = DVector::from_vec(vec![0.3, -1.2]);
        let p: DMatrix<f64> = &w * w.transpose() / w.norm_squared();
        let cw = &w * 7.5;
        let pc: DMatrix<f64> = &cw * cw.transpose() / cw.norm_squared();
        assert!((p - pc).amax() < 1e-12);
    }

    #[test]
    fn predict_matches_loop() {
        let x = random(2, 20, 9);
        let basis = RbfBasis::new(random(2, 3, 10), 0.4).unwrap();
        let w = random(2, 3, 11);
        let model = NullspaceComponentModel::new(RbfModel::new(basis.clone(), w.clone()).unwrap());
        let pred = predict_ncl(&model, &x);
        for i in 0..20 {
            for d in 0..2 {
                let mut acc = 0.0;
                for g in 0..3 {
                    let diff = x.column(i) - basis.centers.column(g);
                    acc += w[(d, g)] * (-diff.norm_squared() / (2.0 * 0.4)).exp();
                }
                assert!((pred[(d, i)] - acc).abs() < 1e-14);
            }
        }
        let zero = NullspaceComponentModel::new(RbfModel::zeros(basis.clone(), 2));
        assert_eq!(predict_ncl(&zero, &x), DMatrix::zeros(2, 20));
        let single = RbfBasis::new(DMatrix::from_column_slice(2, 1, &[0.1, 0.2]), 1.0).unwrap();
        let model = NullspaceComponentModel::new(RbfModel::new(single, DMatrix::from_column_slice(2, 1, &[3.0, -4.0])).unwrap());
        let at = predict_ncl(&model, &DMatrix::from_column_slice(2, 1, &[0.1, 0.2]));
        assert_eq!(at, DMatrix::from_column_slice(2, 1, &[3.0, -4.0]));
    }

    #[test]
    fn too_many_bases_are_rejected() {
        let x = random(2, 5, 12);
        let basis = RbfBasis::new(random(2, 6, 13), 1.0).unwrap();
        let model = NullspaceComponentModel::new(RbfModel::zeros(basis, 2));
        let err = learn_ncl(&x, &random(2, 5, 14), &model, &LearnOptions::default()).unwrap_err();
        assert!(matches!(err, CclError::InvalidInput(_)));
    }

    #[test]
    fn near_zero_predictions_get_zero_projector() {
        let bx = DMatrix::from_element(1, 3, 1.0);
        let w = DMatrix::zeros(2, 1);
        let u = random(2, 3, 15);
        let o = objective_ncl(&w, &bx, &u).unwrap();
        assert_eq!(o.degenerate, 3);
        assert_eq!(o.value, 0.0);
    }
}
