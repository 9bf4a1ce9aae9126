//! State-dependent constraints `A(x)`.
//!
//! Row `s` of the selection `Lambda(x)` is a unit vector whose angles are a
//! linear map of RBF features, `theta_s(x) = omega_s beta(x)`, expressed in
//! the orthogonal complement of rows `0..s` at the same state. In alpha mode
//! the rows are rows of `A` itself; in lambda mode they select directions of
//! a feature matrix, `A(x) = Lambda(x) Phi(x)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    append_row, build_rows, check_observations, lattice_search, ConstraintConfig, FeatureMatrix,
    FeatureSpec,
};
use crate::error::{CclError, Result};
use crate::math::{
    lm_solve, nullspace_projector, numerical_rank, orthogonal_complement_rotation, pinv_truncated,
    unit_vector_from_angles, unit_vector_jacobian, LeastSquaresProblem, RbfBasis,
};
use crate::types::{total_variance, LearnOptions, LearnReport, ReportFlag, Termination};

/// Evaluation budget (samples x lattice points) for the constant-angle seed search.
const SEED_SEARCH_BUDGET: usize = 4_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ConstraintMode {
    Alpha,
    Lambda { features: FeatureSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDependentConstraintModel {
    pub dim_u: usize,
    pub basis: RbfBasis,
    /// Row `s` maps `G` features to `frame_dim - 1 - s` angles.
    #[serde(with = "crate::io::matrix_list")]
    pub row_weights: Vec<DMatrix<f64>>,
    pub mode: ConstraintMode,
}

impl StateDependentConstraintModel {
    pub fn new(
        dim_u: usize,
        basis: RbfBasis,
        row_weights: Vec<DMatrix<f64>>,
        mode: ConstraintMode,
    ) -> Result<Self> {
        let model = Self {
            dim_u,
            basis,
            row_weights,
            mode,
        };
        let frame = model.frame_dim();
        if let ConstraintMode::Lambda { features } = &model.mode {
            if features.dim_u() != dim_u {
                return Err(CclError::Dimension(format!(
                    "feature matrix acts on R^{}, model on R^{dim_u}",
                    features.dim_u()
                )));
            }
        }
        if model.row_weights.is_empty() || model.row_weights.len() > frame.min(dim_u - 1) {
            return Err(CclError::InvalidInput(format!(
                "{} rows outside 1..={}",
                model.row_weights.len(),
                frame.min(dim_u - 1)
            )));
        }
        for (s, w) in model.row_weights.iter().enumerate() {
            if w.shape() != (frame - 1 - s, model.basis.len()) {
                return Err(CclError::Dimension(format!(
                    "row {s} weights are {}x{}, expected {}x{}",
                    w.nrows(),
                    w.ncols(),
                    frame - 1 - s,
                    model.basis.len()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(CclError::InvalidInput("row weights must be finite".into()));
            }
        }
        Ok(model)
    }

    pub fn dim_b(&self) -> usize {
        self.row_weights.len()
    }

    /// Dimension of the space the rows live in: `dim_u` in alpha mode,
    /// `dim_phi` in lambda mode.
    pub fn frame_dim(&self) -> usize {
        match &self.mode {
            ConstraintMode::Alpha => self.dim_u,
            ConstraintMode::Lambda { features } => features.dim_phi(),
        }
    }

    /// Orthonormal rows at `x`: `A(x)` in alpha mode, `Lambda(x)` in lambda mode.
    pub fn selection_rows(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let beta = self.basis.features(x);
        let angles: Vec<Vec<f64>> = self
            .row_weights
            .iter()
            .map(|w| (w * &beta).iter().copied().collect())
            .collect();
        build_rows(self.frame_dim(), angles.iter().map(Vec::as_slice))
    }

    pub fn constraint_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let rows = self.selection_rows(x);
        match &self.mode {
            ConstraintMode::Alpha => rows,
            ConstraintMode::Lambda { features } => rows * features.eval(x),
        }
    }

    pub fn projector(&self, x: &DVector<f64>, threshold: f64) -> DMatrix<f64> {
        nullspace_projector(&self.constraint_matrix(x), threshold).projector
    }

    /// Learned projector at every column of `x`.
    pub fn projectors(&self, x: &DMatrix<f64>, threshold: f64) -> Vec<DMatrix<f64>> {
        x.column_iter()
            .map(|c| self.projector(&c.into_owned(), threshold))
            .collect()
    }
}

/// Learns `A(x)` directly (no feature-matrix prior).
pub fn learn_alpha(
    w_obs: &DMatrix<f64>,
    x: &DMatrix<f64>,
    config: &ConstraintConfig,
    options: &LearnOptions,
) -> Result<(StateDependentConstraintModel, LearnReport)> {
    let identity = FeatureSpec::Identity { dim: w_obs.nrows() };
    let (basis, rows, report) = learn_rows(w_obs, x, &identity, config, options)?;
    let model = StateDependentConstraintModel::new(w_obs.nrows(), basis, rows, ConstraintMode::Alpha)?;
    Ok((model, report))
}

/// Learns a selection `Lambda(x)` over the rows of `features`, `A = Lambda Phi`.
pub fn learn_lambda(
    w_obs: &DMatrix<f64>,
    x: &DMatrix<f64>,
    features: &FeatureSpec,
    config: &ConstraintConfig,
    options: &LearnOptions,
) -> Result<(StateDependentConstraintModel, LearnReport)> {
    let (basis, rows, report) = learn_rows(w_obs, x, features, config, options)?;
    let model = StateDependentConstraintModel::new(
        w_obs.nrows(),
        basis,
        rows,
        ConstraintMode::Lambda {
            features: features.clone(),
        },
    )?;
    Ok((model, report))
}

/// `sum_n a_n^T R_n a_n` with `a_n` the unit vector of angles `omega beta_n`
/// and `R_n` the second moment of sample `n` rotated into the row frame.
pub fn objective_avn(omega: &DMatrix<f64>, bx: &DMatrix<f64>, rotated_moments: &[DMatrix<f64>]) -> Result<f64> {
    if omega.ncols() != bx.nrows() || bx.ncols() != rotated_moments.len() {
        return Err(CclError::Dimension(format!(
            "omega {}x{}, features {}x{}, {} moments",
            omega.nrows(),
            omega.ncols(),
            bx.nrows(),
            bx.ncols(),
            rotated_moments.len()
        )));
    }
    let d = omega.nrows() + 1;
    let mut total = 0.0;
    for (n, r) in rotated_moments.iter().enumerate() {
        if r.shape() != (d, d) {
            return Err(CclError::Dimension(format!("moment {n} is not {d}x{d}")));
        }
        let theta = omega * bx.column(n);
        let a = unit_vector_from_angles(theta.as_slice());
        total += (a.transpose() * r * &a)[(0, 0)];
    }
    Ok(total)
}

/// `Q_n u_n u_n^T Q_n^T` for per-sample frames `Q_n`.
pub fn rotated_moments(w_obs: &DMatrix<f64>, frames: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    frames
        .iter()
        .zip(w_obs.column_iter())
        .map(|(q, u)| {
            let v = q * u;
            &v * v.transpose()
        })
        .collect()
}

/// Least-squares form of one row's objective. For sample `n` with
/// `M_n = (I - P_n) Phi_n^T Q_n^T` (`P_n` projecting onto the rows already
/// learned) the residual is `a^T g_n / sqrt(a^T H_n a)`, `g_n = M_n^T u_n`,
/// `H_n = M_n^T M_n`; its square is what adding the row contributes to
/// `|(A_n)⁺ A_n u_n|^2`.
struct RowProblem<'a> {
    g: Vec<DVector<f64>>,
    h: Vec<DMatrix<f64>>,
    bx: &'a DMatrix<f64>,
    angle_dim: usize,
}

impl RowProblem<'_> {
    fn omega(&self, params: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.angle_dim, self.bx.nrows(), params.as_slice())
    }

    fn sample_residual(&self, n: usize, a: &DVector<f64>) -> Option<(f64, f64)> {
        let sigma2 = (a.transpose() * &self.h[n] * a)[(0, 0)];
        let floor = 1e-12 * self.h[n].trace().max(f64::MIN_POSITIVE);
        (sigma2 > floor).then(|| (a.dot(&self.g[n]) / sigma2.sqrt(), sigma2))
    }

    fn constant_angle_objective(&self, theta: &[f64]) -> f64 {
        let a = unit_vector_from_angles(theta);
        (0..self.g.len())
            .filter_map(|n| self.sample_residual(n, &a))
            .map(|(r, _)| r * r)
            .sum()
    }
}

impl LeastSquaresProblem for RowProblem<'_> {
    fn num_params(&self) -> usize {
        self.angle_dim * self.bx.nrows()
    }

    fn residuals(&self, params: &DVector<f64>) -> DVector<f64> {
        let omega = self.omega(params);
        DVector::from_iterator(
            self.g.len(),
            (0..self.g.len()).map(|n| {
                let theta = &omega * self.bx.column(n);
                let a = unit_vector_from_angles(theta.as_slice());
                self.sample_residual(n, &a).map_or(0.0, |(r, _)| r)
            }),
        )
    }

    fn jacobian(&self, params: &DVector<f64>) -> Option<DMatrix<f64>> {
        let omega = self.omega(params);
        let g_count = self.bx.nrows();
        let mut jac = DMatrix::zeros(self.g.len(), self.num_params());
        for n in 0..self.g.len() {
            let theta = &omega * self.bx.column(n);
            let a = unit_vector_from_angles(theta.as_slice());
            let Some((r, sigma2)) = self.sample_residual(n, &a) else {
                continue;
            };
            let sigma = sigma2.sqrt();
            let d_a = &self.g[n] / sigma - (&self.h[n] * &a) * (r / sigma2);
            let d_theta = unit_vector_jacobian(theta.as_slice()).transpose() * d_a;
            for g in 0..g_count {
                let beta = self.bx[(g, n)];
                for i in 0..self.angle_dim {
                    jac[(n, i + self.angle_dim * g)] = d_theta[i] * beta;
                }
            }
        }
        Some(jac)
    }
}

fn learn_rows(
    w_obs: &DMatrix<f64>,
    x: &DMatrix<f64>,
    phi: &dyn FeatureMatrix,
    config: &ConstraintConfig,
    options: &LearnOptions,
) -> Result<(RbfBasis, Vec<DMatrix<f64>>, LearnReport)> {
    options.validate()?;
    check_observations(w_obs)?;
    let (dim_u, n) = w_obs.shape();
    if x.ncols() != n {
        return Err(CclError::Dimension(format!("{} states for {n} observations", x.ncols())));
    }
    if phi.dim_u() != dim_u {
        return Err(CclError::Dimension(format!(
            "feature matrix acts on R^{}, observations live in R^{dim_u}",
            phi.dim_u()
        )));
    }
    if config.num_basis == 0 || config.num_basis > n {
        return Err(CclError::InvalidInput(format!(
            "{} basis functions for {n} samples",
            config.num_basis
        )));
    }
    let dim_phi = phi.dim_phi();
    let phis: Vec<DMatrix<f64>> = x.column_iter().map(|c| phi.eval(&c.into_owned())).collect();
    for (i, p) in phis.iter().enumerate() {
        if p.shape() != (dim_phi, dim_u) || p.iter().any(|v| !v.is_finite()) {
            return Err(CclError::DegenerateSample {
                index: i,
                message: "feature matrix is malformed or not finite".into(),
            });
        }
        if numerical_rank(p, options.svd_threshold) == 0 {
            return Err(CclError::DegenerateSample {
                index: i,
                message: "feature matrix has rank 0".into(),
            });
        }
    }

    let basis = RbfBasis::from_data(x, config.num_basis, options.rng_seed)?;
    let bx = basis.feature_matrix(x);
    let total = w_obs.norm_squared();
    let max_rows = config.max_rows.unwrap_or(usize::MAX).min(dim_phi).min(dim_u - 1);
    let identity = DMatrix::<f64>::identity(dim_u, dim_u);

    let mut selections: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, dim_phi); n];
    let mut weights: Vec<DMatrix<f64>> = Vec::new();
    let mut objective = 0.0;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = true;
    let mut first_candidate = None;

    for s in 0..max_rows {
        let frame_dim = dim_phi - s;
        let angle_dim = frame_dim - 1;
        let mut frames = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        let mut h = Vec::with_capacity(n);
        for i in 0..n {
            let q = orthogonal_complement_rotation(&selections[i])?;
            let a_prev = &selections[i] * &phis[i];
            let outside = if s == 0 {
                identity.clone()
            } else {
                &identity - pinv_truncated(&a_prev, options.svd_threshold) * &a_prev
            };
            let m = outside * phis[i].transpose() * q.transpose();
            g.push(m.transpose() * w_obs.column(i));
            h.push(m.transpose() * &m);
            frames.push(q);
        }
        let problem = RowProblem {
            g,
            h,
            bx: &bx,
            angle_dim,
        };

        let (omega, row_objective, row_converged, its) = if angle_dim == 0 {
            let omega = DMatrix::zeros(0, bx.nrows());
            let value = problem.constant_angle_objective(&[]);
            (omega, value, true, 0)
        } else {
            fit_row(&problem, &bx, s, options)?
        };
        iterations += its;
        if first_candidate.is_none() {
            first_candidate = Some((omega.clone(), row_objective));
        }
        trace.push((objective + row_objective) / total);
        if row_objective / total > config.row_threshold {
            break;
        }
        converged &= row_converged;
        objective += row_objective;
        for i in 0..n {
            let theta = &omega * bx.column(i);
            let local = unit_vector_from_angles(theta.as_slice());
            selections[i] = append_row(&selections[i], frames[i].transpose() * local);
        }
        weights.push(omega);
    }

    let mut flags = Vec::new();
    if weights.is_empty() {
        let (omega, row_objective) = first_candidate.expect("at least one row was tried");
        weights.push(omega);
        objective = row_objective;
        flags.push(ReportFlag::NoConstraintFound);
    }

    let termination = if converged { Termination::XTol } else { Termination::MaxIter };
    let mut report = LearnReport::new(objective / n as f64, total_variance(w_obs), objective, termination);
    report.iterations = iterations;
    report.objective_trace = trace;
    report.flags = flags;
    Ok((basis, weights, report))
}

/// Multi-start LM over one row's weights. Start 0 is the best constant angle
/// on a lattice; the others are random constant angles. Lowest objective
/// wins, ties to the earlier start.
fn fit_row(
    problem: &RowProblem<'_>,
    bx: &DMatrix<f64>,
    row: usize,
    options: &LearnOptions,
) -> Result<(DMatrix<f64>, f64, bool, usize)> {
    let angle_dim = problem.angle_dim;
    let g_count = bx.nrows();
    let n = bx.ncols();

    // c with beta(x)^T c ~ 1, so theta c^T reproduces a constant angle theta.
    let bbt = bx * bx.transpose();
    let ridge = 1e-8 * bbt.trace() / g_count as f64 + options.regularization;
    let mut lhs = bbt.clone();
    for i in 0..g_count {
        lhs[(i, i)] += ridge;
    }
    let rhs = bx * DVector::from_element(n, 1.0);
    let c = lhs
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .unwrap_or_else(|| pinv_truncated(&lhs, options.svd_threshold) * &rhs);

    let budget = (SEED_SEARCH_BUDGET / n.max(1)).max(1 << angle_dim);
    let (lattice_seed, _) = lattice_search(angle_dim, options.search_resolution, budget, |t| {
        problem.constant_angle_objective(t)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(options.rng_seed.wrapping_add(0x9E37_79B9 * (row as u64 + 1)));

    let mut best: Option<(DMatrix<f64>, f64)> = None;
    let mut any_converged = false;
    let mut iterations = 0;
    for restart in 0..options.num_restarts {
        let theta: Vec<f64> = if restart == 0 {
            lattice_seed.clone()
        } else {
            (0..angle_dim).map(|_| rng.random_range(0.0..std::f64::consts::PI)).collect()
        };
        let omega0 = DVector::from_vec(theta) * c.transpose();
        let p0 = DVector::from_column_slice(omega0.as_slice());
        let sol = lm_solve(problem, &p0, options)?;
        iterations += sol.report.iterations;
        any_converged |= sol.report.converged;
        let value = sol.report.final_objective;
        if best.as_ref().is_none_or(|(_, b)| value < *b) {
            best = Some((problem.omega(&sol.params), value));
        }
    }
    let (omega, value) = best.expect("num_restarts >= 1");
    Ok((omega, value, any_converged, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::learn_nhat;
    use crate::math::jacobian_relative_error;
    use rand::Rng;

    fn parabolic_data(n: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(2, n, |_, _| rng.random_range(-1.0..1.0));
        let mut u = DMatrix::zeros(2, n);
        for i in 0..n {
            let a = DMatrix::from_row_slice(1, 2, &[-0.2 * x[(0, i)], 1.0]);
            let proj = nullspace_projector(&a, 1e-12).projector;
            let pi = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            u.set_column(i, &(proj * pi));
        }
        (x, u)
    }

    fn fast_options() -> LearnOptions {
        LearnOptions {
            num_restarts: 2,
            ..LearnOptions::default()
        }
    }

    #[test]
    fn zero_weights_give_first_axis_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = DMatrix::from_fn(2, 20, |_, _| rng.random_range(-1.0..1.0));
        let frames = vec![DMatrix::identity(2, 2); 20];
        let bx = DMatrix::from_fn(3, 20, |_, _| rng.random_range(0.0..1.0));
        let omega = DMatrix::zeros(1, 3);
        let v = objective_avn(&omega, &bx, &rotated_moments(&u, &frames)).unwrap();
        let oracle: f64 = u.row(0).iter().map(|v| v * v).sum();
        assert!((v - oracle).abs() < 1e-12);

        // Data along (0, 1): the theta = 0 row (1, 0) sees nothing.
        let mut along = DMatrix::zeros(2, 20);
        along.row_mut(1).copy_from(&u.row(1));
        let v = objective_avn(&omega, &bx, &rotated_moments(&along, &frames)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn row_jacobian_matches_finite_differences() {
        let (x, u) = parabolic_data(60, 2);
        let basis = RbfBasis::from_data(&x, 5, 0).unwrap();
        let bx = basis.feature_matrix(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // A non-trivial H: rows of a random 2x2 feature matrix, one previous row.
        let g: Vec<DVector<f64>> = u.column_iter().map(|c| c.into_owned()).collect();
        let h: Vec<DMatrix<f64>> = (0..60)
            .map(|_| {
                let m = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
                m.transpose() * m + DMatrix::identity(2, 2) * 0.1
            })
            .collect();
        let problem = RowProblem { g, h, bx: &bx, angle_dim: 1 };
        for _ in 0..10 {
            let p = DVector::from_fn(5, |_, _| rng.random_range(-2.0..2.0));
            let err = jacobian_relative_error(&problem, &p).unwrap();
            assert!(err < 1e-5, "{err}");
        }
    }

    #[test]
    fn ground_truth_weights_give_tiny_objective() {
        // Constant constraint angle representable exactly: omega beta == theta.
        let t: f64 = 1.2;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 50;
        let x = DMatrix::from_fn(1, n, |_, _| rng.random_range(-1.0..1.0));
        let a = DMatrix::from_row_slice(1, 2, &[t.cos(), t.sin()]);
        let proj = nullspace_projector(&a, 1e-12).projector;
        let u = &proj * DMatrix::from_fn(2, n, |_, _| rng.random_range(-1.0..1.0));
        // A single very wide basis is ~1 everywhere; scale omega accordingly.
        let basis = RbfBasis::new(DMatrix::zeros(1, 1), 1e12).unwrap();
        let bx = basis.feature_matrix(&x);
        let omega = DMatrix::from_row_slice(1, 1, &[t]).component_div(&DMatrix::from_element(1, 1, bx[(0, 0)]));
        let frames = vec![DMatrix::identity(2, 2); n];
        let moments = rotated_moments(&u, &frames);
        assert!(objective_avn(&omega, &bx, &moments).unwrap() < 1e-10);
    }

    #[test]
    fn learns_parabolic_constraint() {
        let (x, u) = parabolic_data(400, 4);
        let (model, report) = learn_alpha(&u, &x, &ConstraintConfig::default(), &fast_options()).unwrap();
        assert_eq!(model.dim_b(), 1);
        let (xt, ut) = parabolic_data(200, 5);
        let mut err = 0.0;
        for i in 0..200 {
            let xi = xt.column(i).into_owned();
            let n_hat = model.projector(&xi, 1e-8);
            err += (&n_hat * ut.column(i) - ut.column(i)).norm_squared();
        }
        let npoe = err / 200.0 / total_variance(&ut);
        assert!(npoe < 0.01, "npoe {npoe}, report {report:?}");
    }

    #[test]
    fn constant_constraint_matches_nhat() {
        let t = 40f64.to_radians();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = DMatrix::from_fn(2, 300, |_, _| rng.random_range(-1.0..1.0));
        let a = DMatrix::from_row_slice(1, 2, &[t.cos(), t.sin()]);
        let proj = nullspace_projector(&a, 1e-12).projector;
        let u = &proj * DMatrix::from_fn(2, 300, |_, _| rng.random_range(-1.0..1.0));
        let (alpha, _) = learn_alpha(&u, &x, &ConstraintConfig::default(), &fast_options()).unwrap();
        let (nhat, _) = learn_nhat(&u, &ConstraintConfig::default(), &LearnOptions::default()).unwrap();
        let n_nhat = nhat.projector(1e-8);
        for i in 0..300 {
            let n_alpha = alpha.projector(&x.column(i).into_owned(), 1e-8);
            assert!((n_alpha - &n_nhat).norm() < 1e-2);
        }
    }

    #[test]
    fn identity_features_reduce_to_alpha() {
        let (x, u) = parabolic_data(200, 7);
        let cfg = ConstraintConfig::default();
        let (alpha, _) = learn_alpha(&u, &x, &cfg, &fast_options()).unwrap();
        let (lambda, _) = learn_lambda(&u, &x, &FeatureSpec::Identity { dim: 2 }, &cfg, &fast_options()).unwrap();
        for i in 0..200 {
            let xi = x.column(i).into_owned();
            assert!((alpha.projector(&xi, 1e-8) - lambda.projector(&xi, 1e-8)).norm() < 1e-6);
        }
    }

    #[test]
    fn rows_orthonormal_at_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 200;
        let x = DMatrix::from_fn(2, n, |_, _| rng.random_range(-1.0..1.0));
        let u = DMatrix::from_fn(4, n, |_, _| rng.random_range(-1.0..1.0));
        let cfg = ConstraintConfig {
            num_basis: 6,
            row_threshold: 1.0,
            max_rows: Some(3),
        };
        let opts = LearnOptions {
            num_restarts: 1,
            max_iter: 20,
            search_resolution: 10,
            ..LearnOptions::default()
        };
        let (model, _) = learn_alpha(&u, &x, &cfg, &opts).unwrap();
        assert_eq!(model.dim_b(), 3);
        for _ in 0..100 {
            let xi = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let a = model.constraint_matrix(&xi);
            assert!((&a * a.transpose() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-8);
        }
    }

    struct Rotating;
    impl FeatureMatrix for Rotating {
        fn dim_phi(&self) -> usize {
            2
        }
        fn dim_u(&self) -> usize {
            3
        }
        fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(2, 3, &[x[0].cos(), x[0].sin(), 0.0, 0.0, 0.0, 2.0])
        }
    }

    #[test]
    fn full_selection_recovers_feature_null_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 150;
        let x: DMatrix<f64> = DMatrix::from_fn(1, n, |_, _| rng.random_range(-1.0..1.0));
        let mut u = DMatrix::zeros(3, n);
        for i in 0..n {
            let t = x[(0, i)];
            let s = rng.random_range(-1.0..1.0);
            u.set_column(i, &(DVector::from_vec(vec![-t.sin(), t.cos(), 0.0]) * s));
        }
        let cfg = ConstraintConfig {
            num_basis: 6,
            ..ConstraintConfig::default()
        };
        let (_, weights, report) = learn_rows(&u, &x, &Rotating, &cfg, &fast_options()).unwrap();
        assert_eq!(weights.len(), 2, "{report:?}");
        assert_eq!(weights[1].nrows(), 0);
        // Lambda is square orthogonal, so A^+ A = Phi^+ Phi.
        let basis = RbfBasis::from_data(&x, 6, 0).unwrap();
        for i in 0..n {
            let xi = x.column(i).into_owned();
            let beta = basis.features(&xi);
            let angles: Vec<Vec<f64>> = weights.iter().map(|w| (w * &beta).iter().copied().collect()).collect();
            let lam = build_rows(2, angles.iter().map(Vec::as_slice));
            let phi = Rotating.eval(&xi);
            let a = &lam * &phi;
            let n_hat = nullspace_projector(&a, 1e-8).projector;
            let n_phi = nullspace_projector(&phi, 1e-8).projector;
            assert!((n_hat - n_phi).norm() < 1e-8);
        }
    }

    #[test]
    fn identical_states_are_rejected() {
        let u = DMatrix::from_fn(2, 40, |r, c| if r == 0 { 0.0 } else { c as f64 + 1.0 });
        let x = DMatrix::from_element(2, 40, 0.3);
        let err = learn_alpha(&u, &x, &ConstraintConfig::default(), &fast_options()).unwrap_err();
        assert!(err.to_string().contains("degenerate"));
    }

    #[test]
    fn rank_zero_features_name_the_sample() {
        struct Vanishing;
        impl FeatureMatrix for Vanishing {
            fn dim_phi(&self) -> usize {
                1
            }
            fn dim_u(&self) -> usize {
                2
            }
            fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::from_row_slice(1, 2, &[x[0], 1.0]) * (x[0] != 0.5) as u8 as f64
            }
        }
        let mut x = DMatrix::from_fn(1, 30, |_, c| c as f64 / 30.0);
        x[(0, 7)] = 0.5;
        let u = DMatrix::from_fn(2, 30, |r, c| (r + c) as f64);
        let err = learn_rows(&u, &x, &Vanishing, &ConstraintConfig::default(), &fast_options()).unwrap_err();
        assert!(matches!(err, CclError::DegenerateSample { index: 7, .. }), "{err}");
    }
}
