//! Null-space policy learning from constrained observations.
//!
//! Each observation `u_n` only reveals the policy along its own direction,
//! `P_n = u_n u_n^T / |u_n|^2`. The inconsistency error
//! `sum_n |u_n - P_n pi(x_n)|^2` is quadratic in linear-in-parameter models
//! and is minimised in closed form.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{CclError, Result};
use crate::math::RbfBasis;
use crate::types::{total_variance, LearnOptions, LearnReport, ReportFlag, Termination};

/// Observations with a smaller norm carry no direction and are dropped.
const MIN_ACTION_NORM: f64 = 1e-12;
/// Receptive fields must reach at least this total activation.
const MIN_ACTIVATION: f64 = 1e-12;
/// Normal matrices conditioned worse than this are reported as degenerate.
const DEGENERACY_RATIO: f64 = 1e-10;

/// Feature map of a parametric policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PolicyBasis {
    Rbf { basis: RbfBasis },
    /// `(x; 1)`.
    Linear { dim_x: usize },
}

impl PolicyBasis {
    pub fn len(&self) -> usize {
        match self {
            PolicyBasis::Rbf { basis } => basis.len(),
            PolicyBasis::Linear { dim_x } => dim_x + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim_x(&self) -> usize {
        match self {
            PolicyBasis::Rbf { basis } => basis.dim_x(),
            PolicyBasis::Linear { dim_x } => *dim_x,
        }
    }

    pub fn features(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            PolicyBasis::Rbf { basis } => basis.features(x),
            PolicyBasis::Linear { .. } => augment(x),
        }
    }

    pub fn feature_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            PolicyBasis::Rbf { basis } => basis.feature_matrix(x),
            PolicyBasis::Linear { .. } => x.clone().insert_row(x.nrows(), 1.0),
        }
    }
}

fn augment(x: &DVector<f64>) -> DVector<f64> {
    x.clone().insert_row(x.len(), 1.0)
}

/// `pi(x) = W phi(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricPolicyModel {
    pub basis: PolicyBasis,
    /// `dim_u x F`.
    #[serde(with = "crate::io::matrix_rows")]
    pub weights: DMatrix<f64>,
}

impl ParametricPolicyModel {
    pub fn new(basis: PolicyBasis, weights: DMatrix<f64>) -> Result<Self> {
        if weights.ncols() != basis.len() || weights.nrows() == 0 {
            return Err(CclError::Dimension(format!(
                "weights are {}x{} for {} features",
                weights.nrows(),
                weights.ncols(),
                basis.len()
            )));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(CclError::InvalidInput("weights must be finite".into()));
        }
        Ok(Self { basis, weights })
    }

    pub fn zeros(basis: PolicyBasis, dim_u: usize) -> Self {
        let f = basis.len();
        Self {
            basis,
            weights: DMatrix::zeros(dim_u, f),
        }
    }

    /// Untrained model on `g` K-means RBF centers.
    pub fn rbf_from_data(x: &DMatrix<f64>, dim_u: usize, g: usize, seed: u64) -> Result<Self> {
        let basis = RbfBasis::from_data(x, g, seed)?;
        Ok(Self::zeros(PolicyBasis::Rbf { basis }, dim_u))
    }

    pub fn dim_u(&self) -> usize {
        self.weights.nrows()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.weights * self.basis.feature_matrix(x)
    }
}

/// Receptive-field weighted blend of local linear maps,
/// `pi(x) = sum_m rho_m(x) B_m (x; 1) / sum_m rho_m(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LwlPolicyModel {
    pub basis: RbfBasis,
    /// One `dim_u x (dim_x + 1)` map per receptive field.
    #[serde(with = "crate::io::matrix_list")]
    pub local: Vec<DMatrix<f64>>,
}

impl LwlPolicyModel {
    pub fn new(basis: RbfBasis, local: Vec<DMatrix<f64>>) -> Result<Self> {
        if local.len() != basis.len() {
            return Err(CclError::Dimension(format!(
                "{} local models for {} receptive fields",
                local.len(),
                basis.len()
            )));
        }
        let dim_u = local.first().map_or(0, |b| b.nrows());
        for b in &local {
            if b.shape() != (dim_u, basis.dim_x() + 1) || dim_u == 0 {
                return Err(CclError::Dimension("local models must share a dim_u x (dim_x + 1) shape".into()));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(CclError::InvalidInput("local models must be finite".into()));
            }
        }
        Ok(Self { basis, local })
    }

    pub fn zeros(basis: RbfBasis, dim_u: usize) -> Self {
        let local = vec![DMatrix::zeros(dim_u, basis.dim_x() + 1); basis.len()];
        Self { basis, local }
    }

    pub fn rbf_from_data(x: &DMatrix<f64>, dim_u: usize, g: usize, seed: u64) -> Result<Self> {
        Ok(Self::zeros(RbfBasis::from_data(x, g, seed)?, dim_u))
    }

    pub fn dim_u(&self) -> usize {
        self.local[0].nrows()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let rho = self.basis.feature_matrix(x);
        let mut out = DMatrix::zeros(self.dim_u(), x.ncols());
        for n in 0..x.ncols() {
            let total: f64 = rho.column(n).sum();
            if !(total >= MIN_ACTIVATION) {
                return Err(CclError::DegenerateSample {
                    index: n,
                    message: format!("total receptive-field activation {total:e} is too small"),
                });
            }
            let xt = augment(&x.column(n).into_owned());
            let mut acc = DVector::zeros(self.dim_u());
            for (m, b) in self.local.iter().enumerate() {
                acc += b * &xt * rho[(m, n)];
            }
            out.set_column(n, &(acc / total));
        }
        Ok(out)
    }
}

/// Anything that maps states to policy outputs.
pub trait PolicyPredictor {
    fn predict_policy(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

impl PolicyPredictor for ParametricPolicyModel {
    fn predict_policy(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.predict(x))
    }
}

impl PolicyPredictor for LwlPolicyModel {
    fn predict_policy(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.predict(x)
    }
}

pub fn predict_policy<M: PolicyPredictor + ?Sized>(model: &M, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.predict_policy(x)
}

/// `u_n u_n^T / |u_n|^2`, or `None` for a zero observation.
pub fn observation_projector(u: &DVector<f64>) -> Option<DMatrix<f64>> {
    let norm2 = u.norm_squared();
    (norm2.sqrt() >= MIN_ACTION_NORM).then(|| u * u.transpose() / norm2)
}

/// Normal equations of `sum_n c_n |u_n - P_n W f_n|^2` in `vec(W)`.
struct NormalEquations {
    lhs: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl NormalEquations {
    fn new(dim: usize) -> Self {
        Self {
            lhs: DMatrix::zeros(dim, dim),
            rhs: DVector::zeros(dim),
        }
    }

    /// `(f f^T kron P) vec(W) = vec(u f^T)` since `P u = u`.
    fn add(&mut self, f: &DVector<f64>, u: &DVector<f64>, p: &DMatrix<f64>, c: f64) {
        self.lhs += (f * f.transpose()).kronecker(p) * c;
        let uf = u * f.transpose() * c;
        self.rhs += DVector::from_column_slice(uf.as_slice());
    }

    fn is_degenerate(&self) -> bool {
        let eig = SymmetricEigen::new(self.lhs.clone()).eigenvalues;
        let max = eig.max();
        max <= 0.0 || eig.min() <= DEGENERACY_RATIO * max
    }

    /// Minimum-norm solution of the ridge system. Eigen-directions below
    /// `threshold` times the largest eigenvalue are dropped, so exactly
    /// unidentifiable combinations of weights stay at zero.
    fn solve(&self, regularization: f64, threshold: f64) -> DVector<f64> {
        let dim = self.rhs.len();
        let mut m = self.lhs.clone();
        for i in 0..dim {
            m[(i, i)] += regularization;
        }
        let eig = SymmetricEigen::new(m);
        let max = eig.eigenvalues.amax();
        let mut sol = DVector::zeros(dim);
        if !(max > 0.0) {
            return sol;
        }
        let cutoff = threshold.max(dim as f64 * f64::EPSILON) * max;
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l > cutoff {
                let v = eig.eigenvectors.column(i);
                sol += v * (v.dot(&self.rhs) / l);
            }
        }
        sol
    }
}

struct Retained {
    indices: Vec<usize>,
    projectors: Vec<DMatrix<f64>>,
}

fn retain_samples(x: &DMatrix<f64>, u: &DMatrix<f64>, dim_x: usize, dim_u: usize) -> Result<Retained> {
    if x.ncols() != u.ncols() {
        return Err(CclError::Dimension(format!("{} states for {} observations", x.ncols(), u.ncols())));
    }
    if x.nrows() != dim_x || u.nrows() != dim_u {
        return Err(CclError::Dimension(format!(
            "model maps R^{dim_x} to R^{dim_u}, data is R^{} to R^{}",
            x.nrows(),
            u.nrows()
        )));
    }
    if x.iter().chain(u.iter()).any(|v| !v.is_finite()) {
        return Err(CclError::InvalidInput("data must be finite".into()));
    }
    let mut indices = Vec::new();
    let mut projectors = Vec::new();
    for (n, col) in u.column_iter().enumerate() {
        if let Some(p) = observation_projector(&col.into_owned()) {
            indices.push(n);
            projectors.push(p);
        }
    }
    if indices.is_empty() {
        return Err(CclError::InvalidInput("every observation is zero".into()));
    }
    Ok(Retained { indices, projectors })
}

fn policy_report(
    u: &DMatrix<f64>,
    pred: &DMatrix<f64>,
    kept: &Retained,
    dropped: usize,
    degenerate: bool,
) -> LearnReport {
    let mut sum = 0.0;
    for (k, &n) in kept.indices.iter().enumerate() {
        sum += (u.column(n) - &kept.projectors[k] * pred.column(n)).norm_squared();
    }
    let used = u.select_columns(kept.indices.iter());
    let mut report = LearnReport::new(sum / kept.indices.len() as f64, total_variance(&used), sum, Termination::Exact);
    report.iterations = 1;
    if dropped > 0 {
        report.flags.push(ReportFlag::DroppedSamples { count: dropped });
    }
    if degenerate {
        report.flags.push(ReportFlag::SingleConstraintDegeneracy);
    }
    report
}

/// Closed-form minimiser of the inconsistency error over `model0`'s basis.
pub fn learn_pi(
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    model0: &ParametricPolicyModel,
    options: &LearnOptions,
) -> Result<(ParametricPolicyModel, LearnReport)> {
    options.validate()?;
    let dim_u = model0.dim_u();
    let kept = retain_samples(x, u, model0.basis.dim_x(), dim_u)?;
    let f = model0.basis.feature_matrix(x);
    let mut normal = NormalEquations::new(dim_u * f.nrows());
    for (k, &n) in kept.indices.iter().enumerate() {
        normal.add(&f.column(n).into_owned(), &u.column(n).into_owned(), &kept.projectors[k], 1.0);
    }
    let vec_w = normal.solve(options.regularization, options.svd_threshold);
    let weights = DMatrix::from_column_slice(dim_u, f.nrows(), vec_w.as_slice());
    let model = ParametricPolicyModel::new(model0.basis.clone(), weights)?;
    let report = policy_report(
        u,
        &model.predict(x),
        &kept,
        u.ncols() - kept.indices.len(),
        normal.is_degenerate(),
    );
    Ok((model, report))
}

/// Locally weighted variant: one closed-form linear map per receptive field.
pub fn learn_pi_lwl(
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    model0: &LwlPolicyModel,
    options: &LearnOptions,
) -> Result<(LwlPolicyModel, LearnReport)> {
    options.validate()?;
    let dim_u = model0.dim_u();
    let dim_x = model0.basis.dim_x();
    let kept = retain_samples(x, u, dim_x, dim_u)?;
    let rho = model0.basis.feature_matrix(x);
    let mut local = Vec::with_capacity(model0.basis.len());
    let mut degenerate = false;
    for m in 0..model0.basis.len() {
        let mut normal = NormalEquations::new(dim_u * (dim_x + 1));
        for (k, &n) in kept.indices.iter().enumerate() {
            let xt = augment(&x.column(n).into_owned());
            normal.add(&xt, &u.column(n).into_owned(), &kept.projectors[k], rho[(m, n)]);
        }
        degenerate |= normal.is_degenerate();
        let vec_b = normal.solve(options.regularization, options.svd_threshold);
        local.push(DMatrix::from_column_slice(dim_u, dim_x + 1, vec_b.as_slice()));
    }
    let model = LwlPolicyModel::new(model0.basis.clone(), local)?;
    let pred = model.predict(x)?;
    let report = policy_report(u, &pred, &kept, u.ncols() - kept.indices.len(), degenerate);
    Ok((model, report))
}

/// Plain ridge regression of `U` on the model's features, ignoring the
/// constraints. The baseline that suffers from averaging across them.
pub fn learn_ridge(
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    model0: &ParametricPolicyModel,
    options: &LearnOptions,
) -> Result<ParametricPolicyModel> {
    options.validate()?;
    let f = model0.basis.feature_matrix(x);
    if f.ncols() != u.ncols() || u.nrows() != model0.dim_u() {
        return Err(CclError::Dimension("features and observations disagree".into()));
    }
    let mut lhs = &f * f.transpose();
    for i in 0..f.nrows() {
        lhs[(i, i)] += options.regularization;
    }
    let rhs = &f * u.transpose();
    let w = match lhs.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => crate::math::pinv_truncated(&lhs, 1e-12) * rhs,
    };
    ParametricPolicyModel::new(model0.basis.clone(), w.transpose())
}
