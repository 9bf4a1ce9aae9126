//! Levenberg-Marquardt for nonlinear least squares `min_p |r(p)|^2`.
//!
//! Each iteration solves `(J^T J + lambda * diag(J^T J)) delta = -J^T r`.
//! Accepted steps shrink `lambda` by 10, rejected ones grow it by 10. Without
//! an analytic Jacobian the solver differentiates the residuals centrally.

use nalgebra::{DMatrix, DVector};

use crate::error::{CclError, Result};
use crate::types::{LearnOptions, LearnReport, Termination};

pub const INITIAL_DAMPING: f64 = 1e-3;
pub const MAX_DAMPING: f64 = 1e12;

pub trait LeastSquaresProblem {
    fn num_params(&self) -> usize;

    fn residuals(&self, params: &DVector<f64>) -> DVector<f64>;

    /// Analytic Jacobian `d r / d p`, if available.
    fn jacobian(&self, _params: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// Problem assembled from closures.
pub struct LmProblem<R, J = fn(&DVector<f64>) -> DMatrix<f64>>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    pub num_params: usize,
    pub residual: R,
    pub jacobian: Option<J>,
}

impl<R> LmProblem<R>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
{
    pub fn new(num_params: usize, residual: R) -> Self {
        Self {
            num_params,
            residual,
            jacobian: None,
        }
    }
}

impl<R, J> LmProblem<R, J>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    pub fn with_jacobian(num_params: usize, residual: R, jacobian: J) -> Self {
        Self {
            num_params,
            residual,
            jacobian: Some(jacobian),
        }
    }
}

impl<R, J> LeastSquaresProblem for LmProblem<R, J>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    fn num_params(&self) -> usize {
        self.num_params
    }

    fn residuals(&self, params: &DVector<f64>) -> DVector<f64> {
        (self.residual)(params)
    }

    fn jacobian(&self, params: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(params))
    }
}

/// Central-difference Jacobian with step `1e-6 * (1 + |p_i|)`.
pub fn fd_jacobian<P: LeastSquaresProblem + ?Sized>(problem: &P, params: &DVector<f64>) -> DMatrix<f64> {
    let m = problem.residuals(params).len();
    let mut jac = DMatrix::zeros(m, params.len());
    let mut p = params.clone();
    for i in 0..params.len() {
        let h = 1e-6 * (1.0 + params[i].abs());
        p[i] = params[i] + h;
        let plus = problem.residuals(&p);
        p[i] = params[i] - h;
        let minus = problem.residuals(&p);
        p[i] = params[i];
        jac.set_column(i, &((plus - minus) / (2.0 * h)));
    }
    jac
}

/// Relative Frobenius distance between the analytic Jacobian and central
/// differences at `params`. `None` when the problem has no analytic Jacobian.
pub fn jacobian_relative_error<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    params: &DVector<f64>,
) -> Option<f64> {
    let analytic = problem.jacobian(params)?;
    let fd = fd_jacobian(problem, params);
    let scale = fd.norm().max(analytic.norm()).max(1e-300);
    Some((analytic - fd).norm() / scale)
}

#[derive(Debug, Clone)]
pub struct LmSolution {
    pub params: DVector<f64>,
    /// `final_objective` is `|r|^2`; `mse` and `variance` are the final and
    /// initial mean squared residuals, so `nmse` is the fraction of the
    /// starting objective left.
    pub report: LearnReport,
}

pub fn lm_solve<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    p0: &DVector<f64>,
    options: &LearnOptions,
) -> Result<LmSolution> {
    if p0.len() != problem.num_params() {
        return Err(CclError::Dimension(format!(
            "initial guess has {} parameters, problem expects {}",
            p0.len(),
            problem.num_params()
        )));
    }
    let mut params = p0.clone();
    let mut r = problem.residuals(&params);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(CclError::InvalidInput(
            "residual is not finite at the initial guess".into(),
        ));
    }
    let m = r.len().max(1) as f64;
    let mut objective = r.norm_squared();
    let initial = objective;
    let mut trace = vec![objective];
    let mut lambda = INITIAL_DAMPING;
    let mut iterations = 0;
    let mut termination = Termination::MaxIter;

    'outer: while iterations < options.max_iter {
        if objective == 0.0 {
            termination = Termination::FunTol;
            break;
        }
        iterations += 1;
        let jac = problem
            .jacobian(&params)
            .unwrap_or_else(|| fd_jacobian(problem, &params));
        let gradient = jac.transpose() * &r;
        let hessian = jac.transpose() * &jac;
        let diag_floor = 1e-12 * hessian.diagonal().max().max(1.0);

        loop {
            let mut damped = hessian.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * hessian[(i, i)].max(diag_floor);
            }
            let step = match damped.cholesky() {
                Some(chol) => -chol.solve(&gradient),
                None => {
                    lambda *= 10.0;
                    if lambda > MAX_DAMPING {
                        termination = Termination::DampingOverflow;
                        break 'outer;
                    }
                    continue;
                }
            };
            if step.norm() < options.tol_x {
                termination = Termination::XTol;
                break 'outer;
            }
            let candidate = &params + &step;
            let r_new = problem.residuals(&candidate);
            let new_objective = r_new.norm_squared();
            if new_objective.is_finite() && new_objective < objective {
                let drop = objective - new_objective;
                let previous = objective;
                params = candidate;
                r = r_new;
                objective = new_objective;
                trace.push(objective);
                lambda = (lambda * 0.1).max(1e-15);
                if drop <= options.tol_fun * previous || objective == 0.0 {
                    termination = Termination::FunTol;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > MAX_DAMPING {
                termination = Termination::DampingOverflow;
                break 'outer;
            }
        }
    }

    let mut report = LearnReport::new(objective / m, initial / m, objective, termination);
    report.iterations = iterations;
    report.objective_trace = trace;
    Ok(LmSolution { params, report })
}
