//! Shared domain types: demonstration data, learner options and reports.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CclError, Result};

/// State/action samples, optionally with the ground-truth decomposition
/// `u = v + w`, `w = N pi` that produced them.
///
/// Every matrix stores one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DemonstrationSet {
    states: DMatrix<f64>,
    actions: DMatrix<f64>,
    group_ids: Vec<usize>,
    num_groups: usize,
    policy: Option<DMatrix<f64>>,
    task: Option<DMatrix<f64>>,
    null: Option<DMatrix<f64>>,
}

/// Optional ground-truth channels of a [`DemonstrationSet`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub policy: Option<DMatrix<f64>>,
    pub task: Option<DMatrix<f64>>,
    pub null: Option<DMatrix<f64>>,
}

fn check_finite(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if let Some((idx, _)) = m.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        let sample = idx / m.nrows().max(1);
        return Err(CclError::DegenerateSample {
            index: sample,
            message: format!("non-finite value in {name}"),
        });
    }
    Ok(())
}

impl DemonstrationSet {
    /// Builds a validated set. Group labels may be arbitrary integers; they are
    /// relabelled densely to `0..K` in ascending order of the original label.
    pub fn new(
        states: DMatrix<f64>,
        actions: DMatrix<f64>,
        group_labels: &[i64],
        truth: GroundTruth,
    ) -> Result<Self> {
        let n = states.ncols();
        if n == 0 {
            return Err(CclError::InvalidInput("dataset has no samples".into()));
        }
        if states.nrows() == 0 || actions.nrows() == 0 {
            return Err(CclError::Dimension(
                "state and action dimensions must be at least 1".into(),
            ));
        }
        if actions.ncols() != n {
            return Err(CclError::Dimension(format!(
                "{} states but {} actions",
                n,
                actions.ncols()
            )));
        }
        if group_labels.len() != n {
            return Err(CclError::Dimension(format!(
                "{} samples but {} group labels",
                n,
                group_labels.len()
            )));
        }
        check_finite("states", &states)?;
        check_finite("actions", &actions)?;
        let dim_u = actions.nrows();
        for (name, channel) in [
            ("policy", &truth.policy),
            ("task component", &truth.task),
            ("null-space component", &truth.null),
        ] {
            if let Some(m) = channel {
                if m.nrows() != dim_u || m.ncols() != n {
                    return Err(CclError::Dimension(format!(
                        "{name} channel is {}x{}, expected {dim_u}x{n}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                check_finite(name, m)?;
            }
        }

        let (group_ids, num_groups) = dense_labels(group_labels);
        Ok(Self {
            states,
            actions,
            group_ids,
            num_groups,
            policy: truth.policy,
            task: truth.task,
            null: truth.null,
        })
    }

    /// Single-group set without ground truth.
    pub fn from_observations(states: DMatrix<f64>, actions: DMatrix<f64>) -> Result<Self> {
        let n = states.ncols();
        Self::new(states, actions, &vec![0; n], GroundTruth::default())
    }

    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim_x(&self) -> usize {
        self.states.nrows()
    }

    pub fn dim_u(&self) -> usize {
        self.actions.nrows()
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn actions(&self) -> &DMatrix<f64> {
        &self.actions
    }

    pub fn group_ids(&self) -> &[usize] {
        &self.group_ids
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn policy(&self) -> Option<&DMatrix<f64>> {
        self.policy.as_ref()
    }

    pub fn task_component(&self) -> Option<&DMatrix<f64>> {
        self.task.as_ref()
    }

    pub fn null_component(&self) -> Option<&DMatrix<f64>> {
        self.null.as_ref()
    }

    /// Sample indices belonging to group `k`.
    pub fn group_indices(&self, k: usize) -> Vec<usize> {
        self.group_ids
            .iter()
            .enumerate()
            .filter_map(|(i, &g)| (g == k).then_some(i))
            .collect()
    }

    /// Copy of the samples at `indices`, groups relabelled densely again.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let pick = |m: &DMatrix<f64>| m.select_columns(indices);
        let labels: Vec<i64> = indices.iter().map(|&i| self.group_ids[i] as i64).collect();
        Self::new(
            pick(&self.states),
            pick(&self.actions),
            &labels,
            GroundTruth {
                policy: self.policy.as_ref().map(pick),
                task: self.task.as_ref().map(pick),
                null: self.null.as_ref().map(pick),
            },
        )
    }

    /// Concatenates two sets with matching dimensions. Group ids of `other`
    /// are offset so the groups stay distinct. Ground-truth channels survive
    /// only when both sides carry them.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim_x() != other.dim_x() || self.dim_u() != other.dim_u() {
            return Err(CclError::Dimension(
                "cannot concatenate datasets of different dimensions".into(),
            ));
        }
        let hcat = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
            m.columns_mut(0, a.ncols()).copy_from(a);
            m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
            m
        };
        let both = |a: &Option<DMatrix<f64>>, b: &Option<DMatrix<f64>>| match (a, b) {
            (Some(a), Some(b)) => Some(hcat(a, b)),
            _ => None,
        };
        let labels: Vec<i64> = self
            .group_ids
            .iter()
            .map(|&g| g as i64)
            .chain(other.group_ids.iter().map(|&g| (g + self.num_groups) as i64))
            .collect();
        Self::new(
            hcat(&self.states, &other.states),
            hcat(&self.actions, &other.actions),
            &labels,
            GroundTruth {
                policy: both(&self.policy, &other.policy),
                task: both(&self.task, &other.task),
                null: both(&self.null, &other.null),
            },
        )
    }
}

fn dense_labels(labels: &[i64]) -> (Vec<usize>, usize) {
    let mut distinct: Vec<i64> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let ids = labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("label present"))
        .collect();
    (ids, distinct.len())
}

/// Optimiser and search settings shared by all learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnOptions {
    /// Tolerance on the relative change of the objective.
    pub tol_fun: f64,
    /// Tolerance on the parameter step norm.
    pub tol_x: f64,
    pub max_iter: usize,
    /// Candidate angles per dimension in lattice searches.
    pub search_resolution: usize,
    pub num_restarts: usize,
    /// Relative singular-value cut-off for pseudoinverses.
    pub svd_threshold: f64,
    /// Ridge term added to every normal-equation solve.
    pub regularization: f64,
    pub rng_seed: u64,
}

impl Default for LearnOptions {
    fn default() -> Self {
        Self {
            tol_fun: 1e-9,
            tol_x: 1e-9,
            max_iter: 1000,
            search_resolution: 90,
            num_restarts: 5,
            svd_threshold: 1e-8,
            regularization: 1e-8,
            rng_seed: 0,
        }
    }
}

impl LearnOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(CclError::InvalidOptions(msg.to_string()));
        if !(self.tol_fun > 0.0) {
            return bad("tol_fun must be > 0");
        }
        if !(self.tol_x > 0.0) {
            return bad("tol_x must be > 0");
        }
        if self.max_iter < 1 {
            return bad("max_iter must be >= 1");
        }
        if self.search_resolution < 2 {
            return bad("search_resolution must be >= 2");
        }
        if self.num_restarts < 1 {
            return bad("num_restarts must be >= 1");
        }
        if !(self.svd_threshold >= 0.0) || !self.svd_threshold.is_finite() {
            return bad("svd_threshold must be >= 0");
        }
        if !(self.regularization >= 0.0) || !self.regularization.is_finite() {
            return bad("regularization must be >= 0");
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

/// Why an iterative fit stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    FunTol,
    XTol,
    MaxIter,
    /// Damping grew past its ceiling without finding a descent step.
    DampingOverflow,
    /// Solved in closed form.
    Exact,
}

impl Termination {
    pub fn is_converged(self) -> bool {
        matches!(self, Self::FunTol | Self::XTol | Self::Exact)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flag", rename_all = "kebab-case")]
pub enum ReportFlag {
    /// Not a single constraint row explained the data.
    NoConstraintFound,
    /// Samples excluded from the fit (zero-norm actions).
    DroppedSamples { count: usize },
    /// Samples whose model prediction vanished and got a zero projector.
    DegenerateProjectors { count: usize },
    /// The policy fit is rank deficient: some weight directions leave every
    /// projected observation unchanged, as when all data share one constraint.
    SingleConstraintDegeneracy,
}

/// Fit statistics returned by every learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnReport {
    pub nmse: f64,
    pub mse: f64,
    pub variance: f64,
    pub iterations: usize,
    pub final_objective: f64,
    pub converged: bool,
    pub termination: Termination,
    /// Objective after each accepted stage (LM step, or constraint row).
    pub objective_trace: Vec<f64>,
    pub flags: Vec<ReportFlag>,
}

impl LearnReport {
    pub(crate) fn new(mse: f64, variance: f64, final_objective: f64, termination: Termination) -> Self {
        Self {
            nmse: normalize(mse, variance),
            mse,
            variance,
            iterations: 0,
            final_objective,
            converged: termination.is_converged(),
            termination,
            objective_trace: Vec::new(),
            flags: Vec::new(),
        }
    }

    pub fn has_flag(&self, flag: &ReportFlag) -> bool {
        self.flags.contains(flag)
    }

    /// One-line summary, used by the CLI.
    pub fn summary(&self) -> String {
        format!(
            "nmse={:.6e} mse={:.6e} var={:.6e} objective={:.6e} iterations={} converged={} ({})",
            self.nmse,
            self.mse,
            self.variance,
            self.final_objective,
            self.iterations,
            self.converged,
            serde_json::to_value(self.termination)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
        )
    }
}

/// `mse / variance`, with `+inf` when only the variance vanishes and 0 when both do.
pub fn normalize(mse: f64, variance: f64) -> f64 {
    if variance > 0.0 {
        mse / variance
    } else if mse > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Sum over rows of the population variance of each row.
pub fn total_variance(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    if n == 0 {
        return 0.0;
    }
    m.row_iter()
        .map(|row| {
            let mean = row.sum() / n as f64;
            row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
        })
        .sum()
}

/// Mean over columns of the squared column norm.
pub fn mean_sq_norm(m: &DMatrix<f64>) -> f64 {
    if m.ncols() == 0 {
        return 0.0;
    }
    m.norm_squared() / m.ncols() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_are_relabelled_densely() {
        let x = DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 2.0, 3.0]);
        let u = DMatrix::from_row_slice(1, 4, &[1.0, 1.0, 1.0, 1.0]);
        let set = DemonstrationSet::new(x, u, &[2, 0, 2, 7], GroundTruth::default()).unwrap();
        assert_eq!(set.group_ids(), &[1, 0, 1, 2]);
        assert_eq!(set.num_groups(), 3);
        assert_eq!(set.group_indices(1), vec![0, 2]);
    }

    #[test]
    fn rejects_non_finite_and_mismatch() {
        let x = DMatrix::from_row_slice(1, 2, &[0.0, f64::NAN]);
        let u = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let err = DemonstrationSet::from_observations(x, u.clone()).unwrap_err();
        assert!(matches!(err, CclError::DegenerateSample { index: 1, .. }));

        let x = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 2.0]);
        assert!(DemonstrationSet::from_observations(x, u).is_err());
    }

    #[test]
    fn options_bounds() {
        assert!(LearnOptions::default().validate().is_ok());
        let o = LearnOptions {
            search_resolution: 1,
            ..LearnOptions::default()
        };
        assert!(o.validate().is_err());
        let o = LearnOptions {
            tol_fun: 0.0,
            ..LearnOptions::default()
        };
        assert!(o.validate().is_err());
    }

    #[test]
    fn normalize_conventions() {
        assert_eq!(normalize(1.0, 2.0), 0.5);
        assert_eq!(normalize(1.0, 0.0), f64::INFINITY);
        assert_eq!(normalize(0.0, 0.0), 0.0);
    }

    #[test]
    fn concat_offsets_groups() {
        let a = DemonstrationSet::from_observations(DMatrix::zeros(1, 2), DMatrix::zeros(1, 2)).unwrap();
        let b = a.concat(&a).unwrap();
        assert_eq!(b.num_groups(), 2);
        assert_eq!(b.group_ids(), &[0, 0, 1, 1]);
    }
}
