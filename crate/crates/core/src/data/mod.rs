//! Synthetic demonstrations: a planar toy system and a two-link arm under
//! known constraints, with the ground-truth decomposition recorded.

mod policies;
mod twolink;

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use policies::{policy_limit_cycle, policy_linear};
pub use twolink::{twolink_jacobian, TwoLinkArm};

use crate::error::{CclError, Result};
use crate::math::{nullspace_projector, pinv_truncated};
use crate::types::{DemonstrationSet, GroundTruth};

/// Pseudoinverse cutoff used when building ground truth.
const GENERATOR_SVD_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SystemSpec {
    /// State `x` in `[-1, 1]^2`, action in `R^2`.
    Toy2d,
    /// State is the joint angles in `[0, pi/2]^2`, action the joint velocities.
    Twolink { l1: f64, l2: f64 },
}

impl SystemSpec {
    pub fn twolink_default() -> Self {
        let arm = TwoLinkArm::default();
        SystemSpec::Twolink { l1: arm.l1, l2: arm.l2 }
    }

    fn sample_state(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match self {
            SystemSpec::Toy2d => DVector::from_fn(2, |_, _| rng.random_range(-1.0..=1.0)),
            SystemSpec::Twolink { .. } => DVector::from_fn(2, |_, _| rng.random_range(0.0..=FRAC_PI_2)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PolicySpec {
    LimitCycle { r0: f64, alpha: f64, omega: f64 },
    /// `-gain (x - target)`, gain given row by row.
    LinearAttractor { gain: Vec<Vec<f64>>, target: Vec<f64> },
}

impl PolicySpec {
    pub fn limit_cycle() -> Self {
        PolicySpec::LimitCycle {
            r0: 0.5,
            alpha: 1.0,
            omega: 1.0,
        }
    }

    /// `L = I`, `x* = 0` in two dimensions.
    pub fn linear_attractor() -> Self {
        PolicySpec::LinearAttractor {
            gain: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            target: vec![0.0, 0.0],
        }
    }

    fn validate(&self) -> Result<()> {
        if let PolicySpec::LinearAttractor { gain, target } = self {
            if target.len() != 2 || gain.len() != 2 || gain.iter().any(|r| r.len() != 2) {
                return Err(CclError::InvalidOptions("linear policy must be 2x2 with a 2-vector target".into()));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            PolicySpec::LimitCycle { r0, alpha, omega } => policy_limit_cycle(x, *r0, *alpha, *omega),
            PolicySpec::LinearAttractor { gain, target } => {
                let l = DMatrix::from_fn(gain.len(), gain[0].len(), |i, j| gain[i][j]);
                policy_linear(x, &l, &DVector::from_column_slice(target))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ConstraintSpec {
    None,
    /// `A = [cos t, sin t]`.
    FixedAngle { degrees: f64 },
    /// `A(x) = [-2 a x1, 1]`.
    Parabolic { a: f64 },
    /// Selected rows of the two-link Jacobian.
    JacobianRows { rows: Vec<usize> },
}

impl ConstraintSpec {
    pub fn dim_b(&self) -> usize {
        match self {
            ConstraintSpec::None => 0,
            ConstraintSpec::FixedAngle { .. } | ConstraintSpec::Parabolic { .. } => 1,
            ConstraintSpec::JacobianRows { rows } => rows.len(),
        }
    }

    fn validate(&self, system: &SystemSpec) -> Result<()> {
        match self {
            ConstraintSpec::JacobianRows { rows } => {
                if !matches!(system, SystemSpec::Twolink { .. }) {
                    return Err(CclError::InvalidOptions("jacobian rows need the twolink system".into()));
                }
                if rows.len() != 1 || rows[0] > 1 {
                    return Err(CclError::InvalidOptions(format!(
                        "jacobian row selection {rows:?} must pick exactly one of rows 0, 1"
                    )));
                }
            }
            ConstraintSpec::FixedAngle { degrees } if !degrees.is_finite() => {
                return Err(CclError::InvalidOptions("constraint angle must be finite".into()));
            }
            ConstraintSpec::Parabolic { a } if !a.is_finite() => {
                return Err(CclError::InvalidOptions("parabola coefficient must be finite".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// `A(x)`, `dim_b x 2`.
    pub fn matrix(&self, system: &SystemSpec, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            ConstraintSpec::None => DMatrix::zeros(0, 2),
            ConstraintSpec::FixedAngle { degrees } => {
                let (s, c) = degrees.to_radians().sin_cos();
                DMatrix::from_row_slice(1, 2, &[c, s])
            }
            ConstraintSpec::Parabolic { a } => DMatrix::from_row_slice(1, 2, &[-2.0 * a * x[0], 1.0]),
            ConstraintSpec::JacobianRows { rows } => {
                let (l1, l2) = match system {
                    SystemSpec::Twolink { l1, l2 } => (*l1, *l2),
                    SystemSpec::Toy2d => (1.0, 1.0),
                };
                let j = twolink_jacobian(&[x[0], x[1]], l1, l2);
                j.select_rows(rows.iter())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TaskSpec {
    Zero,
    /// `b` itself, one entry per constraint row.
    Constant { value: Vec<f64> },
    /// `b = A c` with `c_i = amplitude sin(frequency n + i pi/2)` at the
    /// `n`-th sample of a group.
    Sinusoid { amplitude: f64, frequency: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub system: SystemSpec,
    pub policy: PolicySpec,
    /// One constraint per group.
    pub constraints: Vec<ConstraintSpec>,
    pub task: TaskSpec,
    pub samples_per_group: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.constraints.is_empty() {
            return Err(CclError::InvalidOptions("at least one group is required".into()));
        }
        if self.samples_per_group == 0 {
            return Err(CclError::InvalidOptions("samples per group must be at least 1".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(CclError::InvalidOptions("noise std must be finite and >= 0".into()));
        }
        if let SystemSpec::Twolink { l1, l2 } = self.system {
            if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
                return Err(CclError::InvalidOptions("link lengths must be positive".into()));
            }
        }
        self.policy.validate()?;
        for c in &self.constraints {
            c.validate(&self.system)?;
            if let TaskSpec::Constant { value } = &self.task {
                if value.len() != c.dim_b() {
                    return Err(CclError::InvalidOptions(format!(
                        "task vector has {} entries for a {}-row constraint",
                        value.len(),
                        c.dim_b()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Samples every group and records `pi`, `v = A⁺ b`, `w = N pi` and
/// `u = v + w + noise`.
pub fn generate(config: &GeneratorConfig) -> Result<DemonstrationSet> {
    config.validate()?;
    let n_total = config.samples_per_group * config.constraints.len();
    let mut x = DMatrix::zeros(2, n_total);
    let mut u = DMatrix::zeros(2, n_total);
    let mut pi = DMatrix::zeros(2, n_total);
    let mut v = DMatrix::zeros(2, n_total);
    let mut w = DMatrix::zeros(2, n_total);
    let mut labels = Vec::with_capacity(n_total);
    let noise = Normal::new(0.0, config.noise_std).expect("validated noise std");

    for (k, constraint) in config.constraints.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(k as u64));
        // Noise has its own stream.
        let mut noise_rng = rng.clone();
        noise_rng.set_stream(1);
        for n in 0..config.samples_per_group {
            let col = k * config.samples_per_group + n;
            let xs = config.system.sample_state(&mut rng);
            let a = constraint.matrix(&config.system, &xs);
            let b = task_vector(&config.task, &a, n);
            let ps = config.policy.eval(&xs);
            let vs = pinv_truncated(&a, GENERATOR_SVD_THRESHOLD) * b;
            let ws = nullspace_projector(&a, GENERATOR_SVD_THRESHOLD).projector * &ps;
            let mut us = &vs + &ws;
            if config.noise_std > 0.0 {
                for e in us.iter_mut() {
                    *e += noise.sample(&mut noise_rng);
                }
            }
            x.set_column(col, &xs);
            u.set_column(col, &us);
            pi.set_column(col, &ps);
            v.set_column(col, &vs);
            w.set_column(col, &ws);
            labels.push(k as i64);
        }
    }
    DemonstrationSet::new(
        x,
        u,
        &labels,
        GroundTruth {
            policy: Some(pi),
            task: Some(v),
            null: Some(w),
        },
    )
}

fn task_vector(task: &TaskSpec, a: &DMatrix<f64>, n: usize) -> DVector<f64> {
    match task {
        TaskSpec::Zero => DVector::zeros(a.nrows()),
        TaskSpec::Constant { value } => DVector::from_column_slice(value),
        TaskSpec::Sinusoid { amplitude, frequency } => {
            let c = DVector::from_fn(a.ncols(), |i, _| {
                amplitude * (frequency * n as f64 + i as f64 * FRAC_PI_2).sin()
            });
            a * c
        }
    }
}
