//! Feature matrices `Phi(x)` whose rows are candidate constraint directions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::TwoLinkArm;

/// State-dependent `dim_phi x dim_u` matrix of candidate constraint rows.
pub trait FeatureMatrix {
    fn dim_phi(&self) -> usize;
    fn dim_u(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// The feature matrices a lambda-mode model can be stored with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FeatureSpec {
    /// `Phi(x) = I`; learning over it is the same as learning `A` directly.
    Identity { dim: usize },
    /// Jacobian of a planar two-link arm with the state being the joint angles.
    TwoLinkJacobian { l1: f64, l2: f64 },
}

impl FeatureMatrix for FeatureSpec {
    fn dim_phi(&self) -> usize {
        match self {
            FeatureSpec::Identity { dim } => *dim,
            FeatureSpec::TwoLinkJacobian { .. } => 2,
        }
    }

    fn dim_u(&self) -> usize {
        match self {
            FeatureSpec::Identity { dim } => *dim,
            FeatureSpec::TwoLinkJacobian { .. } => 2,
        }
    }

    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            FeatureSpec::Identity { dim } => DMatrix::identity(*dim, *dim),
            FeatureSpec::TwoLinkJacobian { l1, l2 } => {
                TwoLinkArm::new(*l1, *l2).jacobian(&[x[0], x[1]])
            }
        }
    }
}
