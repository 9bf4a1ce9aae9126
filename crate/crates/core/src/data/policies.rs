//! Reference unconstrained policies.

use nalgebra::{DMatrix, DVector};

/// Planar limit cycle of radius `r0`: radial attraction at rate `alpha`,
/// rotation at angular speed `omega`.
pub fn policy_limit_cycle(x: &DVector<f64>, r0: f64, alpha: f64, omega: f64) -> DVector<f64> {
    let r2 = x[0] * x[0] + x[1] * x[1];
    let radial = alpha * (r0 * r0 - r2);
    DVector::from_vec(vec![radial * x[0] - omega * x[1], radial * x[1] + omega * x[0]])
}

/// Linear attractor `-L (x - x*)`.
pub fn policy_linear(x: &DVector<f64>, gain: &DMatrix<f64>, target: &DVector<f64>) -> DVector<f64> {
    -(gain * (x - target))
}
