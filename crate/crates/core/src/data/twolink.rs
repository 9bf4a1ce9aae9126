//! Planar two-link arm kinematics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLinkArm {
    pub l1: f64,
    pub l2: f64,
}

impl Default for TwoLinkArm {
    fn default() -> Self {
        Self { l1: 1.0, l2: 1.0 }
    }
}

impl TwoLinkArm {
    pub fn new(l1: f64, l2: f64) -> Self {
        Self { l1, l2 }
    }

    /// End-effector position for joint angles `q` (radians).
    pub fn forward_kinematics(&self, q: &[f64; 2]) -> DVector<f64> {
        let q12 = q[0] + q[1];
        DVector::from_vec(vec![
            self.l1 * q[0].cos() + self.l2 * q12.cos(),
            self.l1 * q[0].sin() + self.l2 * q12.sin(),
        ])
    }

    pub fn jacobian(&self, q: &[f64; 2]) -> DMatrix<f64> {
        let (s1, c1) = q[0].sin_cos();
        let (s12, c12) = (q[0] + q[1]).sin_cos();
        DMatrix::from_row_slice(
            2,
            2,
            &[
                -self.l1 * s1 - self.l2 * s12,
                -self.l2 * s12,
                self.l1 * c1 + self.l2 * c12,
                self.l2 * c12,
            ],
        )
    }
}

/// [`TwoLinkArm::jacobian`] for an arm with the given link lengths.
pub fn twolink_jacobian(q: &[f64; 2], l1: f64, l2: f64) -> DMatrix<f64> {
    TwoLinkArm::new(l1, l2).jacobian(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jacobian_at_zero() {
        let j = twolink_jacobian(&[0.0, 0.0], 1.0, 1.0);
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 1.0]));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let arm = TwoLinkArm::new(0.7, 1.3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = 1e-6;
        for _ in 0..100 {
            let q = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let j = arm.jacobian(&q);
            for k in 0..2 {
                let mut qp = q;
                let mut qm = q;
                qp[k] += h;
                qm[k] -= h;
                let col = (arm.forward_kinematics(&qp) - arm.forward_kinematics(&qm)) / (2.0 * h);
                assert!((col - j.column(k)).amax() < 1e-6);
            }
        }
    }

    #[test]
    fn aligned_links_are_singular() {
        let arm = TwoLinkArm::default();
        for q1 in [0.0, 0.4, 2.0] {
            assert!(arm.jacobian(&[q1, 0.0]).determinant().abs() < 1e-12);
        }
    }
}
