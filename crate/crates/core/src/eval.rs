//! Normalised error metrics.
//!
//! Each metric returns the mean squared error over samples, the total
//! variance of the reference channel and their ratio.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CclError, Result};
use crate::types::{normalize, total_variance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    /// `mse / variance`; `+inf` when only the variance is zero, 0 when both are.
    pub normalized: f64,
    pub variance: f64,
    pub mse: f64,
}

impl MetricTriple {
    pub fn new(mse: f64, variance: f64) -> Self {
        Self {
            normalized: normalize(mse, variance),
            variance,
            mse,
        }
    }
}

fn check_pair(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(CclError::Dimension(format!(
            "{}x{} vs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if a.ncols() == 0 {
        return Err(CclError::InvalidInput("no samples to evaluate".into()));
    }
    Ok(())
}

fn check_projectors(m: &DMatrix<f64>, projectors: &[DMatrix<f64>]) -> Result<()> {
    if projectors.len() != m.ncols() {
        return Err(CclError::Dimension(format!(
            "{} projectors for {} samples",
            projectors.len(),
            m.ncols()
        )));
    }
    let d = m.nrows();
    if let Some(i) = projectors.iter().position(|p| p.shape() != (d, d)) {
        return Err(CclError::Dimension(format!("projector {i} is not {d}x{d}")));
    }
    Ok(())
}

/// Generic normalised mean squared error of `pred` against `truth`.
pub fn nmse(truth: &DMatrix<f64>, pred: &DMatrix<f64>) -> Result<MetricTriple> {
    check_pair(truth, pred)?;
    let mse = (truth - pred).norm_squared() / truth.ncols() as f64;
    Ok(MetricTriple::new(mse, total_variance(truth)))
}

/// Projected policy error: `mean |N^_n pi_n - w_n|^2` over the variance of `w`.
pub fn error_ppe(w_true: &DMatrix<f64>, projectors: &[DMatrix<f64>], pi: &DMatrix<f64>) -> Result<MetricTriple> {
    check_pair(w_true, pi)?;
    check_projectors(w_true, projectors)?;
    let sum: f64 = projectors
        .iter()
        .enumerate()
        .map(|(n, p)| (p * pi.column(n) - w_true.column(n)).norm_squared())
        .sum();
    Ok(MetricTriple::new(sum / w_true.ncols() as f64, total_variance(w_true)))
}

/// Projected observation error: `mean |N^_n u_n - u_n|^2` over the variance
/// of `u`. Needs no policy; `_pi` is accepted for call-site symmetry with
/// [`error_ppe`] and ignored.
pub fn error_poe(u: &DMatrix<f64>, projectors: &[DMatrix<f64>], _pi: Option<&DMatrix<f64>>) -> Result<MetricTriple> {
    check_pair(u, u)?;
    check_projectors(u, projectors)?;
    let sum: f64 = projectors
        .iter()
        .enumerate()
        .map(|(n, p)| (p * u.column(n) - u.column(n)).norm_squared())
        .sum();
    Ok(MetricTriple::new(sum / u.ncols() as f64, total_variance(u)))
}

/// Null-space component error.
pub fn error_npe(w_true: &DMatrix<f64>, w_pred: &DMatrix<f64>) -> Result<MetricTriple> {
    nmse(w_true, w_pred)
}

/// Unconstrained policy error.
pub fn error_nupe(pi_true: &DMatrix<f64>, pi_pred: &DMatrix<f64>) -> Result<MetricTriple> {
    nmse(pi_true, pi_pred)
}

/// Constrained policy error: `mean |P_n (pi_n - pi^_n)|^2` over the variance
/// of `P_n pi_n`. Blind to errors in the directions `P_n` removes.
pub fn error_ncpe(pi_true: &DMatrix<f64>, pi_pred: &DMatrix<f64>, projectors: &[DMatrix<f64>]) -> Result<MetricTriple> {
    check_pair(pi_true, pi_pred)?;
    check_projectors(pi_true, projectors)?;
    let mut projected = DMatrix::zeros(pi_true.nrows(), pi_true.ncols());
    let mut sum = 0.0;
    for (n, p) in projectors.iter().enumerate() {
        projected.set_column(n, &(p * pi_true.column(n)));
        sum += (p * (pi_true.column(n) - pi_pred.column(n))).norm_squared();
    }
    Ok(MetricTriple::new(sum / pi_true.ncols() as f64, total_variance(&projected)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::nullspace_projector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ppe_identity_projector_is_analytic() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let n = nullspace_projector(&a, 1e-12).projector;
        let pi = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 1.0, -1.0]);
        let w = &n * &pi;
        let ident = vec![DMatrix::identity(2, 2); 3];
        let t = error_ppe(&w, &ident, &pi).unwrap();
        // |pi - N pi|^2 is the squared first component.
        assert!((t.mse - (1.0 + 4.0 + 0.25) / 3.0).abs() < 1e-15);
        assert_eq!(error_ppe(&w, &vec![n; 3], &pi).unwrap().mse, 0.0);
    }

    #[test]
    fn ncpe_ignores_removed_directions() {
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let pi = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let mut pred = pi.clone();
        pred[(0, 0)] += 5.0;
        pred[(0, 1)] -= 2.0;
        assert_eq!(error_ncpe(&pi, &pred, &[p.clone(), p]).unwrap().mse, 0.0);
    }

    #[test]
    fn zero_variance_sentinel() {
        let t = DMatrix::from_element(2, 4, 1.0);
        assert_eq!(nmse(&t, &DMatrix::zeros(2, 4)).unwrap().normalized, f64::INFINITY);
        assert_eq!(nmse(&t, &t).unwrap().normalized, 0.0);
    }

    #[test]
    fn mismatches_are_rejected() {
        let a = DMatrix::zeros(2, 3);
        assert!(nmse(&a, &DMatrix::zeros(2, 4)).is_err());
        assert!(error_poe(&a, &[DMatrix::identity(2, 2)], None).is_err());
        assert!(error_ncpe(&a, &a, &vec![DMatrix::identity(3, 3); 3]).is_err());
    }

    #[test]
    fn scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = DMatrix::from_fn(3, 20, |_, _| rng.random_range(-1.0..1.0));
        let p = DMatrix::from_fn(3, 20, |_, _| rng.random_range(-1.0..1.0));
        let a = nmse(&t, &p).unwrap().normalized;
        let b = nmse(&(&t * 3.7), &(&p * 3.7)).unwrap().normalized;
        assert!((a - b).abs() < 1e-12);
    }
}
