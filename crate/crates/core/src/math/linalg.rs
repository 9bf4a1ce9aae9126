//! Pseudoinverses, null-space projectors and basis completion.

use nalgebra::{DMatrix, DVector};

use crate::error::{CclError, Result};

/// Thin SVD `m = U diag(s) Vᵀ`, singular values in decreasing order.
///
/// nalgebra's own SVD loses accuracy on some exactly rank-deficient inputs,
/// so the decomposition is done by faer.
fn thin_svd(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let fm = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let svd = fm.thin_svd().ok()?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = s.nrows();
    Some((
        DMatrix::from_fn(m.nrows(), k, |i, j| u[(i, j)]),
        DVector::from_fn(k, |i, _| s[i]),
        DMatrix::from_fn(m.ncols(), k, |i, j| v[(i, j)]),
    ))
}

/// Moore-Penrose pseudoinverse through the SVD, treating singular values
/// below `threshold * sigma_max` as zero.
pub fn pinv_truncated(m: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    let mut out = DMatrix::zeros(cols, rows);
    if rows == 0 || cols == 0 || m.iter().any(|v| !v.is_finite()) {
        return out;
    }
    let Some((u, sv, v)) = thin_svd(m) else {
        return out;
    };
    let sigma_max = sv.max();
    if !(sigma_max > 0.0) {
        return out;
    }
    let cutoff = threshold * sigma_max;
    for (i, &s) in sv.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            // out += v_i * u_i^T / s
            out.ger(1.0 / s, &v.column(i), &u.column(i), 1.0);
        }
    }
    out
}

/// A constraint matrix together with its null-space projector `I - A⁺A`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPair {
    pub a_matrix: DMatrix<f64>,
    pub projector: DMatrix<f64>,
}

/// `N = I - A⁺A` for a `dim_b x dim_u` constraint matrix.
pub fn nullspace_projector(a: &DMatrix<f64>, threshold: f64) -> ProjectionPair {
    let dim_u = a.ncols();
    let mut projector = DMatrix::identity(dim_u, dim_u);
    if a.nrows() > 0 {
        projector -= pinv_truncated(a, threshold) * a;
    }
    // Symmetrise: exact in exact arithmetic, removes round-off asymmetry.
    let projector = (&projector + projector.transpose()) * 0.5;
    ProjectionPair {
        a_matrix: a.clone(),
        projector,
    }
}

/// Rank of `m` under the same relative cut-off as [`pinv_truncated`].
pub fn numerical_rank(m: &DMatrix<f64>, threshold: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let Some((_, sv, _)) = thin_svd(m) else {
        return 0;
    };
    let max = sv.max();
    if !(max > 0.0) {
        return 0;
    }
    sv.iter().filter(|&&s| s > threshold * max).count()
}

/// Completes the orthonormal rows of `rows` (`k x dim`) to an orthonormal
/// basis of `R^dim`, returning the `(dim - k) x dim` complement.
///
/// Completion is pivoted Gram-Schmidt over the standard basis: at each step
/// the axis with the largest residual is taken, ties going to the lower index.
pub fn orthogonal_complement_rotation(rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (k, dim) = rows.shape();
    if k > dim {
        return Err(CclError::Dimension(format!(
            "{k} rows cannot be orthonormal in dimension {dim}"
        )));
    }
    let gram = rows * rows.transpose();
    let err = (gram - DMatrix::<f64>::identity(k, k)).amax();
    if err > 1e-9 {
        return Err(CclError::InvalidInput(format!(
            "rows are not orthonormal (max Gram error {err:.3e})"
        )));
    }

    let mut basis: Vec<DVector<f64>> = rows.row_iter().map(|r| r.transpose()).collect();
    let mut complement = Vec::with_capacity(dim - k);
    let mut used = vec![false; dim];
    while basis.len() < dim {
        let mut best: Option<(usize, DVector<f64>, f64)> = None;
        for axis in (0..dim).filter(|&i| !used[i]) {
            let mut r = DVector::zeros(dim);
            r[axis] = 1.0;
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&r);
                    r.axpy(-c, b, 1.0);
                }
            }
            let norm = r.norm();
            if best.as_ref().is_none_or(|(_, _, n)| norm > *n) {
                best = Some((axis, r, norm));
            }
        }
        let (axis, r, norm) = best.expect("an unused axis remains");
        used[axis] = true;
        let v = r / norm;
        complement.push(v.clone());
        basis.push(v);
    }

    let mut out = DMatrix::zeros(dim - k, dim);
    for (i, v) in complement.iter().enumerate() {
        out.row_mut(i).copy_from(&v.transpose());
    }
    Ok(out)
}

/// Squared Euclidean distances between the columns of `a` (`d x m`) and the
/// columns of `b` (`d x n`).
pub fn pairwise_sq_distances(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(CclError::Dimension(format!(
            "point sets live in R^{} and R^{}",
            a.nrows(),
            b.nrows()
        )));
    }
    Ok(DMatrix::from_fn(a.ncols(), b.ncols(), |i, j| {
        (a.column(i) - b.column(j)).norm_squared()
    }))
}

/// Flips `row` so its first entry with magnitude above `1e-12` is positive.
pub fn canonicalize_sign(row: &mut DVector<f64>) {
    if let Some(&first) = row.iter().find(|v| v.abs() > 1e-12) {
        if first < 0.0 {
            row.neg_mut();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pinv_unit_row() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let p = pinv_truncated(&m, 1e-8);
        assert_eq!(p.shape(), (2, 1));
        assert_relative_eq!(p, DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn pinv_identity() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(pinv_truncated(&i, 1e-8), i, epsilon = 1e-14);
    }

    #[test]
    fn pinv_rank_one_against_full_rank_factorization() {
        // M = F G with F = (1,1)^T, G = (1,1); M⁺ = G^T (G G^T)^-1 (F^T F)^-1 F^T
        let f = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let g = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let m = &f * &g;
        let ftf = (f.transpose() * &f)[(0, 0)];
        let ggt = (&g * g.transpose())[(0, 0)];
        let oracle = g.transpose() * f.transpose() / (ftf * ggt);
        let p = pinv_truncated(&m, 1e-8);
        assert_relative_eq!(p, oracle, epsilon = 1e-14);
        for v in p.iter() {
            assert_relative_eq!(*v, 0.25, epsilon = 1e-14);
        }
    }

    #[test]
    fn pinv_zero_matrix() {
        let p = pinv_truncated(&DMatrix::zeros(2, 3), 1e-8);
        assert_eq!(p, DMatrix::zeros(3, 2));
    }

    #[test]
    fn pinv_exact_on_rank_two_wide_matrix() {
        let a = DMatrix::from_vec(
            3,
            5,
            vec![
                0.6617388705171623, 0.09986586435292616, -0.7204804675784384, 0.1868285796018928,
                0.32715564432791505, -0.20341308087794463, -0.042999702301329205, -0.07529680599336615,
                0.04681672333315327, 0.10107332889113621, -0.7878334753497209, -0.11004546128941106,
                0.15280528464089843, -0.5895394339126631, -0.16636958750887754,
            ],
        );
        assert_eq!(numerical_rank(&a, 1e-10), 2);
        let p = pinv_truncated(&a, 1e-10);
        assert!((&a * &p * &a - &a).amax() < 1e-13);
        assert!((&p * &a * &p - &p).amax() < 1e-13);
    }

    #[test]
    fn truncation_drops_tiny_singular_values() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-12]));
        let p = pinv_truncated(&m, 1e-8);
        assert_relative_eq!(p[(0, 0)], 1.0);
        assert_eq!(p[(1, 1)], 0.0);
    }

    #[test]
    fn projector_axis_constraint() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let n = nullspace_projector(&a, 1e-8).projector;
        assert_relative_eq!(n, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn projector_angled_constraint_outer_product() {
        let t = 30f64.to_radians();
        let a = DMatrix::from_row_slice(1, 2, &[t.cos(), t.sin()]);
        let n = nullspace_projector(&a, 1e-8).projector;
        let oracle = DMatrix::<f64>::identity(2, 2) - a.transpose() * &a;
        assert_relative_eq!(n, oracle, epsilon = 1e-14);
        let perp = DVector::from_vec(vec![-t.sin(), t.cos()]);
        assert_relative_eq!(&n * &perp, perp, epsilon = 1e-14);
    }

    #[test]
    fn projector_zero_row_is_identity() {
        let n = nullspace_projector(&DMatrix::zeros(1, 3), 1e-8).projector;
        assert_eq!(n, DMatrix::identity(3, 3));
    }

    #[test]
    fn complement_of_unit_axis() {
        let c = orthogonal_complement_rotation(&DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        assert_eq!(c.shape(), (1, 2));
        assert_relative_eq!(c[(0, 0)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(c[(0, 1)].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn complement_of_z_axis_spans_xy_plane() {
        let c = orthogonal_complement_rotation(&DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0])).unwrap();
        assert_eq!(c.shape(), (2, 3));
        // Gram-Schmidt oracle: span{e1, e2} is the orthogonal complement of e3.
        for r in c.row_iter() {
            assert_relative_eq!(r[2], 0.0, epsilon = 1e-15);
            assert_relative_eq!(r.norm(), 1.0, epsilon = 1e-15);
        }
        assert_relative_eq!(c.row(0).dot(&c.row(1)), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn complement_of_two_identity_rows() {
        let rows = DMatrix::<f64>::identity(3, 3).rows(0, 2).into_owned();
        let c = orthogonal_complement_rotation(&rows).unwrap();
        assert_relative_eq!(c[(0, 2)].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn complement_rejects_non_orthonormal() {
        let rows = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(orthogonal_complement_rotation(&rows).is_err());
    }

    #[test]
    fn complement_of_nothing_is_identity() {
        let c = orthogonal_complement_rotation(&DMatrix::zeros(0, 3)).unwrap();
        assert_eq!(c, DMatrix::identity(3, 3));
    }

    #[test]
    fn distances() {
        let a = DMatrix::from_row_slice(2, 1, &[0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[3.0, 4.0]);
        assert_eq!(pairwise_sq_distances(&a, &b).unwrap()[(0, 0)], 25.0);
        assert_eq!(pairwise_sq_distances(&a, &a).unwrap()[(0, 0)], 0.0);
        assert!(pairwise_sq_distances(&a, &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn distances_match_loop_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
        let d = pairwise_sq_distances(&a, &b).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += (a[(k, i)] - b[(k, j)]) * (a[(k, i)] - b[(k, j)]);
                }
                assert!((d[(i, j)] - s).abs() < 1e-12);
            }
        }
    }
}
