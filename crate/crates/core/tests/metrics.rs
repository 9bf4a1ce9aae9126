use ccl_core::eval::{error_ncpe, error_npe, error_nupe, error_poe, error_ppe, nmse};
use ccl_core::math::nullspace_projector;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn mat(d: usize, n: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(d, n, |i, j| v[(i * n + j) % v.len()] + 0.01 * (i + 3 * j) as f64)
}

fn projectors(d: usize, n: usize, v: &[f64]) -> Vec<DMatrix<f64>> {
    (0..n)
        .map(|j| {
            let a = DMatrix::from_fn(1, d, |_, i| v[(j * d + i) % v.len()] + 0.1);
            nullspace_projector(&a, 1e-10).projector
        })
        .collect()
}

proptest! {
    #[test]
    fn metrics_ignore_sample_order(
        d in 1usize..4,
        n in 2usize..12,
        v in prop::collection::vec(-1.0f64..1.0, 48),
        shift in 1usize..11,
    ) {
        let (t, p, q) = (mat(d, n, &v), mat(d, n, &v[7..]), mat(d, n, &v[13..]));
        let ps = projectors(d, n, &v[3..]);
        let order: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let perm = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), n, |i, j| m[(i, order[j])]);
        let perm_ps: Vec<_> = order.iter().map(|&j| ps[j].clone()).collect();
        let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs());
        prop_assert!(same(nmse(&t, &p).unwrap().mse, nmse(&perm(&t), &perm(&p)).unwrap().mse));
        prop_assert!(same(
            error_ppe(&t, &ps, &p).unwrap().mse,
            error_ppe(&perm(&t), &perm_ps, &perm(&p)).unwrap().mse
        ));
        prop_assert!(same(
            error_poe(&t, &ps, None).unwrap().mse,
            error_poe(&perm(&t), &perm_ps, None).unwrap().mse
        ));
        prop_assert!(same(
            error_ncpe(&t, &q, &ps).unwrap().mse,
            error_ncpe(&perm(&t), &perm(&q), &perm_ps).unwrap().mse
        ));
    }

    #[test]
    fn constrained_error_never_exceeds_unconstrained(
        d in 1usize..4,
        n in 1usize..12,
        v in prop::collection::vec(-1.0f64..1.0, 48),
    ) {
        let (t, p) = (mat(d, n, &v), mat(d, n, &v[5..]));
        let ps = projectors(d, n, &v[11..]);
        let ncpe = error_ncpe(&t, &p, &ps).unwrap().mse;
        let nupe = error_nupe(&t, &p).unwrap().mse;
        prop_assert!(ncpe <= nupe + 1e-12);
    }

    #[test]
    fn normalised_error_is_scale_free(
        v in prop::collection::vec(-1.0f64..1.0, 48),
        s in 0.01f64..100.0,
    ) {
        let (t, p) = (mat(2, 10, &v), mat(2, 10, &v[9..]));
        let a = error_npe(&t, &p).unwrap();
        let b = error_npe(&(&t * s), &(&p * s)).unwrap();
        prop_assert!((a.normalized - b.normalized).abs() <= 1e-10 * (1.0 + a.normalized));
        prop_assert!((b.mse - a.mse * s * s).abs() <= 1e-10 * (1.0 + b.mse));
    }
}

#[test]
fn constant_truth_normalises_to_zero_or_infinity() {
    let t = DMatrix::from_element(2, 5, 1.5);
    assert_eq!(nmse(&t, &t).unwrap().normalized, 0.0);
    let off = nmse(&t, &DMatrix::zeros(2, 5)).unwrap();
    assert_eq!(off.variance, 0.0);
    assert!(off.normalized.is_infinite());
}

#[test]
fn mismatched_shapes_are_errors() {
    let t = DMatrix::<f64>::zeros(2, 4);
    assert!(nmse(&t, &DMatrix::zeros(2, 3)).is_err());
    assert!(error_ppe(&t, &vec![DMatrix::identity(2, 2); 3], &t).is_err());
    assert!(error_ncpe(&t, &t, &vec![DMatrix::identity(3, 3); 4]).is_err());
}
