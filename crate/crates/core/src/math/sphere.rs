//! Hyperspherical parameterisation of unit vectors.
//!
//! `dim - 1` angles map to a unit vector in `R^dim`:
//! `a_i = cos(t_i) * prod_{j<i} sin(t_j)` for `i < dim - 1`, and the last
//! component is `prod_j sin(t_j)`. In two dimensions this is `(cos t, sin t)`.

use nalgebra::{DMatrix, DVector};

pub fn unit_vector_from_angles(theta: &[f64]) -> DVector<f64> {
    let dim = theta.len() + 1;
    let mut a = DVector::zeros(dim);
    let mut sin_prod = 1.0;
    for (i, t) in theta.iter().enumerate() {
        a[i] = t.cos() * sin_prod;
        sin_prod *= t.sin();
    }
    a[dim - 1] = sin_prod;
    a
}

/// Derivative of [`unit_vector_from_angles`], `dim x (dim - 1)`.
pub fn unit_vector_jacobian(theta: &[f64]) -> DMatrix<f64> {
    let d = theta.len();
    let dim = d + 1;
    let (s, c): (Vec<f64>, Vec<f64>) = theta.iter().map(|t| t.sin_cos()).unzip();
    let mut jac = DMatrix::zeros(dim, d);
    for i in 0..dim {
        // Component i depends on t_0..t_{i-1} through sines and on t_i through a cosine.
        let last = i == dim - 1;
        for k in 0..d.min(i + 1) {
            if k == i && last {
                continue;
            }
            let mut v = 1.0;
            for j in 0..i.min(d) {
                v *= if j == k { c[j] } else { s[j] };
            }
            if !last {
                v *= if k == i { -s[i] } else { c[i] };
            }
            jac[(i, k)] = v;
        }
    }
    jac
}

/// Inverse map onto the half-open cube `[0, pi)^(dim-1)`. Because every angle
/// is restricted to that range, `a` and `-a` share one parameter vector; the
/// returned angles reproduce whichever of the two has a non-negative last
/// component.
pub fn angles_from_unit_vector(a: &DVector<f64>) -> Vec<f64> {
    let mut v = a.normalize();
    if v[v.len() - 1] < 0.0 {
        v.neg_mut();
    }
    let mut theta = raw_angles(&v);
    if theta.iter().any(|&t| t >= std::f64::consts::PI - 1e-15) {
        v.neg_mut();
        theta = raw_angles(&v);
    }
    theta
}

fn raw_angles(v: &DVector<f64>) -> Vec<f64> {
    let dim = v.len();
    let mut theta = Vec::with_capacity(dim - 1);
    for i in 0..dim - 1 {
        let tail = v.rows(i + 1, dim - i - 1).norm();
        if i == dim - 2 {
            theta.push(v[dim - 1].atan2(v[dim - 2]).max(0.0));
        } else {
            theta.push(tail.atan2(v[i]));
        }
    }
    theta
}
