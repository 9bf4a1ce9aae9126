//! Gaussian radial basis features and the linear-in-weights RBF model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans_centers;
use super::linalg::pairwise_sq_distances;
use crate::error::{CclError, Result};

/// Gaussian bases `exp(-|x - mu_g|^2 / (2 * width))` sharing one width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfBasis {
    #[serde(with = "crate::io::matrix_rows")]
    pub centers: DMatrix<f64>,
    pub width: f64,
}

impl RbfBasis {
    pub fn new(centers: DMatrix<f64>, width: f64) -> Result<Self> {
        if centers.ncols() == 0 {
            return Err(CclError::InvalidInput("RBF basis needs at least one center".into()));
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(CclError::InvalidInput(format!("RBF width must be > 0, got {width}")));
        }
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(CclError::InvalidInput("RBF centers must be finite".into()));
        }
        Ok(Self { centers, width })
    }

    /// K-means centers on the columns of `x`; width is the squared mean of
    /// all center-to-center distances. A single center falls back to the
    /// mean squared distance of the data from it.
    pub fn from_data(x: &DMatrix<f64>, g: usize, seed: u64) -> Result<Self> {
        let centers = kmeans_centers(x, g, seed)?;
        let mut width = width_from_centers(&centers);
        if !(width > 1e-12) {
            let d = pairwise_sq_distances(x, &centers)?;
            width = d.row_iter().map(|r| r.min()).sum::<f64>() / x.ncols() as f64;
        }
        if !(width > 1e-12) {
            return Err(CclError::InvalidInput(
                "degenerate feature construction: states show no variation".into(),
            ));
        }
        Self::new(centers, width)
    }

    pub fn len(&self) -> usize {
        self.centers.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim_x(&self) -> usize {
        self.centers.nrows()
    }

    pub fn features(&self, x: &DVector<f64>) -> DVector<f64> {
        rbf_features(x, &self.centers, self.width)
    }

    /// `G x N` feature matrix for the columns of `x`.
    pub fn feature_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.len(), x.ncols());
        for (n, col) in x.column_iter().enumerate() {
            out.set_column(n, &self.features(&col.into_owned()));
        }
        out
    }
}

pub fn rbf_features(x: &DVector<f64>, centers: &DMatrix<f64>, width: f64) -> DVector<f64> {
    DVector::from_iterator(
        centers.ncols(),
        centers
            .column_iter()
            .map(|mu| (-(x - mu).norm_squared() / (2.0 * width)).exp()),
    )
}

/// Squared mean pairwise distance between centers (diagonal zeros included).
pub fn width_from_centers(centers: &DMatrix<f64>) -> f64 {
    let g = centers.ncols();
    let mut total = 0.0;
    for i in 0..g {
        for j in 0..g {
            total += (centers.column(i) - centers.column(j)).norm();
        }
    }
    let mean = total / (g * g) as f64;
    mean * mean
}

/// `y(x) = weights * beta(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfModel {
    pub basis: RbfBasis,
    /// `dim_out x G`.
    #[serde(with = "crate::io::matrix_rows")]
    pub weights: DMatrix<f64>,
}

impl RbfModel {
    pub fn new(basis: RbfBasis, weights: DMatrix<f64>) -> Result<Self> {
        if weights.ncols() != basis.len() {
            return Err(CclError::Dimension(format!(
                "weights have {} columns for {} basis functions",
                weights.ncols(),
                basis.len()
            )));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(CclError::InvalidInput("weights must be finite".into()));
        }
        Ok(Self { basis, weights })
    }

    pub fn zeros(basis: RbfBasis, dim_out: usize) -> Self {
        let g = basis.len();
        Self {
            basis,
            weights: DMatrix::zeros(dim_out, g),
        }
    }

    pub fn dim_out(&self) -> usize {
        self.weights.nrows()
    }

    pub fn predict_one(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.weights * self.basis.features(x)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.weights * self.basis.feature_matrix(x)
    }
}
