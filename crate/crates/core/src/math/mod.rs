//! Numerical kernels shared by the learners.

pub mod kmeans;
pub mod linalg;
pub mod lm;
pub mod rbf;
pub mod sphere;

pub use kmeans::{kmeans, kmeans_centers, KMeans};
pub use linalg::{
    canonicalize_sign, nullspace_projector, numerical_rank, orthogonal_complement_rotation,
    pairwise_sq_distances, pinv_truncated, ProjectionPair,
};
pub use lm::{fd_jacobian, jacobian_relative_error, lm_solve, LeastSquaresProblem, LmProblem, LmSolution};
pub use rbf::{rbf_features, width_from_centers, RbfBasis, RbfModel};
pub use sphere::{angles_from_unit_vector, unit_vector_from_angles, unit_vector_jacobian};
