//! Intrinsic norm-constrained linear maximization oracles on matrix manifolds.
//!
//! The crate covers four geometries (fixed-rank factorizations, SPD matrices with
//! the affine-invariant metric, the Stiefel manifold and the Grassmannian), the
//! unitarily invariant norm families used to constrain update directions, an
//! optimizer loop built on them, Euclidean baselines, synthetic benchmark
//! problems and an independent verification oracle.

pub mod error;
pub mod matcore;
pub mod norms;
pub mod manifolds;
pub mod sample;
pub mod optimizer;
pub mod baselines;
pub mod io;
pub mod problems;
pub mod oracle;

pub use error::{Error, Result};
pub use manifolds::{
    LmoOptions, LmoResult, ManifoldDims, ManifoldKind, ManifoldPoint, ScaledGradient, TangentVector,
};
pub use matcore::DenseMatrix;
pub use norms::NormSpec;
