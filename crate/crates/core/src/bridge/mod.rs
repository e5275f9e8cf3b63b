//! Finite-rank moment systems and bridge solvers.

mod moments;
mod solve;
mod spectral;

pub use moments::{assemble_moments, assemble_moments_on, assemble_moments_weighted, MomentSystem};
pub use solve::{
    default_rank_tol, pinv, singular_values, solve_pinv, solve_ridge, solve_square, BridgeFit, SolverTag,
    DEFAULT_CONDITION_CAP,
};
pub use spectral::{dual_weighted_norm, empirical_picard, picard_partial_sums, spectral_diagnostics, SpectralDiagnostics};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("empty arm: no rows with A = {0}")]
    EmptyArm(u8),
    #[error("square solver needs d_Z = d_W, got {d_z} x {d_w}")]
    NotSquare { d_z: usize, d_w: usize },
    #[error("cross-moment matrix is ill-conditioned (condition {condition:.3e}, kappa_min {kappa_min:.3e}); use the ridge or pseudoinverse solver")]
    IllConditioned { condition: f64, kappa_min: f64 },
    #[error("{0} is not symmetric positive definite")]
    NotSpd(&'static str),
    #[error("ridge penalties must be nonnegative")]
    NegativePenalty,
    #[error("non-finite value in moment system")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, BridgeError>;
