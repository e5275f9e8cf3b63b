//! Proximal counterfactual distribution, quantile and lower-tail CVaR inference.
//!
//! Bridges are finite-rank: the outcome bridge is `b_W' theta(y)` and the treatment
//! bridge is `b_Z' alpha`, both solved from empirical cross-moment systems.

pub mod bands;
pub mod bridge;
pub mod data;
pub mod estimator;
pub mod pipeline;
pub mod simulators;
pub mod stats;
