//! Simultaneous CDF bands, isotonic projection, and band inversion for quantiles and QTEs.

mod band;
mod estd;
mod isotonic;
mod multiplier;

pub use band::{
    cdf_band, first_crossing, first_crossing_index, invert_band, monotone_envelope, pointwise_interval,
    quantile_estimates, BandSet, QuantileBands,
};
pub use estd::{
    estimated_density_delta_band, kernel_density_from_cdf, silverman_bandwidth, DensityDeltaInterval, DENSITY_FLOOR,
};
pub use isotonic::{
    isotonic_project, isotonic_project_unit, monotone_qp_oracle, nonexpansive, pava, weighted_sq_dist,
};
pub use multiplier::{multiplier_critical_value, multiplier_sup_draws, MultiplierLaw};
