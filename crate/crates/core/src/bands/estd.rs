use serde::{Deserialize, Serialize};

use super::band::first_crossing_index;
use super::isotonic::isotonic_project_unit;
use crate::estimator::CdfProcessEstimate;
use crate::stats::{norm_pdf, quantile_type7, sample_sd, sorted_copy, z_two_sided};

/// Densities below this are treated as unreliable; the interval widens to the grid range.
pub const DENSITY_FLOOR: f64 = 1e-3;

/// Silverman's rule 0.9 min(sd, IQR/1.34) m^{-1/5} on the observed outcomes of one arm.
pub fn silverman_bandwidth(y: &[f64], a: &[u8], arm: u8) -> f64 {
    let ys: Vec<f64> = y.iter().zip(a).filter(|(_, &t)| t == arm).map(|(&v, _)| v).collect();
    let ys = sorted_copy(&ys);
    let m = ys.len() as f64;
    let iqr = quantile_type7(&ys, 0.75) - quantile_type7(&ys, 0.25);
    let spread = match sample_sd(&ys) {
        sd if iqr > 0.0 => sd.min(iqr / 1.34),
        sd => sd,
    };
    0.9 * spread * m.powf(-0.2)
}

/// Gaussian-kernel density at `x` from the increments of a monotone CDF on `grid`.
///
/// Increment F(y_k) - F(y_{k-1}) is placed at the cell midpoint; the mass below the first
/// and above the last grid point is dropped.
pub fn kernel_density_from_cdf(grid: &[f64], cdf: &[f64], bandwidth: f64, x: f64) -> f64 {
    (1..grid.len())
        .map(|k| {
            let mid = 0.5 * (grid[k - 1] + grid[k]);
            (cdf[k] - cdf[k - 1]) * norm_pdf((x - mid) / bandwidth) / bandwidth
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityDeltaInterval {
    pub tau: f64,
    pub qte: f64,
    pub lower: f64,
    pub upper: f64,
    pub density: [f64; 2],
    /// Set when a density fell below the floor and the interval was widened.
    pub floored: bool,
}

/// Benchmark QTE intervals from estimated densities: the delta-method variance
/// [var(phi_1)/f_1^2 + var(phi_0)/f_0^2]/n at the estimated quantiles, with a Bonferroni
/// critical value over the tau grid.
pub fn estimated_density_delta_band(
    estimate: &CdfProcessEstimate,
    taus: &[f64],
    bandwidths: [f64; 2],
    alpha: f64,
) -> Vec<DensityDeltaInterval> {
    let grid = &estimate.thresholds;
    let n = estimate.n() as f64;
    let z = z_two_sided(alpha / taus.len() as f64);
    let proj = [0, 1].map(|a| isotonic_project_unit(&estimate.arms[a].values));
    let range = grid[grid.len() - 1] - grid[0];
    taus.iter()
        .map(|&tau| {
            let idx = [0, 1].map(|a| first_crossing_index(&proj[a], tau));
            let q = [0, 1].map(|a| grid[idx[a]]);
            let density = [0, 1].map(|a| kernel_density_from_cdf(grid, &proj[a], bandwidths[a], q[a]));
            let qte = q[1] - q[0];
            if density.iter().any(|&f| f < DENSITY_FLOOR) {
                log::warn!("estimated density below {DENSITY_FLOOR} at tau {tau}; interval widened to grid range");
                return DensityDeltaInterval { tau, qte, lower: qte - range, upper: qte + range, density, floored: true };
            }
            let var: f64 = (0..2)
                .map(|a| estimate.arms[a].influence_sd(idx[a]).powi(2) / density[a].powi(2))
                .sum();
            let half = z * (var / n).sqrt();
            DensityDeltaInterval { tau, qte, lower: qte - half, upper: qte + half, density, floored: false }
        })
        .collect()
}
