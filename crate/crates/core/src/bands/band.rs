use serde::{Deserialize, Serialize};

use super::isotonic::isotonic_project_unit;
use super::multiplier::MultiplierLaw;
use crate::estimator::CdfProcessEstimate;
use crate::stats::z_two_sided;

/// Simultaneous CDF bands for both arms on a shared threshold grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSet {
    pub thresholds: Vec<f64>,
    pub critical_value: f64,
    pub alpha: f64,
    pub multipliers: usize,
    pub law: MultiplierLaw,
    pub n: usize,
    /// Raw one-step curves the band is centered on.
    pub center: [Vec<f64>; 2],
    pub lower: [Vec<f64>; 2],
    pub upper: [Vec<f64>; 2],
}

impl BandSet {
    pub fn half_width(&self) -> f64 {
        self.critical_value / (self.n as f64).sqrt()
    }

    /// True if `curve` lies inside arm `arm`'s band at every grid point.
    pub fn contains(&self, arm: u8, curve: &[f64]) -> bool {
        let a = arm as usize;
        curve.iter().enumerate().all(|(k, &f)| self.lower[a][k] <= f && f <= self.upper[a][k])
    }
}

/// L = F - c/sqrt(n) and U = F + c/sqrt(n), both clipped to [0, 1].
pub fn cdf_band(
    estimate: &CdfProcessEstimate,
    critical_value: f64,
    alpha: f64,
    multipliers: usize,
    law: MultiplierLaw,
) -> BandSet {
    assert!(critical_value >= 0.0);
    let n = estimate.n();
    let half = critical_value / (n as f64).sqrt();
    let center = [0, 1].map(|a| estimate.arms[a].values.clone());
    let lower = [0, 1].map(|a| center[a].iter().map(|f| (f - half).clamp(0.0, 1.0)).collect());
    let upper = [0, 1].map(|a| center[a].iter().map(|f| (f + half).clamp(0.0, 1.0)).collect());
    BandSet {
        thresholds: estimate.thresholds.clone(),
        critical_value,
        alpha,
        multipliers,
        law,
        n,
        center,
        lower,
        upper,
    }
}

fn running_max(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(f64::NEG_INFINITY, |m, &x| {
            *m = m.max(x);
            Some(*m)
        })
        .collect()
}

/// Running maxima of both band edges. Preserves pointwise containment of any monotone curve.
pub fn monotone_envelope(band: &BandSet) -> BandSet {
    BandSet {
        lower: [0, 1].map(|a| running_max(&band.lower[a])),
        upper: [0, 1].map(|a| running_max(&band.upper[a])),
        ..band.clone()
    }
}

/// inf{grid y : curve(y) >= tau}, or the last grid point when the set is empty.
pub fn first_crossing(grid: &[f64], curve: &[f64], tau: f64) -> f64 {
    let k = curve.iter().position(|&f| f >= tau).unwrap_or(grid.len() - 1);
    grid[k]
}

/// Grid index of the first crossing (last index when none).
pub fn first_crossing_index(curve: &[f64], tau: f64) -> usize {
    curve.iter().position(|&f| f >= tau).unwrap_or(curve.len() - 1)
}

/// Quantile and QTE bands from a CDF band by first-crossing inversion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileBands {
    pub taus: Vec<f64>,
    pub lower: [Vec<f64>; 2],
    pub upper: [Vec<f64>; 2],
    pub qte_lower: Vec<f64>,
    pub qte_upper: Vec<f64>,
}

impl QuantileBands {
    /// True if every `qte[t]` lies in its band.
    pub fn contains_qte(&self, qte: &[f64]) -> bool {
        qte.iter().enumerate().all(|(t, &d)| self.qte_lower[t] <= d && d <= self.qte_upper[t])
    }
}

/// Q^L = first y with U >= tau, Q^U = first y with L >= tau (last grid point if none);
/// QTE bands Q^L_1 - Q^U_0 and Q^U_1 - Q^L_0.
pub fn invert_band(band: &BandSet, taus: &[f64]) -> QuantileBands {
    let grid = &band.thresholds;
    let lower = [0, 1].map(|a| taus.iter().map(|&t| first_crossing(grid, &band.upper[a], t)).collect::<Vec<_>>());
    let upper = [0, 1].map(|a| taus.iter().map(|&t| first_crossing(grid, &band.lower[a], t)).collect::<Vec<_>>());
    let qte_lower = lower[1].iter().zip(&upper[0]).map(|(l1, u0)| l1 - u0).collect();
    let qte_upper = upper[1].iter().zip(&lower[0]).map(|(u1, l0)| u1 - l0).collect();
    QuantileBands { taus: taus.to_vec(), lower, upper, qte_lower, qte_upper }
}

/// Quantile point estimates inf{y : F~(y) >= tau} on the isotonic projection of each arm.
pub fn quantile_estimates(estimate: &CdfProcessEstimate, taus: &[f64]) -> [Vec<f64>; 2] {
    [0, 1].map(|a| {
        let proj = isotonic_project_unit(&estimate.arms[a].values);
        taus.iter().map(|&t| first_crossing(&estimate.thresholds, &proj, t)).collect()
    })
}

/// F(y_k) +/- z sd(phi_k)/sqrt(n), clipped to [0, 1].
pub fn pointwise_interval(estimate: &CdfProcessEstimate, arm: u8, k: usize, alpha: f64) -> (f64, f64) {
    let curve = &estimate.arms[arm as usize];
    let half = z_two_sided(alpha) * curve.influence_sd(k) / (curve.n() as f64).sqrt();
    let f = curve.values[k];
    ((f - half).max(0.0), (f + half).min(1.0))
}
