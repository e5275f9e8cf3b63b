use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::onestep::ShortfallEstimate;
use super::{EstimateError, Result};
use crate::stats::z_two_sided;

/// Lower-tail CVaR of one arm at one level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvarArm {
    pub tau: f64,
    /// Maximizer of t - S(t)/tau over the search grid.
    pub q_hat: f64,
    pub shortfall_at_max: f64,
    pub c_hat: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    /// True when the maximizer is the first or last search point.
    pub at_boundary: bool,
    #[serde(skip)]
    pub influence: DVector<f64>,
}

/// CVaR contrast C_1(tau) - C_0(tau) with a Wald interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvarEffect {
    pub tau: f64,
    pub delta: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvarEstimate {
    pub alpha: f64,
    pub arms: [Vec<CvarArm>; 2],
    pub effects: Vec<CvarEffect>,
}

fn sd(v: &DVector<f64>) -> f64 {
    (v.norm_squared() / v.len() as f64).sqrt()
}

/// C_a(tau) = max over the search levels of t - S_a(t)/tau; influence -eta/tau at the
/// maximizer; Wald intervals C +/- z sd(chi)/sqrt(n).
///
/// `search` restricts the search to level indices `[lo, hi)`; `None` uses every level.
pub fn cvar_estimate(
    shortfall: &ShortfallEstimate,
    taus: &[f64],
    alpha: f64,
    search: Option<(usize, usize)>,
) -> Result<CvarEstimate> {
    let levels = &shortfall.levels;
    let (lo, hi) = search.unwrap_or((0, levels.len()));
    if lo >= hi || hi > levels.len() {
        return Err(EstimateError::EmptySearchGrid);
    }
    if let Some(&t) = taus.iter().find(|&&t| !(t > 0.0 && t <= 1.0)) {
        return Err(EstimateError::BadLevel(t));
    }
    let n = shortfall.n() as f64;
    let z = z_two_sided(alpha);
    let arms = [0usize, 1].map(|arm| {
        let curve = &shortfall.arms[arm];
        taus.iter()
            .map(|&tau| {
                let (k, c_hat) = (lo..hi)
                    .map(|k| (k, levels[k] - curve.values[k] / tau))
                    .fold((lo, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
                let at_boundary = (k == lo || k + 1 == hi) && hi - lo > 1;
                if at_boundary {
                    log::warn!("CVaR maximizer for arm {arm}, tau {tau} sits on the search boundary; enlarge search grid");
                }
                let influence = curve.influence.column(k) * (-1.0 / tau);
                let se = sd(&influence) / n.sqrt();
                CvarArm {
                    tau,
                    q_hat: levels[k],
                    shortfall_at_max: curve.values[k],
                    c_hat,
                    se,
                    lower: c_hat - z * se,
                    upper: c_hat + z * se,
                    at_boundary,
                    influence,
                }
            })
            .collect::<Vec<_>>()
    });
    let effects = arms[1]
        .iter()
        .zip(&arms[0])
        .map(|(c1, c0)| {
            let delta = c1.c_hat - c0.c_hat;
            let se = sd(&(&c1.influence - &c0.influence)) / n.sqrt();
            CvarEffect { tau: c1.tau, delta, se, lower: delta - z * se, upper: delta + z * se }
        })
        .collect();
    Ok(CvarEstimate { alpha, arms, effects })
}
