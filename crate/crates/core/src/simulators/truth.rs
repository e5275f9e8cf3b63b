use serde::{Deserialize, Serialize};

use super::dgp::ProximalDgp;
use super::seeding::replication_rng;
use crate::stats::{quantile_inverse_ecdf, sorted_copy};

/// How the truth was computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum TruthSource {
    /// Enumeration over the discrete latent cells with closed-form normal-mixture laws.
    Exact,
    MonteCarlo { n_truth: usize, seed: u64 },
}

/// Counterfactual CDF, quantiles and lower-tail CVaR per arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    pub thresholds: Vec<f64>,
    pub cdf: [Vec<f64>; 2],
    pub taus: Vec<f64>,
    pub quantiles: [Vec<f64>; 2],
    pub cvar_taus: Vec<f64>,
    pub cvar: [Vec<f64>; 2],
    pub source: TruthSource,
}

impl TruthTable {
    pub fn qte(&self) -> Vec<f64> {
        self.quantiles[1].iter().zip(&self.quantiles[0]).map(|(a, b)| a - b).collect()
    }

    pub fn cvar_effect(&self) -> Vec<f64> {
        self.cvar[1].iter().zip(&self.cvar[0]).map(|(a, b)| a - b).collect()
    }
}

/// Equally spaced quantile levels of the pooled counterfactual law over [0.005, 0.995].
pub fn truth_grid(dgp: &ProximalDgp, k: usize) -> Vec<f64> {
    assert!(k >= 2);
    let pooled = dgp.pooled_law();
    (0..k).map(|i| pooled.quantile(0.005 + 0.99 * i as f64 / (k - 1) as f64)).collect()
}

pub fn exact_truth(dgp: &ProximalDgp, thresholds: &[f64], taus: &[f64], cvar_taus: &[f64]) -> TruthTable {
    let laws = [0, 1].map(|a| dgp.counterfactual_law(a));
    TruthTable {
        thresholds: thresholds.to_vec(),
        cdf: [0, 1].map(|a| thresholds.iter().map(|&y| laws[a].cdf(y)).collect()),
        taus: taus.to_vec(),
        quantiles: [0, 1].map(|a| taus.iter().map(|&t| laws[a].quantile(t)).collect()),
        cvar_taus: cvar_taus.to_vec(),
        cvar: [0, 1].map(|a| cvar_taus.iter().map(|&t| laws[a].cvar(t)).collect()),
        source: TruthSource::Exact,
    }
}

/// Empirical CDF, inverse-ECDF quantiles and mean of the lowest ceil(tau N) draws.
pub fn truth_from_draws(draws: [&[f64]; 2], thresholds: &[f64], taus: &[f64], cvar_taus: &[f64], source: TruthSource) -> TruthTable {
    let sorted = draws.map(sorted_copy);
    let ecdf = |s: &[f64], y: f64| s.partition_point(|&v| v <= y) as f64 / s.len() as f64;
    let cvar = |s: &[f64], t: f64| {
        let m = ((t * s.len() as f64 - 1e-9).ceil() as usize).clamp(1, s.len());
        s[..m].iter().sum::<f64>() / m as f64
    };
    TruthTable {
        thresholds: thresholds.to_vec(),
        cdf: [0, 1].map(|a| thresholds.iter().map(|&y| ecdf(&sorted[a], y)).collect()),
        taus: taus.to_vec(),
        quantiles: [0, 1].map(|a| taus.iter().map(|&t| quantile_inverse_ecdf(&sorted[a], t)).collect()),
        cvar_taus: cvar_taus.to_vec(),
        cvar: [0, 1].map(|a| cvar_taus.iter().map(|&t| cvar(&sorted[a], t)).collect()),
        source,
    }
}

/// Monte Carlo truth from `n_truth` potential-outcome draws.
pub fn truth_oracle(
    dgp: &ProximalDgp,
    thresholds: &[f64],
    taus: &[f64],
    cvar_taus: &[f64],
    n_truth: usize,
    seed: u64,
) -> TruthTable {
    assert!(n_truth >= 10_000, "truth oracle needs at least 1e4 draws");
    let draw = dgp.generate(n_truth, &mut replication_rng(seed, 0, 0));
    truth_from_draws(
        [&draw.oracle.y0, &draw.oracle.y1],
        thresholds,
        taus,
        cvar_taus,
        TruthSource::MonteCarlo { n_truth, seed },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monotone(t: &TruthTable) -> bool {
        (0..2).all(|a| {
            t.cdf[a].windows(2).all(|w| w[0] <= w[1])
                && t.cdf[a].iter().all(|&f| (0.0..=1.0).contains(&f))
                && t.quantiles[a].windows(2).all(|w| w[0] <= w[1])
                && t.cvar_taus.iter().enumerate().all(|(j, &tau)| {
                    let q = t.taus.iter().position(|&s| s == tau).map(|k| t.quantiles[a][k]);
                    q.is_none_or(|q| t.cvar[a][j] <= q + 1e-12)
                })
        })
    }

    #[test]
    fn constant_outcome() {
        let c = [1.5; 100];
        let t = truth_from_draws([&c, &c], &[1.0, 1.5, 2.0], &[0.1, 0.9], &[0.5], TruthSource::Exact);
        assert_eq!(t.cdf[0], vec![0.0, 1.0, 1.0]);
        assert_eq!(t.quantiles[1], vec![1.5, 1.5]);
        assert_eq!(t.cvar[0], vec![1.5]);
    }

    #[test]
    fn uniform_draws() {
        let n = 200_000;
        let u: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let t = truth_from_draws([&u, &u], &[0.5], &[0.5], &[0.5], TruthSource::Exact);
        assert!((t.quantiles[0][0] - 0.5).abs() < 1e-4);
        assert!((t.cvar[0][0] - 0.25).abs() < 1e-4);
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        for dgp in [ProximalDgp::component1(0.75), ProximalDgp::component3()] {
            let grid = truth_grid(&dgp, 41);
            let taus = [0.1, 0.25, 0.5, 0.75, 0.9];
            let ct = [0.25, 0.5, 0.75];
            let exact = exact_truth(&dgp, &grid, &taus, &ct);
            let mc = truth_oracle(&dgp, &grid, &taus, &ct, 400_000, 5);
            assert!(monotone(&exact) && monotone(&mc));
            for a in 0..2 {
                for (e, m) in exact.cdf[a].iter().zip(&mc.cdf[a]) {
                    assert!((e - m).abs() < 4.0 * (e * (1.0 - e) / 400_000.0).sqrt() + 1e-6, "{e} {m}");
                }
                for (e, m) in exact.cvar[a].iter().zip(&mc.cvar[a]) {
                    assert!((e - m).abs() < 0.01, "{e} {m}");
                }
                for (e, m) in exact.quantiles[a].iter().zip(&mc.quantiles[a]) {
                    assert!((e - m).abs() < 0.02, "{e} {m}");
                }
            }
        }
    }

    #[test]
    fn grid_spans_pooled_quantiles() {
        let dgp = ProximalDgp::component1(0.75);
        let g = truth_grid(&dgp, 151);
        assert_eq!(g.len(), 151);
        let pooled = dgp.pooled_law();
        assert!((pooled.cdf(g[0]) - 0.005).abs() < 1e-9);
        assert!((pooled.cdf(g[150]) - 0.995).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
