use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::seeding::{replication_rng, with_pool};
use crate::bridge::picard_partial_sums;
use crate::stats::{mean, ols_slope};

/// How the truncation level m is chosen at each n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum TruncationRule {
    /// Minimize the closed-form squared bias plus variance over m = 1..=J.
    OracleMse,
    Fixed { m: usize },
}

/// Gaussian sequence benchmark: s_j = j^-alpha, l_j = j^-rho_l, theta_j = R_beta j^{-beta-1/2}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussBenchConfig {
    pub alpha: f64,
    pub beta: f64,
    /// One regime per target-smoothness exponent rho_l.
    pub regimes: Vec<f64>,
    pub j_max: usize,
    pub r_beta: f64,
    pub sample_sizes: Vec<usize>,
    pub reps: usize,
    pub rule: TruncationRule,
    pub seed: u64,
}

impl Default for GaussBenchConfig {
    fn default() -> Self {
        GaussBenchConfig {
            alpha: 1.0,
            beta: 1.0,
            regimes: vec![1.8, 1.5, 0.8],
            j_max: 400,
            r_beta: 1.0,
            sample_sizes: vec![500, 1000, 2000, 4000, 8000, 16000, 32000],
            reps: 3000,
            rule: TruncationRule::OracleMse,
            seed: 20_240_601,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PicardStatus {
    Finite,
    LogDivergent,
    PolyDivergent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussRow {
    pub n: usize,
    pub m_star: usize,
    /// Closed-form truncation bias sum_{j>m} l_j theta_j.
    pub truncation_bias: f64,
    /// Closed-form variance n^-1 sum_{j<=m} l_j^2 / s_j^2.
    pub variance: f64,
    pub mc_bias: f64,
    pub mc_variance: f64,
    pub mc_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussRegime {
    pub rho_l: f64,
    pub status: PicardStatus,
    /// Rate exponent: 1 when rho_l >= alpha + 1/2, else (2 beta + 2 rho_l - 1)/(2 alpha + 2 beta).
    pub theory_exponent: f64,
    /// Minus the OLS slope of log MC MSE on log n.
    pub empirical_exponent: f64,
    pub rows: Vec<GaussRow>,
    /// sum_{j<=m} l_j^2/s_j^2 for m = 1..=J.
    pub picard_sums: Vec<f64>,
}

pub struct Sequence {
    pub s: Vec<f64>,
    pub l: Vec<f64>,
    pub theta: Vec<f64>,
}

impl Sequence {
    pub fn new(cfg: &GaussBenchConfig, rho_l: f64) -> Self {
        let js = || (1..=cfg.j_max).map(|j| j as f64);
        Sequence {
            s: js().map(|j| j.powf(-cfg.alpha)).collect(),
            l: js().map(|j| j.powf(-rho_l)).collect(),
            theta: js().map(|j| cfg.r_beta * j.powf(-cfg.beta - 0.5)).collect(),
        }
    }

    pub fn bias(&self, m: usize) -> f64 {
        self.l[m..].iter().zip(&self.theta[m..]).map(|(l, t)| l * t).sum()
    }

    pub fn variance(&self, m: usize, n: usize) -> f64 {
        self.l[..m].iter().zip(&self.s[..m]).map(|(l, s)| (l / s).powi(2)).sum::<f64>() / n as f64
    }

    /// Argmin of bias^2 + variance over m = 1..=J; ties go to the smaller m.
    pub fn oracle_m(&self, n: usize) -> usize {
        (1..=self.s.len())
            .map(|m| (m, self.bias(m).powi(2) + self.variance(m, n)))
            .fold((1, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
            .0
    }
}

pub fn picard_status(alpha: f64, rho_l: f64) -> PicardStatus {
    let edge = alpha + 0.5;
    if (rho_l - edge).abs() < 1e-12 {
        PicardStatus::LogDivergent
    } else if rho_l > edge {
        PicardStatus::Finite
    } else {
        PicardStatus::PolyDivergent
    }
}

pub fn gaussian_bench(cfg: &GaussBenchConfig) -> Vec<GaussRegime> {
    cfg.regimes
        .iter()
        .enumerate()
        .map(|(ri, &rho_l)| {
            let seq = Sequence::new(cfg, rho_l);
            let target: f64 = seq.l.iter().zip(&seq.theta).map(|(l, t)| l * t).sum();
            let rows: Vec<GaussRow> = cfg
                .sample_sizes
                .iter()
                .map(|&n| {
                    let m = match cfg.rule {
                        TruncationRule::OracleMse => seq.oracle_m(n),
                        TruncationRule::Fixed { m } => m.clamp(1, cfg.j_max),
                    };
                    let tag = (ri as u64) << 40 | n as u64;
                    let errors: Vec<f64> = with_pool(|| {
                        (0..cfg.reps)
                            .into_par_iter()
                            .map(|r| {
                                let mut rng = replication_rng(cfg.seed, tag, r as u64);
                                let noise = (n as f64).sqrt().recip();
                                let est: f64 = (0..m)
                                    .map(|j| {
                                        let xi: f64 = rng.sample(StandardNormal);
                                        let x = seq.s[j] * seq.theta[j] + noise * xi;
                                        seq.l[j] / seq.s[j] * x
                                    })
                                    .sum();
                                est - target
                            })
                            .collect()
                    });
                    let mc_bias = mean(&errors);
                    let mc_variance = errors.iter().map(|e| (e - mc_bias).powi(2)).sum::<f64>() / (errors.len() - 1).max(1) as f64;
                    let mc_mse = errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64;
                    GaussRow {
                        n,
                        m_star: m,
                        truncation_bias: seq.bias(m),
                        variance: seq.variance(m, n),
                        mc_bias,
                        mc_variance,
                        mc_mse,
                    }
                })
                .collect();
            let log_n: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
            let log_mse: Vec<f64> = rows.iter().map(|r| r.mc_mse.ln()).collect();
            let status = picard_status(cfg.alpha, rho_l);
            let theory_exponent = match status {
                PicardStatus::PolyDivergent => (2.0 * cfg.beta + 2.0 * rho_l - 1.0) / (2.0 * cfg.alpha + 2.0 * cfg.beta),
                _ => 1.0,
            };
            GaussRegime {
                rho_l,
                status,
                theory_exponent,
                empirical_exponent: if rows.len() >= 2 { -ols_slope(&log_n, &log_mse) } else { f64::NAN },
                picard_sums: picard_partial_sums(&seq.s, &seq.l),
                rows,
            }
        })
        .collect()
}
