use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::stats::{quantile_inverse_ecdf, sorted_copy};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiplierLaw {
    #[default]
    Rademacher,
    Normal,
}

/// Draws per parallel work unit.
const CHUNK: usize = 64;

/// Multiplier vector for draw `m`: its own ChaCha stream, so results do not depend on how
/// draws are scheduled.
fn draw(law: MultiplierLaw, seed: u64, m: usize, n: usize) -> impl Iterator<Item = f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(m as u64);
    (0..n).map(move |_| match law {
        MultiplierLaw::Rademacher => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        MultiplierLaw::Normal => rng.sample(StandardNormal),
    })
}

/// Sup statistics max_a max_k |n^{-1/2} sum_i xi_i phi_{a,k}(O_i)|, one per draw.
pub fn multiplier_sup_draws(influence: &[&DMatrix<f64>], draws: usize, law: MultiplierLaw, seed: u64) -> Vec<f64> {
    let n = influence.first().map_or(0, |m| m.nrows());
    assert!(influence.iter().all(|m| m.nrows() == n), "influence matrices must share n");
    let scale = if n == 0 { 0.0 } else { (n as f64).sqrt().recip() };
    let starts: Vec<usize> = (0..draws).step_by(CHUNK).collect();
    starts
        .par_iter()
        .flat_map_iter(|&start| {
            let len = CHUNK.min(draws - start);
            let mut xi = DMatrix::zeros(len, n);
            for r in 0..len {
                for (i, v) in draw(law, seed, start + r, n).enumerate() {
                    xi[(r, i)] = v;
                }
            }
            let mut sup = vec![0.0f64; len];
            for phi in influence {
                let proj = &xi * *phi;
                for (r, s) in sup.iter_mut().enumerate() {
                    *s = proj.row(r).iter().fold(*s, |acc, v| acc.max(v.abs() * scale));
                }
            }
            sup
        })
        .collect()
}

/// Empirical (1 - alpha) quantile (inverse-ECDF) of the multiplier sup statistic.
pub fn multiplier_critical_value(
    influence: &[&DMatrix<f64>],
    draws: usize,
    alpha: f64,
    law: MultiplierLaw,
    seed: u64,
) -> f64 {
    assert!(draws >= 1, "need at least one multiplier draw");
    let sups = sorted_copy(&multiplier_sup_draws(influence, draws, law, seed));
    quantile_inverse_ecdf(&sups, 1.0 - alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn permuted(m: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
        m.select_rows(perm)
    }

    #[test]
    fn zero_process_has_zero_critical_value() {
        let z = DMatrix::zeros(10, 4);
        assert_eq!(multiplier_critical_value(&[&z, &z], 50, 0.05, MultiplierLaw::Rademacher, 3), 0.0);
    }

    #[test]
    fn eight_sign_patterns() {
        let c = -0.7f64;
        let phi = DMatrix::from_element(3, 1, c);
        // Exhaustive: |xi1+xi2+xi3| is 3 for two of eight patterns and 1 otherwise.
        let mut exact: Vec<f64> = (0..8u32)
            .map(|p| (0..3).map(|b| if p >> b & 1 == 1 { 1.0 } else { -1.0 }).sum::<f64>().abs() * c.abs() / 3f64.sqrt())
            .collect();
        exact.sort_by(f64::total_cmp);
        let sups = multiplier_sup_draws(&[&phi], 4000, MultiplierLaw::Rademacher, 11);
        let hi = 3.0 * c.abs() / 3f64.sqrt();
        let lo = c.abs() / 3f64.sqrt();
        assert!(sups.iter().all(|&s| (s - hi).abs() < 1e-12 || (s - lo).abs() < 1e-12));
        let share_hi = sups.iter().filter(|&&s| (s - hi).abs() < 1e-12).count() as f64 / 4000.0;
        assert!((share_hi - 0.25).abs() < 0.03, "{share_hi}");
        for alpha in [0.05, 0.2, 0.3, 0.5] {
            let chat = quantile_inverse_ecdf(&sorted_copy(&sups), 1.0 - alpha);
            assert!((chat - quantile_inverse_ecdf(&exact, 1.0 - alpha)).abs() < 1e-12, "{alpha}");
        }
    }

    #[test]
    fn permutation_invariance_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 40;
        let phi0 = DMatrix::from_fn(n, 6, |_, _| rng.random::<f64>() - 0.5);
        let phi1 = DMatrix::from_fn(n, 6, |_, _| rng.random::<f64>() - 0.5);
        let base = multiplier_sup_draws(&[&phi0, &phi1], 300, MultiplierLaw::Rademacher, 9);
        // Rows and multipliers permuted jointly leave every draw unchanged.
        let perm: Vec<usize> = (0..n).rev().collect();
        let p0 = permuted(&phi0, &perm);
        let p1 = permuted(&phi1, &perm);
        let xi: Vec<Vec<f64>> = (0..300).map(|m| draw(MultiplierLaw::Rademacher, 9, m, n).collect()).collect();
        for (m, s) in base.iter().enumerate() {
            let mut sup = 0.0f64;
            for p in [&p0, &p1] {
                for col in p.column_iter() {
                    let v: f64 = perm.iter().enumerate().map(|(r, &i)| xi[m][i] * col[r]).sum();
                    sup = sup.max(v.abs() / (n as f64).sqrt());
                }
            }
            assert!((sup - s).abs() < 1e-12);
        }
        let c = 2.5;
        let s0 = phi0.scale(c);
        let s1 = phi1.scale(c);
        let a = multiplier_critical_value(&[&phi0, &phi1], 300, 0.05, MultiplierLaw::Normal, 1);
        let b = multiplier_critical_value(&[&s0, &s1], 300, 0.05, MultiplierLaw::Normal, 1);
        assert!((b - c * a).abs() < 1e-12 * b.max(1.0));
    }

    #[test]
    fn deterministic_under_seed() {
        let phi = DMatrix::from_fn(20, 3, |i, j| ((i * 3 + j) as f64).sin());
        let a = multiplier_sup_draws(&[&phi], 200, MultiplierLaw::Rademacher, 4);
        let b = multiplier_sup_draws(&[&phi], 200, MultiplierLaw::Rademacher, 4);
        assert_eq!(a, b);
        // Draw m is the same whichever total count is requested.
        let c = multiplier_sup_draws(&[&phi], 70, MultiplierLaw::Rademacher, 4);
        assert_eq!(&a[..70], &c[..]);
    }
}
