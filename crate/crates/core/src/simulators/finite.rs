use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Binary proximal law without covariates: U -> (Z, W), (U, Z) -> A, (U, W, A) -> Y.
/// Z is independent of (W, Y(a)) given U, and W of (Z, A) given U.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteProximalLaw {
    pub p_u: f64,
    /// P(Z=1 | U=u).
    pub p_z: [f64; 2],
    /// P(W=1 | U=u).
    pub p_w: [f64; 2],
    /// P(A=1 | U=u, Z=z), indexed [u][z].
    pub p_a: [[f64; 2]; 2],
    /// P(Y=1 | U=u, W=w, A=a), indexed [u][w][a].
    pub p_y: [[[f64; 2]; 2]; 2],
}

/// One observed support point with its probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservedCell {
    pub z: u8,
    pub w: u8,
    pub a: u8,
    pub y: u8,
    pub prob: f64,
}

fn bern(p: f64, v: usize) -> f64 {
    if v == 1 {
        p
    } else {
        1.0 - p
    }
}

impl FiniteProximalLaw {
    /// Random law with probabilities in [0.15, 0.85] and proxies kept relevant.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = || rng.random_range(0.15..0.85);
        let mut law = FiniteProximalLaw {
            p_u: p(),
            p_z: [p(), p()],
            p_w: [p(), p()],
            p_a: [[p(), p()], [p(), p()]],
            p_y: [[[p(), p()], [p(), p()]], [[p(), p()], [p(), p()]]],
        };
        // Keep the 2 x 2 moment systems well conditioned.
        for pr in [&mut law.p_z, &mut law.p_w] {
            if (pr[1] - pr[0]).abs() < 0.25 {
                pr[1] = (pr[0] + 0.4).min(0.95);
                if (pr[1] - pr[0]).abs() < 0.25 {
                    pr[1] = pr[0] - 0.4;
                }
            }
        }
        law
    }

    /// The 16 observed (z, w, a, y) points; latent U summed out.
    pub fn observed_cells(&self) -> Vec<ObservedCell> {
        let mut out = Vec::with_capacity(16);
        for z in 0..2 {
            for w in 0..2 {
                for a in 0..2 {
                    for y in 0..2 {
                        let prob: f64 = (0..2)
                            .map(|u| {
                                bern(self.p_u, u)
                                    * bern(self.p_z[u], z)
                                    * bern(self.p_w[u], w)
                                    * bern(self.p_a[u][z], a)
                                    * bern(self.p_y[u][w][a], y)
                            })
                            .sum();
                        out.push(ObservedCell { z: z as u8, w: w as u8, a: a as u8, y: y as u8, prob });
                    }
                }
            }
        }
        out
    }

    /// P(Y(a) <= 0) = P(Y(a) = 0).
    pub fn counterfactual_cdf_at_zero(&self, arm: u8) -> f64 {
        (0..2)
            .map(|u| {
                bern(self.p_u, u) * (0..2).map(|w| bern(self.p_w[u], w) * (1.0 - self.p_y[u][w][arm as usize])).sum::<f64>()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_form_a_distribution() {
        let law = FiniteProximalLaw::random(3);
        let cells = law.observed_cells();
        assert_eq!(cells.len(), 16);
        assert!((cells.iter().map(|c| c.prob).sum::<f64>() - 1.0).abs() < 1e-14);
        let f = law.counterfactual_cdf_at_zero(1);
        assert!(f > 0.0 && f < 1.0);
    }
}
