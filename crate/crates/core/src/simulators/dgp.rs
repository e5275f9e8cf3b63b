use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::law::NormalMixture;
use crate::data::{Block, Dataset};
use crate::stats::expit;

/// Outcome noise: sigma(X) = base + x1 X1 + x2 X2 scales a standard normal or mixture draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "noise", rename_all = "lowercase")]
pub enum NoiseLaw {
    Gaussian {
        sigma: [f64; 3],
    },
    /// epsilon | R=r ~ N(offsets[r], sigma(X)^2 scales[r]^2).
    Mixture {
        sigma: [f64; 3],
        probs: Vec<f64>,
        offsets: Vec<f64>,
        scales: Vec<f64>,
    },
}

impl NoiseLaw {
    fn sigma_coefs(&self) -> [f64; 3] {
        match self {
            NoiseLaw::Gaussian { sigma } | NoiseLaw::Mixture { sigma, .. } => *sigma,
        }
    }

    pub fn sigma(&self, x1: f64, x2: f64) -> f64 {
        let [b, c1, c2] = self.sigma_coefs();
        b + c1 * x1 + c2 * x2
    }

    fn draw(&self, rng: &mut ChaCha8Rng, x1: f64, x2: f64) -> f64 {
        let s = self.sigma(x1, x2);
        let e: f64 = rng.sample(StandardNormal);
        match self {
            NoiseLaw::Gaussian { .. } => s * e,
            NoiseLaw::Mixture { probs, offsets, scales, .. } => {
                let r = pick(rng.random::<f64>(), probs);
                offsets[r] + s * scales[r] * e
            }
        }
    }

    /// Adds the law of mean + noise (given X) with total weight `weight` to `out`.
    pub fn add_shifted(&self, out: &mut NormalMixture, weight: f64, mean: f64, x1: f64, x2: f64) {
        let s = self.sigma(x1, x2);
        match self {
            NoiseLaw::Gaussian { .. } => out.push(weight, mean, s),
            NoiseLaw::Mixture { probs, offsets, scales, .. } => {
                for r in 0..probs.len() {
                    out.push(weight * probs[r], mean + offsets[r], s * scales[r]);
                }
            }
        }
    }
}

fn pick(u: f64, probs: &[f64]) -> usize {
    let mut acc = 0.0;
    for (r, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return r;
        }
    }
    probs.len() - 1
}

/// Binary latent-confounder proximal design with binary X, Z, W, A.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProximalDgp {
    /// Proxy relevance multiplying U_c in the Z and W models.
    pub rho: f64,
    pub noise: NoiseLaw,
}

impl ProximalDgp {
    pub fn component1(rho: f64) -> Self {
        ProximalDgp { rho, noise: NoiseLaw::Gaussian { sigma: [0.70, 0.10, 0.05] } }
    }

    pub fn component3() -> Self {
        ProximalDgp {
            rho: 0.75,
            noise: NoiseLaw::Mixture {
                sigma: [0.62, 0.09, 0.05],
                probs: vec![0.45, 0.35, 0.20],
                offsets: vec![-0.58, 0.05, 1.48],
                scales: vec![0.08, 0.35, 0.07],
            },
        }
    }

    pub fn p_u(&self, x1: f64, x2: f64) -> f64 {
        expit(-0.25 + 0.55 * x1 - 0.35 * x2)
    }

    pub fn p_z(&self, u: f64, x1: f64, x2: f64) -> f64 {
        expit(-0.15 + 2.2 * self.rho * (2.0 * u - 1.0) + 0.25 * x1 - 0.15 * x2)
    }

    pub fn p_w(&self, u: f64, x1: f64, x2: f64) -> f64 {
        expit(0.10 + 2.2 * self.rho * (2.0 * u - 1.0) - 0.20 * x1 + 0.20 * x2)
    }

    pub fn p_a(&self, u: f64, z: f64, x1: f64, x2: f64) -> f64 {
        expit(-0.20 + 0.80 * (2.0 * u - 1.0) + 0.45 * z + 0.25 * x1 - 0.20 * x2)
    }

    /// Noise-free part of Y(a).
    pub fn outcome_mean(&self, a: f64, x1: f64, x2: f64, u: f64, w: f64) -> f64 {
        0.35 * a + 0.35 * x1 - 0.25 * x2 + 0.75 * u + 0.25 * w + 0.20 * a * u + 0.15 * a * x1
    }

    /// Law of Y(a) given (X, U, W) added to `out` with weight `weight`.
    #[allow(clippy::too_many_arguments)]
    pub fn add_outcome_law(&self, out: &mut NormalMixture, weight: f64, a: u8, x1: f64, x2: f64, u: f64, w: f64) {
        let m = self.outcome_mean(a as f64, x1, x2, u, w);
        self.noise.add_shifted(out, weight, m, x1, x2);
    }

    /// Enumerates (x1, x2, u, w) with their joint probabilities.
    pub fn latent_cells(&self) -> Vec<([f64; 4], f64)> {
        let mut cells = Vec::with_capacity(16);
        for x1 in [0.0, 1.0] {
            for x2 in [0.0, 1.0] {
                let pu = self.p_u(x1, x2);
                for u in [0.0, 1.0] {
                    let pu_v = if u == 1.0 { pu } else { 1.0 - pu };
                    let pw = self.p_w(u, x1, x2);
                    for w in [0.0, 1.0] {
                        let pw_v = if w == 1.0 { pw } else { 1.0 - pw };
                        cells.push(([x1, x2, u, w], 0.25 * pu_v * pw_v));
                    }
                }
            }
        }
        cells
    }

    /// Exact law of Y(a).
    pub fn counterfactual_law(&self, a: u8) -> NormalMixture {
        let mut out = NormalMixture::default();
        for ([x1, x2, u, w], p) in self.latent_cells() {
            self.add_outcome_law(&mut out, p, a, x1, x2, u, w);
        }
        out
    }

    /// Equal-weight mixture of both counterfactual laws.
    pub fn pooled_law(&self) -> NormalMixture {
        let mut out = NormalMixture::default();
        for a in 0..2 {
            for &(w, m, s) in &self.counterfactual_law(a).components {
                out.push(0.5 * w, m, s);
            }
        }
        out
    }

    pub fn generate(&self, n: usize, rng: &mut ChaCha8Rng) -> SimDraw {
        let mut cols = [(); 7].map(|_| Vec::with_capacity(n));
        let (mut a_col, mut y_col) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let x1 = rng.random::<bool>() as u8 as f64;
            let x2 = rng.random::<bool>() as u8 as f64;
            let bern = |rng: &mut ChaCha8Rng, p: f64| (rng.random::<f64>() < p) as u8 as f64;
            let u = bern(rng, self.p_u(x1, x2));
            let z = bern(rng, self.p_z(u, x1, x2));
            let w = bern(rng, self.p_w(u, x1, x2));
            let a = bern(rng, self.p_a(u, z, x1, x2));
            let y0 = self.outcome_mean(0.0, x1, x2, u, w) + self.noise.draw(rng, x1, x2);
            let y1 = self.outcome_mean(1.0, x1, x2, u, w) + self.noise.draw(rng, x1, x2);
            for (c, v) in cols.iter_mut().zip([x1, x2, u, z, w, y0, y1]) {
                c.push(v);
            }
            a_col.push(a as u8);
            y_col.push(if a == 1.0 { y1 } else { y0 });
        }
        let [x1, x2, u, z, w, y0, y1] = cols;
        let data = Dataset::new(
            y_col,
            a_col,
            Block::numeric(vec!["z".into()], vec![z]),
            Block::numeric(vec!["w".into()], vec![w]),
            Block::numeric(vec!["x1".into(), "x2".into()], vec![x1, x2]),
        )
        .expect("generated blocks have matching lengths");
        SimDraw { data, oracle: OracleChannel { u, y0, y1 } }
    }
}

/// Hidden quantities kept out of the analyst-visible dataset.
#[derive(Clone, Debug)]
pub struct OracleChannel {
    pub u: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SimDraw {
    pub data: Dataset,
    pub oracle: OracleChannel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dgp1Config {
    pub rho: f64,
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dgp3Config {
    pub n: usize,
    pub seed: u64,
}

pub fn gen_component1(cfg: &Dgp1Config) -> SimDraw {
    assert!(cfg.rho > 0.0 && cfg.rho <= 1.0, "rho must lie in (0, 1]");
    ProximalDgp::component1(cfg.rho).generate(cfg.n, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

pub fn gen_component3(cfg: &Dgp3Config) -> SimDraw {
    ProximalDgp::component3().generate(cfg.n, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}
