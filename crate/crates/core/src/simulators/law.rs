use crate::stats::{norm_cdf, norm_pdf};

/// Finite mixture of normals; a zero scale gives a point mass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NormalMixture {
    /// (weight, mean, sd).
    pub components: Vec<(f64, f64, f64)>,
}

impl NormalMixture {
    pub fn push(&mut self, weight: f64, mean: f64, sd: f64) {
        if weight > 0.0 {
            self.components.push((weight, mean, sd));
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.0).sum()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.components
            .iter()
            .map(|&(w, m, s)| w * if s > 0.0 { norm_cdf((y - m) / s) } else { (y >= m) as u8 as f64 })
            .sum()
    }

    /// E(t - Y)_+.
    pub fn shortfall(&self, t: f64) -> f64 {
        self.components
            .iter()
            .map(|&(w, m, s)| {
                if s > 0.0 {
                    let z = (t - m) / s;
                    w * ((t - m) * norm_cdf(z) + s * norm_pdf(z))
                } else {
                    w * (t - m).max(0.0)
                }
            })
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|&(w, m, _)| w * m).sum()
    }

    /// Smallest y with F(y) >= tau, by bisection to machine precision.
    pub fn quantile(&self, tau: f64) -> f64 {
        let spread = self.components.iter().map(|c| c.2).fold(0.0, f64::max) * 40.0 + 1.0;
        let lo0 = self.components.iter().map(|c| c.1).fold(f64::INFINITY, f64::min) - spread;
        let hi0 = self.components.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max) + spread;
        let (mut lo, mut hi) = (lo0, hi0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) >= tau {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Lower-tail CVaR Q(tau) - S(Q(tau))/tau.
    pub fn cvar(&self, tau: f64) -> f64 {
        let q = self.quantile(tau);
        q - self.shortfall(q) / tau
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_values() {
        let mut m = NormalMixture::default();
        m.push(1.0, 0.0, 1.0);
        assert!((m.quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-9);
        // E(-Y)_+ = phi(0) for a standard normal.
        assert!((m.shortfall(0.0) - norm_pdf(0.0)).abs() < 1e-15);
        // CVaR(0.5) = -2 phi(0).
        assert!((m.cvar(0.5) + 2.0 * norm_pdf(0.0)).abs() < 1e-9);
        assert!((m.cvar(1.0) - m.mean()).abs() < 1e-9);
    }

    #[test]
    fn point_mass_law() {
        let mut m = NormalMixture::default();
        m.push(1.0, 2.5, 0.0);
        assert_eq!(m.cdf(2.4), 0.0);
        assert_eq!(m.cdf(2.5), 1.0);
        assert!((m.quantile(0.3) - 2.5).abs() < 1e-12);
        assert!((m.cvar(0.3) - 2.5).abs() < 1e-9);
    }
}
