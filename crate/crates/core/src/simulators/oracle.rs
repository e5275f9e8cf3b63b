use nalgebra::{DMatrix, DVector};

use super::dgp::ProximalDgp;
use super::law::NormalMixture;
use crate::bridge::{solve_square, BridgeFit, MomentSystem, DEFAULT_CONDITION_CAP};
use crate::data::{build_basis, BasisSpec, Block, Dataset};
use crate::estimator::{scores_from_nuisances, ArmCurve, CdfProcessEstimate, Functional, Method, Score, ShortfallEstimate};

/// True bridges of a proximal design in a basis that represents them exactly, from
/// population moments computed by enumeration.
#[derive(Clone, Debug)]
pub struct PopulationBridges {
    pub basis_w: BasisSpec,
    pub basis_z: BasisSpec,
    pub thresholds: Vec<f64>,
    pub levels: Vec<f64>,
    pub fits: [BridgeFit; 2],
}

/// The 16 (z, w, x1, x2) support points as a dataset; row index = 8z + 4w + 2x1 + x2.
fn support() -> Dataset {
    let bit = |b: usize| (0..16).map(|i| (i >> b & 1) as f64).collect::<Vec<_>>();
    Dataset::new(
        vec![0.0; 16],
        vec![0; 16],
        Block::numeric(vec!["z".into()], vec![bit(3)]),
        Block::numeric(vec!["w".into()], vec![bit(2)]),
        Block::numeric(vec!["x1".into(), "x2".into()], vec![bit(1), bit(0)]),
    )
    .expect("support blocks are consistent")
}

pub fn population_bridges(
    dgp: &ProximalDgp,
    basis_w: &BasisSpec,
    basis_z: &BasisSpec,
    thresholds: &[f64],
    levels: &[f64],
) -> crate::bridge::Result<PopulationBridges> {
    let sup = support();
    let bw = build_basis(basis_w, &sup).map_err(|e| crate::bridge::BridgeError::Shape(e.to_string()))?;
    let bz = build_basis(basis_z, &sup).map_err(|e| crate::bridge::BridgeError::Shape(e.to_string()))?;
    let (dw, dz) = (bw.ncols(), bz.ncols());
    let fits = [0u8, 1].map(|arm| {
        let mut sigma = DMatrix::zeros(dz, dw);
        let mut gamma = DMatrix::zeros(dz, thresholds.len());
        let mut rho = DMatrix::zeros(dz, levels.len());
        let mut mu_w = DVector::zeros(dw);
        let mut arm_share = 0.0;
        for ([x1, x2, u, w], p_cell) in dgp.latent_cells() {
            let pz = dgp.p_z(u, x1, x2);
            let mut law = NormalMixture::default();
            dgp.add_outcome_law(&mut law, 1.0, arm, x1, x2, u, w);
            let cdf: Vec<f64> = thresholds.iter().map(|&y| law.cdf(y)).collect();
            let sf: Vec<f64> = levels.iter().map(|&t| law.shortfall(t)).collect();
            for z in [0.0, 1.0] {
                let p_zc = p_cell * if z == 1.0 { pz } else { 1.0 - pz };
                let pa1 = dgp.p_a(u, z, x1, x2);
                let p = p_zc * if arm == 1 { pa1 } else { 1.0 - pa1 };
                let row = 8 * z as usize + 4 * w as usize + 2 * x1 as usize + x2 as usize;
                let bzr = bz.row(row).transpose();
                let bwr = bw.row(row).transpose();
                mu_w.axpy(p_zc, &bwr, 1.0);
                sigma += &bzr * bwr.transpose() * p;
                for (k, f) in cdf.iter().enumerate() {
                    gamma.column_mut(k).axpy(p * f, &bzr, 1.0);
                }
                for (l, s) in sf.iter().enumerate() {
                    rho.column_mut(l).axpy(p * s, &bzr, 1.0);
                }
                arm_share += p;
            }
        }
        let ms = MomentSystem {
            arm,
            sigma,
            gamma,
            rho,
            mu_w,
            thresholds: thresholds.to_vec(),
            levels: levels.to_vec(),
            n_rows: 0,
            arm_share,
        };
        solve_square(&ms, DEFAULT_CONDITION_CAP)
    });
    let [f0, f1] = fits;
    Ok(PopulationBridges {
        basis_w: basis_w.clone(),
        basis_z: basis_z.clone(),
        thresholds: thresholds.to_vec(),
        levels: levels.to_vec(),
        fits: [f0?, f1?],
    })
}

impl PopulationBridges {
    /// One-step curves with the true bridges plugged in (no estimation error in nuisances).
    pub fn estimates(&self, data: &Dataset) -> crate::data::Result<(CdfProcessEstimate, ShortfallEstimate)> {
        let bw = build_basis(&self.basis_w, data)?;
        let bz = build_basis(&self.basis_z, data)?;
        let cdf_arms = [0u8, 1].map(|arm| {
            let fit = &self.fits[arm as usize];
            let s = scores_from_nuisances(
                Score::Pdr,
                Functional::Indicator,
                &data.y,
                &data.a,
                arm,
                &self.thresholds,
                &fit.primal_values(&bw),
                &fit.dual_values(&bz),
            );
            ArmCurve::from_scores(s)
        });
        let sf_arms = [0u8, 1].map(|arm| {
            let fit = &self.fits[arm as usize];
            let s = scores_from_nuisances(
                Score::Pdr,
                Functional::Shortfall,
                &data.y,
                &data.a,
                arm,
                &self.levels,
                &fit.shortfall_values(&bw),
                &fit.dual_values(&bz),
            );
            ArmCurve::from_scores(s)
        });
        Ok((
            CdfProcessEstimate { thresholds: self.thresholds.clone(), arms: cdf_arms, method: Method::Oracle },
            ShortfallEstimate { levels: self.levels.clone(), arms: sf_arms, method: Method::Oracle },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BasisKind, Side};

    #[test]
    fn population_bridges_reproduce_counterfactual_cdf() {
        let dgp = ProximalDgp::component1(0.75);
        let bw = BasisSpec::new(BasisKind::Multilinear { order: 3 }, Side::W);
        let bz = BasisSpec::new(BasisKind::Multilinear { order: 3 }, Side::Z);
        let grid = [-0.5, 0.3, 1.1];
        let levels = [0.0, 0.8];
        let pb = population_bridges(&dgp, &bw, &bz, &grid, &levels).unwrap();
        let sup = support();
        let bws = build_basis(&bw, &sup).unwrap();
        let bzs = build_basis(&bz, &sup).unwrap();
        for arm in 0..2u8 {
            let law = dgp.counterfactual_law(arm);
            let fit = &pb.fits[arm as usize];
            let h = fit.primal_values(&bws);
            let r = fit.shortfall_values(&bws);
            let q = fit.dual_values(&bzs);
            // Primal: E h(W, X); dual: E 1(A=a) q(Z, X) B.
            let (mut primal, mut dual, mut sf) = (vec![0.0; 3], vec![0.0; 3], vec![0.0; 2]);
            for ([x1, x2, u, w], pc) in dgp.latent_cells() {
                let mut cell = NormalMixture::default();
                dgp.add_outcome_law(&mut cell, 1.0, arm, x1, x2, u, w);
                for z in [0.0, 1.0] {
                    let pz = dgp.p_z(u, x1, x2);
                    let p = pc * if z == 1.0 { pz } else { 1.0 - pz };
                    let pa = dgp.p_a(u, z, x1, x2);
                    let pa = if arm == 1 { pa } else { 1.0 - pa };
                    let row = 8 * z as usize + 4 * w as usize + 2 * x1 as usize + x2 as usize;
                    for k in 0..3 {
                        primal[k] += p * h[(row, k)];
                        dual[k] += p * pa * q[row] * cell.cdf(grid[k]);
                    }
                    for l in 0..2 {
                        sf[l] += p * r[(row, l)];
                    }
                }
            }
            for k in 0..3 {
                assert!((primal[k] - law.cdf(grid[k])).abs() < 1e-10);
                assert!((dual[k] - law.cdf(grid[k])).abs() < 1e-10);
            }
            for l in 0..2 {
                assert!((sf[l] - law.shortfall(levels[l])).abs() < 1e-10);
            }
        }
    }
}
