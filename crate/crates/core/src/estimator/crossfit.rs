use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::onestep::{scores_from_nuisances, ArmCurve, CdfProcessEstimate, Functional, Score, ShortfallEstimate};
use super::{EstimateError, FoldPlan, Result};
use crate::bridge::{
    assemble_moments_on, solve_pinv, solve_ridge, solve_square, spectral_diagnostics, BridgeFit, MomentSystem,
    SpectralDiagnostics, DEFAULT_CONDITION_CAP,
};
use crate::data::{build_basis, BasisSpec, Dataset};

/// Bridge solver and its constants. Ridge penalties are c * n^{-1/2} with n the full sample size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "lowercase")]
pub enum SolverConfig {
    Square {
        #[serde(default = "default_cap")]
        condition_cap: f64,
    },
    Pinv {
        #[serde(default)]
        rank_tol: Option<f64>,
    },
    Ridge {
        c_lambda_h: f64,
        c_lambda_q: f64,
        /// Row-major weights; identity when absent.
        #[serde(default)]
        omega_z: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        omega_w: Option<Vec<Vec<f64>>>,
    },
}

fn default_cap() -> f64 {
    DEFAULT_CONDITION_CAP
}

impl SolverConfig {
    pub fn ridge(c_lambda: f64) -> Self {
        SolverConfig::Ridge { c_lambda_h: c_lambda, c_lambda_q: c_lambda, omega_z: None, omega_w: None }
    }

    pub fn square() -> Self {
        SolverConfig::Square { condition_cap: DEFAULT_CONDITION_CAP }
    }

    /// Solves one moment system; `n_full` scales the ridge penalties.
    pub fn solve(&self, ms: &MomentSystem, n_full: usize) -> crate::bridge::Result<BridgeFit> {
        match self {
            SolverConfig::Square { condition_cap } => solve_square(ms, *condition_cap),
            SolverConfig::Pinv { rank_tol } => solve_pinv(ms, *rank_tol),
            SolverConfig::Ridge { c_lambda_h, c_lambda_q, omega_z, omega_w } => {
                let scale = (n_full as f64).sqrt();
                let oz = omega_z.as_ref().map(|m| to_matrix(m));
                let ow = omega_w.as_ref().map(|m| to_matrix(m));
                solve_ridge(ms, c_lambda_h / scale, c_lambda_q / scale, oz.as_ref(), ow.as_ref())
            }
        }
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(r, c, |i, j| rows[i].get(j).copied().unwrap_or(f64::NAN))
}

/// Bases, solver and fold-level standardization for proximal cross-fitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossfitConfig {
    pub basis_w: BasisSpec,
    pub basis_z: BasisSpec,
    pub solver: SolverConfig,
    /// Standardize non-intercept basis columns with training-fold mean and sd.
    #[serde(default = "yes")]
    pub standardize: bool,
}

fn yes() -> bool {
    true
}

/// Out-of-fold nuisance values for one arm.
#[derive(Clone, Debug)]
pub struct ArmNuisance {
    /// n x K outcome-bridge values at the thresholds.
    pub h: DMatrix<f64>,
    /// n x L shortfall-bridge values at the levels.
    pub r: DMatrix<f64>,
    /// Dual bridge per row.
    pub q: DVector<f64>,
}

/// Everything produced by one cross-fitting pass.
#[derive(Clone, Debug)]
pub struct CrossfitOutput {
    pub thresholds: Vec<f64>,
    pub levels: Vec<f64>,
    pub y: Vec<f64>,
    pub a: Vec<u8>,
    pub nuisance: [ArmNuisance; 2],
    pub folds: FoldPlan,
    /// Per fold, per arm.
    pub fits: Vec<[BridgeFit; 2]>,
    pub diagnostics: Vec<[SpectralDiagnostics; 2]>,
    pub d_w: usize,
    pub d_z: usize,
}

/// Standardizes non-intercept columns in place with statistics from `rows`.
pub fn standardize_columns(m: &mut DMatrix<f64>, rows: &[usize], skip_first: bool) {
    let nr = rows.len() as f64;
    let start = skip_first as usize;
    for j in start..m.ncols() {
        let mut col = m.column_mut(j);
        let mean = rows.iter().map(|&i| col[i]).sum::<f64>() / nr;
        let var = rows.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>() / nr;
        let sd = var.sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        col.apply(|v| *v = (*v - mean) / scale);
    }
}

/// Fits bridges on each fold complement and evaluates them on the held-out fold.
pub fn crossfit(
    data: &Dataset,
    cfg: &CrossfitConfig,
    folds: &FoldPlan,
    thresholds: &[f64],
    levels: &[f64],
) -> Result<CrossfitOutput> {
    let n = data.n();
    if folds.n() != n {
        return Err(EstimateError::FoldMismatch { folds: folds.n(), n });
    }
    data.require_both_arms()?;
    let bw = build_basis(&cfg.basis_w, data)?;
    let bz = build_basis(&cfg.basis_z, data)?;
    let (k, l) = (thresholds.len(), levels.len());
    let mut nuisance = [0u8, 1].map(|_| ArmNuisance {
        h: DMatrix::zeros(n, k),
        r: DMatrix::zeros(n, l),
        q: DVector::zeros(n),
    });
    let mut fits = Vec::with_capacity(folds.k);
    let mut diagnostics = Vec::with_capacity(folds.k);
    for f in 0..folds.k {
        let train = folds.rows_out(f);
        let eval = folds.rows_in(f);
        let (mut bw_f, mut bz_f) = (bw.clone(), bz.clone());
        if cfg.standardize {
            standardize_columns(&mut bw_f, &train, cfg.basis_w.include_intercept);
            standardize_columns(&mut bz_f, &train, cfg.basis_z.include_intercept);
        }
        let bw_eval = bw_f.select_rows(&eval);
        let bz_eval = bz_f.select_rows(&eval);
        let bz_train = bz_f.select_rows(&train);
        let a_train: Vec<u8> = train.iter().map(|&i| data.a[i]).collect();
        let mut fold_fits = Vec::with_capacity(2);
        let mut fold_diag = Vec::with_capacity(2);
        for arm in 0..2u8 {
            let ms = assemble_moments_on(arm, &bw_f, &bz_f, &data.y, &data.a, &train, thresholds, levels)
                .map_err(|source| EstimateError::Fold { fold: f, source })?;
            let fit = cfg.solver.solve(&ms, n).map_err(|source| EstimateError::Fold { fold: f, source })?;
            let h = fit.primal_values(&bw_eval);
            let r = fit.shortfall_values(&bw_eval);
            let q = fit.dual_values(&bz_eval);
            let slot = &mut nuisance[arm as usize];
            for (e, &row) in eval.iter().enumerate() {
                slot.h.row_mut(row).copy_from(&h.row(e));
                slot.r.row_mut(row).copy_from(&r.row(e));
                slot.q[row] = q[e];
            }
            fold_diag.push(
                spectral_diagnostics(&ms, &fit, Some((&bz_train, &a_train)))
                    .map_err(|source| EstimateError::Fold { fold: f, source })?,
            );
            fold_fits.push(fit);
        }
        let [f0, f1]: [BridgeFit; 2] = fold_fits.try_into().expect("two arms");
        fits.push([f0, f1]);
        let [d0, d1]: [SpectralDiagnostics; 2] = fold_diag.try_into().expect("two arms");
        diagnostics.push([d0, d1]);
    }
    Ok(CrossfitOutput {
        thresholds: thresholds.to_vec(),
        levels: levels.to_vec(),
        y: data.y.clone(),
        a: data.a.clone(),
        nuisance,
        folds: folds.clone(),
        fits,
        diagnostics,
        d_w: bw.ncols(),
        d_z: bz.ncols(),
    })
}

impl CrossfitOutput {
    pub fn cdf(&self, score: Score) -> CdfProcessEstimate {
        let arms = [0u8, 1].map(|arm| {
            let nu = &self.nuisance[arm as usize];
            ArmCurve::from_scores(scores_from_nuisances(
                score,
                Functional::Indicator,
                &self.y,
                &self.a,
                arm,
                &self.thresholds,
                &nu.h,
                &nu.q,
            ))
        });
        CdfProcessEstimate { thresholds: self.thresholds.clone(), arms, method: score.into() }
    }

    pub fn shortfall(&self, score: Score) -> ShortfallEstimate {
        let arms = [0u8, 1].map(|arm| {
            let nu = &self.nuisance[arm as usize];
            ArmCurve::from_scores(scores_from_nuisances(
                score,
                Functional::Shortfall,
                &self.y,
                &self.a,
                arm,
                &self.levels,
                &nu.r,
                &nu.q,
            ))
        });
        ShortfallEstimate { levels: self.levels.clone(), arms, method: score.into() }
    }

    /// Fold-averaged kappa_min and weighted dual norm per arm.
    pub fn mean_diagnostics(&self) -> FoldAveragedDiagnostics {
        let k = self.diagnostics.len() as f64;
        let avg = |f: &dyn Fn(&SpectralDiagnostics) -> f64, arm: usize| {
            self.diagnostics.iter().map(|d| f(&d[arm])).sum::<f64>() / k
        };
        FoldAveragedDiagnostics {
            kappa_min: [0, 1].map(|a| avg(&|d| d.kappa_min, a)),
            kappa_min_conditional: [0, 1].map(|a| avg(&|d| d.kappa_min_conditional, a)),
            dual_weighted_norm: [0, 1].map(|a| avg(&|d| d.dual_weighted_norm.unwrap_or(f64::NAN), a)),
            dual_coef_norm: [0, 1].map(|a| avg(&|d| d.dual_coef_norm, a)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldAveragedDiagnostics {
    pub kappa_min: [f64; 2],
    pub kappa_min_conditional: [f64; 2],
    pub dual_weighted_norm: [f64; 2],
    pub dual_coef_norm: [f64; 2],
}

/// Cross-fitted one-step (PDR) CDF process.
pub fn crossfit_cdf(data: &Dataset, cfg: &CrossfitConfig, folds: &FoldPlan, grid: &[f64]) -> Result<CdfProcessEstimate> {
    Ok(crossfit(data, cfg, folds, grid, &[])?.cdf(Score::Pdr))
}

/// Outcome-bridge plug-in (POR) and treatment-bridge weighting (PIPW) curves from one pass.
pub fn por_pipw_estimates(out: &CrossfitOutput) -> (CdfProcessEstimate, CdfProcessEstimate) {
    (out.cdf(Score::Por), out.cdf(Score::Pipw))
}

/// Cross-fitted one-step shortfall process.
pub fn shortfall_process(data: &Dataset, cfg: &CrossfitConfig, folds: &FoldPlan, levels: &[f64]) -> Result<ShortfallEstimate> {
    Ok(crossfit(data, cfg, folds, &[], levels)?.shortfall(Score::Pdr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BasisKind, Block, Side};
    use crate::estimator::make_folds;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = Vec::new();
        let mut w = Vec::new();
        let mut a = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let u: f64 = rng.random_range(-1.0..1.0);
            z.push(u + rng.random_range(-0.5..0.5));
            w.push(u + rng.random_range(-0.5..0.5));
            let ai = (rng.random::<f64>() < 0.5 + 0.3 * u) as u8;
            a.push(ai);
            y.push(u + ai as f64 + rng.random_range(-1.0..1.0));
        }
        Dataset::new(y, a, Block::numeric(vec!["z".into()], vec![z]), Block::numeric(vec!["w".into()], vec![w]), Block::default())
            .unwrap()
    }

    fn cfg(solver: SolverConfig) -> CrossfitConfig {
        CrossfitConfig {
            basis_w: BasisSpec::new(BasisKind::Polynomial { degree: 2 }, Side::W),
            basis_z: BasisSpec::new(BasisKind::Polynomial { degree: 2 }, Side::Z),
            solver,
            standardize: true,
        }
    }

    #[test]
    fn influence_columns_are_centered() {
        let d = toy(300, 1);
        let folds = make_folds(300, 5, 3).unwrap();
        let out = crossfit(&d, &cfg(SolverConfig::square()), &folds, &[-0.5, 0.5, 1.5], &[0.0, 1.0]).unwrap();
        for est in [out.cdf(Score::Pdr), out.cdf(Score::Por), out.cdf(Score::Pipw)] {
            for arm in &est.arms {
                for col in arm.influence.column_iter() {
                    assert!((col.sum() / 300.0).abs() <= 1e-12);
                }
            }
        }
        let sf = out.shortfall(Score::Pdr);
        assert!(sf.arms[1].influence.column(0).sum().abs() / 300.0 <= 1e-12);
    }

    #[test]
    fn held_out_outcomes_only_move_other_folds() {
        let d = toy(200, 2);
        let folds = make_folds(200, 4, 8).unwrap();
        let c = cfg(SolverConfig::ridge(0.01));
        let grid = [0.0, 1.0];
        let base = crossfit(&d, &c, &folds, &grid, &[]).unwrap();
        let mut perturbed = d.clone();
        for i in folds.rows_in(0) {
            perturbed.y[i] += 3.0;
        }
        let moved = crossfit(&perturbed, &c, &folds, &grid, &[]).unwrap();
        for arm in 0..2 {
            assert_eq!(base.fits[0][arm].theta, moved.fits[0][arm].theta);
            assert_eq!(base.fits[0][arm].alpha, moved.fits[0][arm].alpha);
            for f in 1..4 {
                assert_ne!(base.fits[f][arm].theta, moved.fits[f][arm].theta);
            }
        }
    }

    #[test]
    fn solver_failure_carries_fold() {
        let mut d = toy(60, 3);
        d.z = Block::numeric(vec!["z".into()], vec![vec![1.0; 60]]);
        let folds = make_folds(60, 3, 1).unwrap();
        let err = crossfit(&d, &cfg(SolverConfig::square()), &folds, &[0.0], &[]).unwrap_err();
        assert!(matches!(err, EstimateError::Fold { fold: 0, .. }), "{err}");
    }
}
