use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::crossfit::standardize_columns;
use super::onestep::{scores_from_nuisances, ArmCurve, CdfProcessEstimate, Functional, Method, Score};
use super::{EstimateError, FoldPlan, Result};
use crate::bridge::pinv;
use crate::data::Dataset;
use crate::stats::expit;

pub const DEFAULT_PROPENSITY_CLIP: (f64, f64) = (0.03, 0.97);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveReport {
    /// Share of out-of-fold propensities that hit a clipping bound.
    pub clipped_share: f64,
}

pub fn clip_propensity(p: f64, clip: (f64, f64)) -> f64 {
    p.clamp(clip.0, clip.1)
}

/// Logistic regression by Newton-Raphson; a pseudoinverse Hessian tolerates collinear
/// features. Returns coefficients.
pub fn fit_logistic(x: &DMatrix<f64>, t: &[f64], max_iter: usize) -> DVector<f64> {
    let d = x.ncols();
    let mut beta = DVector::zeros(d);
    for _ in 0..max_iter {
        let eta = x * &beta;
        let p: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let mut grad = DVector::zeros(d);
        let mut xw = x.clone();
        for i in 0..x.nrows() {
            let wi = (p[i] * (1.0 - p[i])).max(1e-10);
            grad.axpy(t[i] - p[i], &x.row(i).transpose(), 1.0);
            xw.row_mut(i).scale_mut(wi);
        }
        let hess = x.transpose() * xw;
        let Ok((hinv, _)) = pinv(&hess, 1e-12) else { break };
        let step = hinv * grad;
        beta += &step;
        if step.amax() < 1e-10 || beta.amax() > 50.0 {
            break;
        }
    }
    beta
}

/// Pooled features (1, X, Z, W).
fn features(data: &Dataset) -> Result<DMatrix<f64>> {
    let mut cols: Vec<&[f64]> = Vec::new();
    for block in [&data.x, &data.z, &data.w] {
        for j in 0..block.width() {
            cols.push(block.finite_column(j)?);
        }
    }
    let n = data.n();
    Ok(DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] }))
}

/// Cross-fitted AIPW treating (X, Z, W) as sufficient for confounding: logistic propensity,
/// linear-probability outcome model for 1(Y <= y), propensities clipped to `clip`.
pub fn naive_aipw_cdf(
    data: &Dataset,
    folds: &FoldPlan,
    grid: &[f64],
    clip: (f64, f64),
) -> Result<(CdfProcessEstimate, NaiveReport)> {
    data.require_both_arms()?;
    let n = data.n();
    let base = features(data)?;
    let mut m_vals = [DMatrix::zeros(n, grid.len()), DMatrix::zeros(n, grid.len())];
    let mut inv_prop = [DVector::zeros(n), DVector::zeros(n)];
    let mut clipped = 0usize;
    for f in 0..folds.k {
        let train = folds.rows_out(f);
        let eval = folds.rows_in(f);
        let mut v = base.clone();
        standardize_columns(&mut v, &train, true);
        let v_train = v.select_rows(&train);
        let t: Vec<f64> = train.iter().map(|&i| data.a[i] as f64).collect();
        let beta = fit_logistic(&v_train, &t, 50);
        let v_eval = v.select_rows(&eval);
        for (e, &row) in eval.iter().enumerate() {
            let p = expit(v_eval.row(e).dot(&beta.transpose()));
            if p < clip.0 || p > clip.1 {
                clipped += 1;
            }
            let p = clip_propensity(p, clip);
            inv_prop[1][row] = 1.0 / p;
            inv_prop[0][row] = 1.0 / (1.0 - p);
        }
        for arm in 0..2u8 {
            let mut arm_rows: Vec<usize> = train.iter().copied().filter(|&i| data.a[i] == arm).collect();
            if arm_rows.is_empty() {
                return Err(EstimateError::EmptyTrainingArm { fold: f, arm });
            }
            arm_rows.sort_by(|&i, &j| data.y[i].total_cmp(&data.y[j]).then(i.cmp(&j)));
            let va = v.select_rows(&arm_rows);
            let (ginv, _) = pinv(&(va.transpose() * &va), 1e-12)?;
            // Right-hand sides sum_{i in arm, Y_i <= y} v_i through prefix sums.
            let ys: Vec<f64> = arm_rows.iter().map(|&i| data.y[i]).collect();
            let mut rhs = DMatrix::zeros(v.ncols(), grid.len());
            let mut acc = DVector::zeros(v.ncols());
            let mut pos = 0;
            for (j, &t) in grid.iter().enumerate() {
                while pos < ys.len() && ys[pos] <= t {
                    acc += va.row(pos).transpose();
                    pos += 1;
                }
                rhs.set_column(j, &acc);
            }
            let m = &v_eval * (&ginv * rhs);
            for (e, &row) in eval.iter().enumerate() {
                m_vals[arm as usize].row_mut(row).copy_from(&m.row(e));
            }
        }
    }
    if clipped > 0 {
        log::warn!("naive AIPW clipped {clipped} of {n} propensities");
    }
    let arms = [0u8, 1].map(|arm| {
        let i = arm as usize;
        ArmCurve::from_scores(scores_from_nuisances(
            Score::Pdr,
            Functional::Indicator,
            &data.y,
            &data.a,
            arm,
            grid,
            &m_vals[i],
            &inv_prop[i],
        ))
    });
    let est = CdfProcessEstimate { thresholds: grid.to_vec(), arms, method: Method::NaiveAipw };
    Ok((est, NaiveReport { clipped_share: clipped as f64 / n as f64 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Block;
    use crate::estimator::make_folds;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clipping_rule() {
        assert_eq!(clip_propensity(0.001, DEFAULT_PROPENSITY_CLIP), 0.03);
        assert_eq!(clip_propensity(0.999, DEFAULT_PROPENSITY_CLIP), 0.97);
        assert_eq!(clip_propensity(0.5, DEFAULT_PROPENSITY_CLIP), 0.5);
    }

    #[test]
    fn logistic_recovers_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 20000;
        let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
        let t: Vec<f64> = (0..n).map(|i| (rng.random::<f64>() < expit(-0.5 + 1.2 * x[(i, 1)])) as u8 as f64).collect();
        let b = fit_logistic(&x, &t, 50);
        assert!((b[0] + 0.5).abs() < 0.08 && (b[1] - 1.2).abs() < 0.08, "{b}");
    }

    #[test]
    fn randomized_treatment_matches_arm_ecdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 4000;
        let z: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let a: Vec<u8> = (0..n).map(|_| (rng.random::<f64>() < 0.4) as u8).collect();
        let y: Vec<f64> = a.iter().map(|&ai| rng.random::<f64>() + 0.5 * ai as f64).collect();
        let d = Dataset::new(y.clone(), a.clone(), Block::numeric(vec!["z".into()], vec![z]), Block::numeric(vec!["w".into()], vec![w]), Block::default())
            .unwrap();
        let folds = make_folds(n, 5, 1).unwrap();
        let grid = [0.25, 0.5, 0.75, 1.0];
        let (est, rep) = naive_aipw_cdf(&d, &folds, &grid, DEFAULT_PROPENSITY_CLIP).unwrap();
        assert_eq!(rep.clipped_share, 0.0);
        for (j, &t) in grid.iter().enumerate() {
            let truth0 = t.min(1.0);
            let truth1 = (t - 0.5).clamp(0.0, 1.0);
            assert!((est.values(0)[j] - truth0).abs() < 0.04, "{j}");
            assert!((est.values(1)[j] - truth1).abs() < 0.04, "{j}");
        }
    }
}
