use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BridgeError, MomentSystem, Result};

pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "lowercase")]
pub enum SolverTag {
    Square,
    Pinv { rank_tol: f64 },
    Ridge { lambda_h: f64, lambda_q: f64, weighted_z: bool, weighted_w: bool },
}

/// Primal and dual bridge coefficients for one arm.
#[derive(Clone, Debug)]
pub struct BridgeFit {
    pub arm: u8,
    /// d_W x K; column k gives h_{a, y_k} = b_W' theta[:, k].
    pub theta: DMatrix<f64>,
    /// d_W x L; column l gives the shortfall bridge at levels[l].
    pub shortfall_theta: DMatrix<f64>,
    /// d_Z; q_a = b_Z' alpha.
    pub alpha: DVector<f64>,
    pub solver: SolverTag,
    /// Numerical rank of Sigma used by the solve.
    pub effective_rank: usize,
}

impl BridgeFit {
    /// Outcome-bridge values, rows of `bw` by thresholds.
    pub fn primal_values(&self, bw: &DMatrix<f64>) -> DMatrix<f64> {
        bw * &self.theta
    }

    pub fn shortfall_values(&self, bw: &DMatrix<f64>) -> DMatrix<f64> {
        bw * &self.shortfall_theta
    }

    pub fn dual_values(&self, bz: &DMatrix<f64>) -> DVector<f64> {
        bz * &self.alpha
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(BridgeError::NonFinite)
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_finite(m)?;
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Moore-Penrose inverse; singular values at or below `rel_tol * sigma_max` are dropped.
pub fn pinv(m: &DMatrix<f64>, rel_tol: f64) -> Result<(DMatrix<f64>, usize)> {
    check_finite(m)?;
    let (r, c) = m.shape();
    if m.iter().all(|&v| v == 0.0) || r == 0 || c == 0 {
        return Ok((DMatrix::zeros(c, r), 0));
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = rel_tol * smax;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(c, r);
    let mut rank = 0;
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            rank += 1;
            out += vt.row(j).transpose() * u.column(j).transpose() / s;
        }
    }
    Ok((out, rank))
}

pub fn default_rank_tol(ms: &MomentSystem) -> f64 {
    f64::EPSILON * ms.d_w().max(ms.d_z()) as f64
}

/// theta = Sigma^{-1} gamma and alpha = Sigma^{-T} mu_W for square, well-conditioned Sigma.
pub fn solve_square(ms: &MomentSystem, condition_cap: f64) -> Result<BridgeFit> {
    let (dz, dw) = ms.sigma.shape();
    if dz != dw {
        return Err(BridgeError::NotSquare { d_z: dz, d_w: dw });
    }
    let s = singular_values(&ms.sigma)?;
    let kappa_min = *s.last().unwrap_or(&0.0);
    let condition = if kappa_min > 0.0 { s[0] / kappa_min } else { f64::INFINITY };
    if condition > condition_cap {
        return Err(BridgeError::IllConditioned { condition, kappa_min });
    }
    let lu = ms.sigma.clone().lu();
    let lu_t = ms.sigma.transpose().lu();
    let singular = || BridgeError::IllConditioned { condition, kappa_min };
    let theta = lu.solve(&ms.gamma).ok_or_else(singular)?;
    let shortfall_theta = lu.solve(&ms.rho).ok_or_else(singular)?;
    let alpha = lu_t.solve(&ms.mu_w).ok_or_else(singular)?;
    Ok(BridgeFit { arm: ms.arm, theta, shortfall_theta, alpha, solver: SolverTag::Square, effective_rank: dw })
}

/// Minimum-norm least-squares solutions through the pseudoinverse of Sigma.
pub fn solve_pinv(ms: &MomentSystem, rank_tol: Option<f64>) -> Result<BridgeFit> {
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(ms));
    let (p, rank) = pinv(&ms.sigma, tol)?;
    Ok(BridgeFit {
        arm: ms.arm,
        theta: &p * &ms.gamma,
        shortfall_theta: &p * &ms.rho,
        alpha: p.transpose() * &ms.mu_w,
        solver: SolverTag::Pinv { rank_tol: tol },
        effective_rank: rank,
    })
}

/// Lower Cholesky factor of a symmetric positive-definite weight.
fn weight_factor(omega: &DMatrix<f64>, dim: usize, which: &'static str) -> Result<DMatrix<f64>> {
    if omega.shape() != (dim, dim) {
        return Err(BridgeError::Shape(format!("{which} must be {dim}x{dim}")));
    }
    check_finite(omega)?;
    let scale = omega.amax().max(1.0);
    if (omega - omega.transpose()).amax() > 1e-12 * scale {
        return Err(BridgeError::NotSpd(which));
    }
    omega.clone().cholesky().map(|c| c.l()).ok_or(BridgeError::NotSpd(which))
}

/// Tikhonov solution of min |L'(S x - b)|^2 + lambda |x|^2 for every column of `rhs`,
/// where `lw` factors the weight. Solved through one SVD with filter factors
/// s / (s^2 + lambda); lambda = 0 gives the minimum-norm least-squares solution.
fn tikhonov(
    s: &DMatrix<f64>,
    lw: Option<&DMatrix<f64>>,
    rhs: &DMatrix<f64>,
    lambda: f64,
    rank_tol: f64,
) -> Result<(DMatrix<f64>, usize)> {
    let (ws, wr) = match lw {
        Some(l) => (l.transpose() * s, l.transpose() * rhs),
        None => (s.clone(), rhs.clone()),
    };
    check_finite(&ws)?;
    let d = ws.ncols();
    if ws.iter().all(|&v| v == 0.0) {
        return Ok((DMatrix::zeros(d, rhs.ncols()), 0));
    }
    let svd = ws.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let cut = rank_tol * svd.singular_values.max();
    let mut out = DMatrix::zeros(d, rhs.ncols());
    let mut rank = 0;
    for (j, &sv) in svd.singular_values.iter().enumerate() {
        if sv > cut {
            rank += 1;
        }
        let filter = if lambda > 0.0 {
            sv / (sv * sv + lambda)
        } else if sv > cut {
            1.0 / sv
        } else {
            continue;
        };
        let coef = u.column(j).transpose() * &wr * filter;
        out += vt.row(j).transpose() * coef;
    }
    Ok((out, rank))
}

/// theta = (S'W_Z S + lambda_h I)^{-1} S'W_Z gamma and
/// alpha = (S W_W S' + lambda_q I)^{-1} S W_W mu_W. `None` weights mean identity.
pub fn solve_ridge(
    ms: &MomentSystem,
    lambda_h: f64,
    lambda_q: f64,
    omega_z: Option<&DMatrix<f64>>,
    omega_w: Option<&DMatrix<f64>>,
) -> Result<BridgeFit> {
    if !(lambda_h >= 0.0 && lambda_q >= 0.0) {
        return Err(BridgeError::NegativePenalty);
    }
    check_finite(&ms.sigma)?;
    let lz = omega_z.map(|o| weight_factor(o, ms.d_z(), "Omega_Z")).transpose()?;
    let lw = omega_w.map(|o| weight_factor(o, ms.d_w(), "Omega_W")).transpose()?;
    let tol = default_rank_tol(ms);
    let k = ms.gamma.ncols();
    let mut rhs = DMatrix::zeros(ms.d_z(), k + ms.rho.ncols());
    rhs.columns_mut(0, k).copy_from(&ms.gamma);
    rhs.columns_mut(k, ms.rho.ncols()).copy_from(&ms.rho);
    let (sol, rank) = tikhonov(&ms.sigma, lz.as_ref(), &rhs, lambda_h, tol)?;
    let mu = DMatrix::from_column_slice(ms.d_w(), 1, ms.mu_w.as_slice());
    let (alpha, _) = tikhonov(&ms.sigma.transpose(), lw.as_ref(), &mu, lambda_q, tol)?;
    Ok(BridgeFit {
        arm: ms.arm,
        theta: sol.columns(0, k).into_owned(),
        shortfall_theta: sol.columns(k, ms.rho.ncols()).into_owned(),
        alpha: alpha.column(0).into_owned(),
        solver: SolverTag::Ridge { lambda_h, lambda_q, weighted_z: omega_z.is_some(), weighted_w: omega_w.is_some() },
        effective_rank: rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn system(sigma: DMatrix<f64>, gamma: &[f64], mu: &[f64]) -> MomentSystem {
        let dz = sigma.nrows();
        MomentSystem {
            arm: 1,
            gamma: DMatrix::from_column_slice(dz, 1, gamma),
            rho: DMatrix::zeros(dz, 0),
            mu_w: DVector::from_column_slice(mu),
            sigma,
            thresholds: vec![0.0],
            levels: vec![],
            n_rows: 1,
            arm_share: 1.0,
        }
    }

    fn random_system(rng: &mut ChaCha8Rng, dz: usize, dw: usize) -> MomentSystem {
        let sigma = DMatrix::from_fn(dz, dw, |_, _| rng.random_range(-1.0..1.0));
        let g: Vec<f64> = (0..dz).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m: Vec<f64> = (0..dw).map(|_| rng.random_range(-1.0..1.0)).collect();
        system(sigma, &g, &m)
    }

    #[test]
    fn identity_and_diagonal_systems() {
        let fit = solve_square(&system(DMatrix::identity(2, 2), &[0.3, 0.5], &[1.0, 0.0]), DEFAULT_CONDITION_CAP).unwrap();
        assert_eq!(fit.theta.as_slice(), &[0.3, 0.5]);
        assert_eq!(fit.alpha.as_slice(), &[1.0, 0.0]);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let fit = solve_square(&system(diag, &[0.0, 0.0], &[1.0, 1.0]), DEFAULT_CONDITION_CAP).unwrap();
        assert_eq!(fit.alpha.as_slice(), &[0.5, 0.25]);
    }

    #[test]
    fn random_square_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut ms = random_system(&mut rng, 5, 5);
            ms.sigma += DMatrix::<f64>::identity(5, 5) * 3.0;
            let fit = solve_square(&ms, DEFAULT_CONDITION_CAP).unwrap();
            let scale = ms.sigma.amax();
            assert!((&ms.sigma * &fit.theta - &ms.gamma).amax() <= 1e-10 * scale);
            assert!((ms.sigma.transpose() * &fit.alpha - &ms.mu_w).amax() <= 1e-10 * scale);
        }
    }

    #[test]
    fn singular_square_reports_kappa() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        match solve_square(&system(s, &[1.0, 1.0], &[1.0, 1.0]), DEFAULT_CONDITION_CAP) {
            Err(BridgeError::IllConditioned { kappa_min, .. }) => assert!(kappa_min < 1e-12),
            other => panic!("{other:?}"),
        }
        let rect = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(matches!(solve_square(&system(rect, &[1.0], &[1.0, 0.0]), 1e12), Err(BridgeError::NotSquare { .. })));
    }

    #[test]
    fn ridge_diagonal_shrinkage() {
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let fit = solve_ridge(&system(diag, &[2.0, 1.0], &[1.0, 1.0]), 1.0, 1.0, None, None).unwrap();
        assert!((fit.theta[0] - 0.8).abs() < 1e-15);
        assert!((fit.theta[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ridge_continuity_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ms = random_system(&mut rng, 4, 4);
        ms.sigma += DMatrix::<f64>::identity(4, 4) * 2.0;
        let sq = solve_square(&ms, DEFAULT_CONDITION_CAP).unwrap();
        let rg = solve_ridge(&ms, 1e-12, 1e-12, None, None).unwrap();
        assert!((sq.theta - rg.theta).norm() <= 1e-8);
        assert!((sq.alpha - rg.alpha).norm() <= 1e-8);
    }

    #[test]
    fn ridge_zero_penalty_rank_one_is_minimum_norm() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let fit = solve_ridge(&system(s, &[1.0, 0.0], &[1.0, 0.0]), 0.0, 0.0, None, None).unwrap();
        assert_eq!(fit.theta.as_slice(), &[1.0, 0.0]);
        assert_eq!(fit.effective_rank, 1);
    }

    #[test]
    fn ridge_normal_equation_residuals_with_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (dz, dw) in [(3, 3), (5, 3), (3, 5)] {
            let ms = random_system(&mut rng, dz, dw);
            let bz = DMatrix::from_fn(dz, dz, |_, _| rng.random_range(-1.0..1.0));
            let bw = DMatrix::from_fn(dw, dw, |_, _| rng.random_range(-1.0..1.0));
            let oz = &bz * bz.transpose() + DMatrix::identity(dz, dz) * 0.5;
            let ow = &bw * bw.transpose() + DMatrix::identity(dw, dw) * 0.5;
            for lambda in [1e-6, 0.01, 1.0, 10.0] {
                let fit = solve_ridge(&ms, lambda, lambda, Some(&oz), Some(&ow)).unwrap();
                let s = &ms.sigma;
                let lhs = (s.transpose() * &oz * s + DMatrix::identity(dw, dw) * lambda) * &fit.theta;
                let rhs = s.transpose() * &oz * &ms.gamma;
                assert!((lhs - rhs).amax() <= 1e-10);
                let lhs = (s * &ow * s.transpose() + DMatrix::identity(dz, dz) * lambda) * &fit.alpha;
                let rhs = s * &ow * &ms.mu_w;
                assert!((lhs - rhs).amax() <= 1e-10);
            }
        }
    }

    #[test]
    fn non_spd_weight_is_rejected() {
        let ms = system(DMatrix::identity(2, 2), &[1.0, 1.0], &[1.0, 1.0]);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(solve_ridge(&ms, 1.0, 1.0, Some(&bad), None), Err(BridgeError::NotSpd("Omega_Z"))));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(solve_ridge(&ms, 1.0, 1.0, None, Some(&asym)), Err(BridgeError::NotSpd("Omega_W"))));
    }

    #[test]
    fn pinv_minimum_norm_cases() {
        let fit = solve_pinv(&system(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), &[1.0], &[1.0, 0.0]), None).unwrap();
        assert_eq!(fit.theta.as_slice(), &[1.0, 0.0]);
        let fit = solve_pinv(&system(DMatrix::zeros(2, 2), &[1.0, 2.0], &[1.0, 0.0]), None).unwrap();
        assert_eq!(fit.theta.norm(), 0.0);
        assert_eq!(fit.effective_rank, 0);
    }

    #[test]
    fn tikhonov_path_converges_to_pinv_on_rectangular_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ms = random_system(&mut rng, 3, 5);
        // Solvable: gamma in the range of Sigma.
        let x = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        ms.gamma.set_column(0, &(&ms.sigma * x));
        let pv = solve_pinv(&ms, None).unwrap();
        let mut prev = f64::INFINITY;
        for e in 2..=10 {
            let fit = solve_ridge(&ms, 10f64.powi(-e), 0.0, None, None).unwrap();
            let gap = (&fit.theta - &pv.theta).norm();
            assert!(gap <= prev + 1e-12);
            prev = gap;
        }
        assert!(prev < 1e-8);
        // Minimum-norm solution is orthogonal to the null space of Sigma.
        let svd = ms.sigma.clone().svd(false, true);
        let vt = svd.v_t.unwrap();
        let full = DMatrix::from_fn(5, 5, |i, j| if i < vt.nrows() { vt[(i, j)] } else { 0.0 });
        let range_proj = full.transpose() * &full;
        assert!((&pv.theta - range_proj * &pv.theta).norm() < 1e-10);
    }
}
