use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{singular_values, BridgeFit, MomentSystem, Result};

/// Weak-proxy diagnostics for one arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDiagnostics {
    pub arm: u8,
    /// Descending.
    pub singular_values: Vec<f64>,
    /// Smallest singular value of Sigma.
    pub kappa_min: f64,
    /// Smallest singular value of Sigma / P_n 1(A = a), the arm-conditional cross-moment.
    pub kappa_min_conditional: f64,
    /// Euclidean norm of the dual coefficients.
    pub dual_coef_norm: f64,
    /// (P_n{1(A=a) q^2})^{1/2} on the supplied rows, when rows were supplied.
    pub dual_weighted_norm: Option<f64>,
    /// Partial sums of squared loadings of mu_W on the right singular vectors over
    /// squared singular values; the last entry is the squared minimum-norm dual norm.
    pub picard_partial_sums: Vec<f64>,
}

/// Computes spectra and norms. `norm_rows` supplies (b_Z, A) rows for the weighted dual norm.
pub fn spectral_diagnostics(
    ms: &MomentSystem,
    fit: &BridgeFit,
    norm_rows: Option<(&DMatrix<f64>, &[u8])>,
) -> Result<SpectralDiagnostics> {
    let singular = singular_values(&ms.sigma)?;
    let kappa_min = *singular.last().unwrap_or(&0.0);
    let dual_weighted_norm = norm_rows.map(|(bz, a)| dual_weighted_norm(fit, bz, a));
    Ok(SpectralDiagnostics {
        arm: ms.arm,
        kappa_min_conditional: if ms.arm_share > 0.0 { kappa_min / ms.arm_share } else { f64::NAN },
        kappa_min,
        dual_coef_norm: fit.alpha.norm(),
        dual_weighted_norm,
        picard_partial_sums: empirical_picard(ms),
        singular_values: singular,
    })
}

/// (n^{-1} sum_i 1(A_i = a) q(Z_i, X_i)^2)^{1/2}.
pub fn dual_weighted_norm(fit: &BridgeFit, bz: &DMatrix<f64>, a: &[u8]) -> f64 {
    let q = fit.dual_values(bz);
    let s: f64 = q.iter().zip(a).filter(|(_, &ai)| ai == fit.arm).map(|(v, _)| v * v).sum();
    (s / a.len() as f64).sqrt()
}

/// m -> sum_{j <= m} loading_j^2 / s_j^2 for m = 1..=len.
pub fn picard_partial_sums(s: &[f64], loading: &[f64]) -> Vec<f64> {
    s.iter()
        .zip(loading)
        .scan(0.0, |acc, (sj, lj)| {
            *acc += lj * lj / (sj * sj);
            Some(*acc)
        })
        .collect()
}

/// Picard sums of the empirical system: singular values of Sigma and loadings of mu_W
/// on the matching right singular vectors. Zero singular values are skipped.
pub fn empirical_picard(ms: &MomentSystem) -> Vec<f64> {
    if ms.sigma.is_empty() || ms.sigma.iter().any(|v| !v.is_finite()) {
        return Vec::new();
    }
    let svd = ms.sigma.clone().svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut pairs: Vec<(f64, f64)> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(j, &s)| (s, vt.row(j).dot(&ms.mu_w.transpose())))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (s, l): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    picard_partial_sums(&s, &l)
}
