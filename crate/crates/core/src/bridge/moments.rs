use nalgebra::{DMatrix, DVector};

use super::{BridgeError, Result};

/// Empirical cross-moments for one arm.
///
/// Column k of `gamma` is P_n{1(A=a) b_Z 1(Y <= thresholds[k])}; column l of `rho` is
/// P_n{1(A=a) b_Z (levels[l] - Y)_+}. Averages run over every row in scope.
#[derive(Clone, Debug)]
pub struct MomentSystem {
    pub arm: u8,
    /// d_Z x d_W.
    pub sigma: DMatrix<f64>,
    /// d_Z x K.
    pub gamma: DMatrix<f64>,
    /// d_Z x L.
    pub rho: DMatrix<f64>,
    pub mu_w: DVector<f64>,
    pub thresholds: Vec<f64>,
    pub levels: Vec<f64>,
    pub n_rows: usize,
    /// P_n 1(A = a).
    pub arm_share: f64,
}

impl MomentSystem {
    pub fn d_w(&self) -> usize {
        self.sigma.ncols()
    }

    pub fn d_z(&self) -> usize {
        self.sigma.nrows()
    }
}

/// Moments averaged over all rows with weight 1/n.
pub fn assemble_moments(
    arm: u8,
    bw: &DMatrix<f64>,
    bz: &DMatrix<f64>,
    y: &[f64],
    a: &[u8],
    thresholds: &[f64],
    levels: &[f64],
) -> Result<MomentSystem> {
    let rows: Vec<usize> = (0..y.len()).collect();
    assemble_moments_on(arm, bw, bz, y, a, &rows, thresholds, levels)
}

/// Moments averaged over the listed rows with weight 1/|rows|.
#[allow(clippy::too_many_arguments)]
pub fn assemble_moments_on(
    arm: u8,
    bw: &DMatrix<f64>,
    bz: &DMatrix<f64>,
    y: &[f64],
    a: &[u8],
    rows: &[usize],
    thresholds: &[f64],
    levels: &[f64],
) -> Result<MomentSystem> {
    let w = vec![1.0 / rows.len() as f64; rows.len()];
    assemble(arm, bw, bz, y, a, rows, &w, thresholds, levels)
}

/// Moments as weighted sums; with probabilities as weights these are exact expectations
/// under a finitely supported law.
#[allow(clippy::too_many_arguments)]
pub fn assemble_moments_weighted(
    arm: u8,
    bw: &DMatrix<f64>,
    bz: &DMatrix<f64>,
    y: &[f64],
    a: &[u8],
    weights: &[f64],
    thresholds: &[f64],
    levels: &[f64],
) -> Result<MomentSystem> {
    let rows: Vec<usize> = (0..y.len()).collect();
    assemble(arm, bw, bz, y, a, &rows, weights, thresholds, levels)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    arm: u8,
    bw: &DMatrix<f64>,
    bz: &DMatrix<f64>,
    y: &[f64],
    a: &[u8],
    rows: &[usize],
    weights: &[f64],
    thresholds: &[f64],
    levels: &[f64],
) -> Result<MomentSystem> {
    let n = y.len();
    if bw.nrows() != n || bz.nrows() != n || a.len() != n || weights.len() != rows.len() {
        return Err(BridgeError::Shape(format!(
            "rows: bW {}, bZ {}, y {n}, a {}, weights {} for {} scoped rows",
            bw.nrows(),
            bz.nrows(),
            a.len(),
            weights.len(),
            rows.len()
        )));
    }
    if !is_sorted(thresholds) || !is_sorted(levels) {
        return Err(BridgeError::Shape("grids must be sorted ascending".into()));
    }
    let (dw, dz) = (bw.ncols(), bz.ncols());
    let mut mu_w = DVector::zeros(dw);
    for (&i, &wt) in rows.iter().zip(weights) {
        mu_w.axpy(wt, &bw.row(i).transpose(), 1.0);
    }
    let mut arm_rows: Vec<(usize, f64)> =
        rows.iter().zip(weights).filter(|(&i, _)| a[i] == arm).map(|(&i, &wt)| (i, wt)).collect();
    if arm_rows.is_empty() {
        return Err(BridgeError::EmptyArm(arm));
    }
    arm_rows.sort_by(|l, r| y[l.0].total_cmp(&y[r.0]).then(l.0.cmp(&r.0)));
    let m = arm_rows.len();
    let mut bz_w = DMatrix::zeros(m, dz);
    let mut bw_a = DMatrix::zeros(m, dw);
    for (r, &(i, wt)) in arm_rows.iter().enumerate() {
        bz_w.row_mut(r).copy_from(&(bz.row(i) * wt));
        bw_a.row_mut(r).copy_from(&bw.row(i));
    }
    let sigma = bz_w.transpose() * &bw_a;
    let arm_share = arm_rows.iter().map(|r| r.1).sum();

    // Prefix sums over arm rows in increasing Y.
    let ys: Vec<f64> = arm_rows.iter().map(|r| y[r.0]).collect();
    let mut cum = DMatrix::zeros(dz, m + 1);
    let mut cum_y = DMatrix::zeros(dz, m + 1);
    for (r, &yr) in ys.iter().enumerate() {
        let row = bz_w.row(r).transpose();
        let next = cum.column(r) + &row;
        cum.set_column(r + 1, &next);
        let next_y = cum_y.column(r) + row * yr;
        cum_y.set_column(r + 1, &next_y);
    }
    let count = |t: f64| ys.partition_point(|&v| v <= t);
    let mut gamma = DMatrix::zeros(dz, thresholds.len());
    for (k, &t) in thresholds.iter().enumerate() {
        gamma.set_column(k, &cum.column(count(t)));
    }
    let mut rho = DMatrix::zeros(dz, levels.len());
    for (l, &t) in levels.iter().enumerate() {
        let c = count(t);
        let col = cum.column(c) * t - cum_y.column(c);
        rho.set_column(l, &col);
    }
    Ok(MomentSystem {
        arm,
        sigma,
        gamma,
        rho,
        mu_w,
        thresholds: thresholds.to_vec(),
        levels: levels.to_vec(),
        n_rows: rows.len(),
        arm_share,
    })
}

fn is_sorted(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_row_average() {
        let ones = DMatrix::from_element(2, 1, 1.0);
        let ms = assemble_moments(1, &ones, &ones, &[0.0, 5.0], &[1, 0], &[0.0], &[]).unwrap();
        assert_eq!(ms.sigma[(0, 0)], 0.5);
        assert_eq!(ms.mu_w[0], 1.0);
        assert_eq!(ms.gamma[(0, 0)], 0.5);
        assert_eq!(ms.arm_share, 0.5);
    }

    #[test]
    fn saturation_and_empty_shortfall() {
        let bz = DMatrix::from_row_slice(4, 2, &[1.0, 0.3, 1.0, -0.7, 1.0, 2.0, 1.0, 0.1]);
        let y = [0.5, 1.5, -0.2, 3.0];
        let a = [1, 1, 0, 1];
        let ms = assemble_moments(1, &bz, &bz, &y, &a, &[10.0], &[-5.0, 0.5]).unwrap();
        let direct: DVector<f64> = (0..4).filter(|&i| a[i] == 1).map(|i| bz.row(i).transpose() / 4.0).sum();
        assert!((ms.gamma.column(0) - &direct).norm() < 1e-15);
        assert_eq!(ms.rho.column(0).norm(), 0.0);
        assert_eq!(ms.rho.column(1).norm(), 0.0);
    }

    #[test]
    fn shortfall_matches_direct_sum() {
        let bz = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, -1.0, 1.0, 2.0]);
        let y = [0.0, 1.0, 2.0];
        let ms = assemble_moments(0, &bz, &bz, &y, &[0, 0, 0], &[], &[1.5]).unwrap();
        let expect = (bz.row(0) * 1.5 + bz.row(1) * 0.5).transpose() / 3.0;
        assert!((ms.rho.column(0) - expect).norm() < 1e-15);
    }

    #[test]
    fn empty_arm_is_an_error() {
        let ones = DMatrix::from_element(2, 1, 1.0);
        assert!(matches!(
            assemble_moments(1, &ones, &ones, &[0.0, 1.0], &[0, 0], &[], &[]),
            Err(BridgeError::EmptyArm(1))
        ));
    }
}
