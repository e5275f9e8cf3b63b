use super::{DataError, Dataset, Result};
use crate::stats::pearson;

/// Indices of the `k` X columns with the largest |corr(x, A)| + |corr(x, Y)|.
///
/// Ties go to the lower column index. Zero-variance columns are skipped with a warning.
pub fn screen_covariates(data: &Dataset, k: usize) -> Result<Vec<usize>> {
    let p = data.x.width();
    if k > p {
        return Err(DataError::ScreenTooMany { k, available: p });
    }
    let a: Vec<f64> = data.a.iter().map(|&v| v as f64).collect();
    let mut scored = Vec::with_capacity(p);
    for j in 0..p {
        let col = data.x.finite_column(j)?;
        match (pearson(col, &a), pearson(col, &data.y)) {
            (Some(ca), Some(cy)) => scored.push((j, ca.abs() + cy.abs())),
            _ => log::warn!("screening skips zero-variance feature `{}`", data.x.names[j]),
        }
    }
    if scored.len() < k {
        return Err(DataError::ScreenTooMany { k, available: scored.len() });
    }
    // Stable sort keeps ascending index order among equal scores.
    scored.sort_by(|l, r| r.1.total_cmp(&l.1));
    Ok(scored.into_iter().take(k).map(|(j, _)| j).collect())
}
