/// Weighted least-squares projection onto nondecreasing sequences (pool adjacent violators).
///
/// Panics if lengths differ or any weight is not strictly positive.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    assert!(weights.iter().all(|&w| w > 0.0), "PAVA weights must be positive");
    // Each block: (weighted mean, total weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, l2) = blocks[blocks.len() - 1];
            let (m1, w1, l1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let wt = w1 + w2;
            *blocks.last_mut().unwrap() = ((w1 * m1 + w2 * m2) / wt, wt, l1 + l2);
        }
    }
    blocks.iter().flat_map(|&(m, _, l)| std::iter::repeat_n(m, l)).collect()
}

/// Projection onto {0 <= v_1 <= ... <= v_K <= 1}: PAVA, then clipping (clipping preserves order).
pub fn isotonic_project(values: &[f64], weights: &[f64]) -> Vec<f64> {
    pava(values, weights).into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

/// Unit-weight projection, the default used for CDF curves.
pub fn isotonic_project_unit(values: &[f64]) -> Vec<f64> {
    isotonic_project(values, &vec![1.0; values.len()])
}

pub fn weighted_sq_dist(a: &[f64], b: &[f64], weights: &[f64]) -> f64 {
    a.iter().zip(b).zip(weights).map(|((x, y), w)| w * (x - y) * (x - y)).sum()
}

/// Nonexpansiveness toward a cone member `target`: the projection is no farther from it than
/// the raw curve. Returns false on a violation beyond `tol`.
pub fn nonexpansive(raw: &[f64], projected: &[f64], target: &[f64], weights: &[f64], tol: f64) -> bool {
    weighted_sq_dist(projected, target, weights) <= weighted_sq_dist(raw, target, weights) + tol
}

/// Brute-force monotone least squares: enumerate all 2^(K-1) contiguous partitions, keep the
/// feasible block-mean fits, return the cheapest. Exponential; for testing only.
pub fn monotone_qp_oracle(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let k = values.len();
    if k == 0 {
        return Vec::new();
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u64..(1 << (k - 1)) {
        let mut fit = vec![0.0; k];
        let mut start = 0;
        for end in 1..=k {
            if end == k || mask >> (end - 1) & 1 == 1 {
                let w: f64 = weights[start..end].iter().sum();
                let m = (start..end).map(|i| weights[i] * values[i]).sum::<f64>() / w;
                fit[start..end].fill(m);
                start = end;
            }
        }
        if fit.windows(2).any(|p| p[0] > p[1]) {
            continue;
        }
        let cost = weighted_sq_dist(&fit, values, weights);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, fit));
        }
    }
    best.expect("the single-block fit is always feasible").1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_pool() {
        let p = isotonic_project(&[0.2, 0.5, 0.4, 0.9], &[1.0; 4]);
        let want = [0.2, 0.45, 0.45, 0.9];
        assert!(p.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
        let mono = [0.0, 0.1, 0.1, 0.7, 1.0];
        assert_eq!(isotonic_project(&mono, &[1.0; 5]), mono);
    }

    #[test]
    fn clipping_after_pooling() {
        assert_eq!(isotonic_project(&[-0.3, 0.2, 1.4, 1.1], &[1.0; 4]), vec![0.0, 0.2, 1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn matches_qp_oracle(
            v in prop::collection::vec(-0.5f64..1.5, 1..=8),
            w in prop::collection::vec(0.1f64..3.0, 8),
        ) {
            let w = &w[..v.len()];
            let fast = pava(&v, w);
            let slow = monotone_qp_oracle(&v, w);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
            let mean = |x: &[f64]| x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            prop_assert!((mean(&fast) - mean(&v)).abs() <= 1e-12);
        }

        #[test]
        fn projection_is_nonexpansive(v in prop::collection::vec(-0.5f64..1.5, 2..30), seed in 0u64..1000) {
            let w = vec![1.0; v.len()];
            let p = isotonic_project(&v, &w);
            prop_assert!(p.windows(2).all(|x| x[0] <= x[1]));
            // A cone member: sorted uniform points derived from the seed.
            let mut m: Vec<f64> = (0..v.len()).map(|i| ((i as u64 * 7919 + seed) % 101) as f64 / 100.0).collect();
            m.sort_by(f64::total_cmp);
            prop_assert!(nonexpansive(&v, &p, &m, &w, 1e-12));
        }
    }
}
