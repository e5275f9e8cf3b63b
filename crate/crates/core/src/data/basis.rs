use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Result};
use crate::stats;

/// Which proxy block feeds the basis: W gives b_W, Z gives b_Z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    W,
    Z,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BasisKind {
    /// All monomials of total degree 1..=degree in (proxies, X).
    Polynomial { degree: usize },
    /// Products of distinct inputs, up to `order` factors. On binary inputs this spans the
    /// same space as `Polynomial` of the same degree without its duplicated powers.
    Multilinear { order: usize },
    /// Additive natural cubic splines; one knot vector per input (proxies then X).
    /// Fewer than three knots gives the linear term only.
    Spline { knots: Vec<Vec<f64>> },
    /// Screened X, proxy mains, squares, pairwise proxy products and X-by-proxy products.
    RealdataInteraction { screened: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    #[serde(flatten)]
    pub kind: BasisKind,
    pub side: Side,
    #[serde(default = "yes")]
    pub include_intercept: bool,
    /// Whether the X block enters polynomial, multilinear and spline bases.
    #[serde(default = "yes")]
    pub include_x: bool,
    /// Hard cap on the dimension; defaults to the row count.
    #[serde(default)]
    pub max_dim: Option<usize>,
}

fn yes() -> bool {
    true
}

impl BasisSpec {
    pub fn new(kind: BasisKind, side: Side) -> Self {
        BasisSpec { kind, side, include_intercept: true, include_x: true, max_dim: None }
    }

    /// Spline spec with `n_knots` knots at empirical quantiles of each input.
    /// Repeated quantiles collapse, so binary inputs stay linear.
    pub fn natural_spline(data: &Dataset, side: Side, n_knots: usize) -> Result<Self> {
        let mut knots = Vec::new();
        for col in input_columns(data, side, true, None)? {
            let sorted = stats::sorted_copy(col);
            let mut kv: Vec<f64> = (0..n_knots)
                .map(|k| stats::quantile_type7(&sorted, (k as f64 + 0.5) / n_knots as f64))
                .collect();
            kv.dedup();
            knots.push(kv);
        }
        Ok(BasisSpec::new(BasisKind::Spline { knots }, side))
    }

    /// Output dimension for `p` proxies and `q` covariates.
    pub fn dim(&self, p: usize, q: usize) -> usize {
        let icpt = self.include_intercept as usize;
        let inputs = p + if self.include_x { q } else { 0 };
        icpt + match &self.kind {
            BasisKind::Polynomial { degree } => monomials(inputs, *degree).len(),
            BasisKind::Multilinear { order } => subsets(inputs, *order).len(),
            BasisKind::Spline { knots } => knots.iter().map(|k| spline_width(k.len())).sum(),
            BasisKind::RealdataInteraction { screened } => {
                let s = screened.len();
                s + 2 * p + p * p.saturating_sub(1) / 2 + s * p
            }
        }
    }
}

fn spline_width(n_knots: usize) -> usize {
    if n_knots < 3 {
        1
    } else {
        n_knots - 1
    }
}

/// Exponent vectors with total degree 1..=degree, graded then reverse-lexicographic.
fn monomials(vars: usize, degree: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for e in (0..=left).rev() {
            cur[i] = e;
            rec(i + 1, left - e, cur, out);
        }
        cur[i] = 0;
    }
    let mut out = Vec::new();
    for total in 1..=degree {
        let mut all = Vec::new();
        rec(0, total, &mut vec![0; vars], &mut all);
        out.extend(all.into_iter().filter(|e| e.iter().sum::<usize>() == total));
    }
    out
}

/// Index sets of size 1..=order in lexicographic order within each size.
fn subsets(vars: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, vars: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in start..vars {
            cur.push(v);
            rec(v + 1, vars, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for k in 1..=order.min(vars) {
        rec(0, vars, k, &mut Vec::new(), &mut out);
    }
    out
}

fn input_columns<'d>(data: &'d Dataset, side: Side, with_x: bool, screened: Option<&[usize]>) -> Result<Vec<&'d [f64]>> {
    let proxies = match side {
        Side::W => &data.w,
        Side::Z => &data.z,
    };
    let mut cols = Vec::new();
    for j in 0..proxies.width() {
        cols.push(proxies.finite_column(j)?);
    }
    if let Some(idx) = screened {
        for &j in idx {
            if j >= data.x.width() {
                return Err(DataError::BadSpec(format!("screened index {j} out of range")));
            }
            cols.push(data.x.finite_column(j)?);
        }
    } else if with_x {
        for j in 0..data.x.width() {
            cols.push(data.x.finite_column(j)?);
        }
    }
    Ok(cols)
}

fn natural_spline_terms(x: f64, knots: &[f64], out: &mut Vec<f64>) {
    out.push(x);
    let k = knots.len();
    if k < 3 {
        return;
    }
    let cube = |t: f64| if t > 0.0 { t * t * t } else { 0.0 };
    let last = knots[k - 1];
    let d = |j: usize| (cube(x - knots[j]) - cube(x - last)) / (last - knots[j]);
    let d_tail = d(k - 2);
    for j in 0..k - 2 {
        out.push(d(j) - d_tail);
    }
}

/// Evaluates the basis row by row; the result is n x d.
pub fn build_basis(spec: &BasisSpec, data: &Dataset) -> Result<DMatrix<f64>> {
    let n = data.n();
    let p = match spec.side {
        Side::W => data.w.width(),
        Side::Z => data.z.width(),
    };
    match &spec.kind {
        BasisKind::Polynomial { degree } if *degree < 1 => return Err(DataError::BadDegree),
        BasisKind::Multilinear { order } if *order < 1 => return Err(DataError::BadDegree),
        _ => {}
    }
    let d = spec.dim(p, data.x.width());
    let cap = spec.max_dim.unwrap_or(n);
    if d > cap {
        return Err(DataError::DimensionOverflow { d, cap });
    }
    let screened = match &spec.kind {
        BasisKind::RealdataInteraction { screened } => Some(screened.as_slice()),
        _ => None,
    };
    let cols = input_columns(data, spec.side, spec.include_x, screened)?;
    if let BasisKind::Spline { knots } = &spec.kind {
        if knots.len() != cols.len() {
            return Err(DataError::BadSpec(format!("{} knot vectors for {} inputs", knots.len(), cols.len())));
        }
    }
    let terms = match &spec.kind {
        BasisKind::Polynomial { degree } => monomials(cols.len(), *degree),
        BasisKind::Multilinear { order } => subsets(cols.len(), *order),
        _ => Vec::new(),
    };
    let mut buf = Vec::with_capacity(n * d);
    let mut row = Vec::with_capacity(cols.len());
    let mut feats = Vec::with_capacity(d);
    for i in 0..n {
        row.clear();
        row.extend(cols.iter().map(|c| c[i]));
        feats.clear();
        if spec.include_intercept {
            feats.push(1.0);
        }
        match &spec.kind {
            BasisKind::Polynomial { .. } => {
                for e in &terms {
                    feats.push(e.iter().zip(&row).map(|(&k, &v)| v.powi(k as i32)).product());
                }
            }
            BasisKind::Multilinear { .. } => {
                for s in &terms {
                    feats.push(s.iter().map(|&j| row[j]).product());
                }
            }
            BasisKind::Spline { knots } => {
                for (v, kv) in row.iter().zip(knots) {
                    natural_spline_terms(*v, kv, &mut feats);
                }
            }
            BasisKind::RealdataInteraction { screened } => {
                let (prox, xs) = row.split_at(p);
                feats.extend_from_slice(xs);
                feats.extend_from_slice(prox);
                feats.extend(prox.iter().map(|v| v * v));
                for j in 0..p {
                    for k in j + 1..p {
                        feats.push(prox[j] * prox[k]);
                    }
                }
                debug_assert_eq!(xs.len(), screened.len());
                for x in xs {
                    for v in prox {
                        feats.push(x * v);
                    }
                }
            }
        }
        debug_assert_eq!(feats.len(), d);
        buf.extend_from_slice(&feats);
    }
    Ok(DMatrix::from_row_slice(n, d, &buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Block;
    use proptest::prelude::*;

    fn toy(n: usize, pw: usize, px: usize) -> Dataset {
        let col = |s: usize| (0..n).map(|i| ((i * 7 + s * 3) % 11) as f64 / 5.0 - 1.0).collect::<Vec<_>>();
        Dataset::new(
            (0..n).map(|i| i as f64).collect(),
            (0..n).map(|i| (i % 2) as u8).collect(),
            Block::numeric((0..pw).map(|j| format!("z{j}")).collect(), (0..pw).map(|j| col(j + 10)).collect()),
            Block::numeric((0..pw).map(|j| format!("w{j}")).collect(), (0..pw).map(col).collect()),
            Block::numeric((0..px).map(|j| format!("x{j}")).collect(), (0..px).map(|j| col(j + 20)).collect()),
        )
        .unwrap()
    }

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn degree_one_columns() {
        let d = toy(5, 1, 1);
        let b = build_basis(&BasisSpec::new(BasisKind::Polynomial { degree: 1 }, Side::W), &d).unwrap();
        assert_eq!(b.ncols(), 3);
        for i in 0..5 {
            assert_eq!(b[(i, 0)], 1.0);
            assert_eq!(b[(i, 1)], d.w.columns[0].as_numeric().unwrap()[i]);
            assert_eq!(b[(i, 2)], d.x.columns[0].as_numeric().unwrap()[i]);
        }
    }

    #[test]
    fn degree_three_three_inputs_has_twenty_columns() {
        let d = toy(40, 1, 2);
        let b = build_basis(&BasisSpec::new(BasisKind::Polynomial { degree: 3 }, Side::Z), &d).unwrap();
        assert_eq!(b.ncols(), 20);
    }

    #[test]
    fn realdata_interaction_has_twenty_one_columns() {
        let d = toy(50, 2, 7);
        let spec = BasisSpec::new(BasisKind::RealdataInteraction { screened: vec![0, 2, 3, 5, 6] }, Side::W);
        let b = build_basis(&spec, &d).unwrap();
        assert_eq!(b.ncols(), 21);
        let w0 = d.w.columns[0].as_numeric().unwrap()[4];
        let w1 = d.w.columns[1].as_numeric().unwrap()[4];
        let x6 = d.x.columns[6].as_numeric().unwrap()[4];
        assert_eq!(b[(4, 6)], w0);
        assert_eq!(b[(4, 8)], w0 * w0);
        assert_eq!(b[(4, 10)], w0 * w1);
        assert_eq!(b[(4, 20)], x6 * w1);
    }

    #[test]
    fn multilinear_saturates_binary_inputs() {
        let spec = BasisSpec::new(BasisKind::Multilinear { order: 3 }, Side::W);
        assert_eq!(spec.dim(1, 2), 8);
    }

    #[test]
    fn guards() {
        let d = toy(10, 1, 2);
        assert!(matches!(
            build_basis(&BasisSpec::new(BasisKind::Polynomial { degree: 0 }, Side::W), &d),
            Err(DataError::BadDegree)
        ));
        assert!(matches!(
            build_basis(&BasisSpec::new(BasisKind::Polynomial { degree: 3 }, Side::W), &d),
            Err(DataError::DimensionOverflow { d: 20, cap: 10 })
        ));
    }

    #[test]
    fn spline_is_linear_beyond_boundary_knots() {
        let knots = vec![0.0, 1.0, 2.0, 3.0];
        let f = |x: f64| {
            let mut v = Vec::new();
            natural_spline_terms(x, &knots, &mut v);
            v
        };
        // Second differences vanish outside [0, 3].
        for x0 in [-3.0, 4.0] {
            let (a, b, c) = (f(x0), f(x0 + 1.0), f(x0 + 2.0));
            for j in 0..a.len() {
                assert!((a[j] - 2.0 * b[j] + c[j]).abs() < 1e-9);
            }
        }
        let d = toy(30, 1, 1);
        let spec = BasisSpec::natural_spline(&d, Side::W, 4).unwrap();
        let b = build_basis(&spec, &d).unwrap();
        assert_eq!(b.ncols(), spec.dim(1, 1));
    }

    proptest! {
        #[test]
        fn polynomial_dimension_is_binomial(p in 1usize..=2, q in 0usize..=2, degree in 1usize..=4) {
            let spec = BasisSpec::new(BasisKind::Polynomial { degree }, Side::W);
            prop_assert_eq!(spec.dim(p, q), binom(p + q + degree, degree));
            let d = toy(200, p, q);
            let b = build_basis(&spec, &d).unwrap();
            prop_assert_eq!(b.ncols(), binom(p + q + degree, degree));
            let again = build_basis(&spec, &d).unwrap();
            prop_assert!(b.iter().zip(again.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }
}
