use serde::{Deserialize, Serialize};

use super::{Block, Column, DataError, Dataset, Result};
use crate::stats;

/// Rows a plan is fitted on.
#[derive(Clone, Debug)]
pub enum FitScope {
    Full,
    /// Training rows of a fold; `fold` is the held-out fold id.
    Rows { fold: usize, rows: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FittedOn {
    FullSample,
    FoldComplement(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ColumnRule {
    /// Median imputation then (v - mean) / sd; a zero sd maps the column to 0.
    Numeric { impute: f64, mean: f64, sd: f64 },
    /// Mode imputation then one-hot over sorted levels. Unseen levels map to the mode.
    Categorical { mode: String, levels: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockPlan {
    pub names: Vec<String>,
    pub rules: Vec<ColumnRule>,
}

/// Imputation, standardization and encoding statistics for the Z, W and X blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessPlan {
    pub z: BlockPlan,
    pub w: BlockPlan,
    pub x: BlockPlan,
    pub fitted_on: FittedOn,
}

/// Fits a plan using only the scope rows.
pub fn fit_preprocess(data: &Dataset, scope: &FitScope) -> Result<PreprocessPlan> {
    let all: Vec<usize>;
    let (rows, fitted_on) = match scope {
        FitScope::Full => {
            all = (0..data.n()).collect();
            (&all[..], FittedOn::FullSample)
        }
        FitScope::Rows { fold, rows } => (&rows[..], FittedOn::FoldComplement(*fold)),
    };
    if rows.is_empty() {
        return Err(DataError::EmptyScope);
    }
    Ok(PreprocessPlan {
        z: fit_block(&data.z, rows)?,
        w: fit_block(&data.w, rows)?,
        x: fit_block(&data.x, rows)?,
        fitted_on,
    })
}

fn fit_block(block: &Block, rows: &[usize]) -> Result<BlockPlan> {
    let rules = block
        .columns
        .iter()
        .zip(&block.names)
        .map(|(col, name)| fit_column(col, name, rows))
        .collect::<Result<_>>()?;
    Ok(BlockPlan { names: block.names.clone(), rules })
}

fn fit_column(col: &Column, name: &str, rows: &[usize]) -> Result<ColumnRule> {
    match col {
        Column::Numeric(v) => {
            let present: Vec<f64> = rows.iter().map(|&i| v[i]).filter(|x| !x.is_nan()).collect();
            if present.is_empty() {
                return Err(DataError::AllMissing(name.to_string()));
            }
            let impute = median(&present);
            let imputed: Vec<f64> = rows.iter().map(|&i| if v[i].is_nan() { impute } else { v[i] }).collect();
            let mean = stats::mean(&imputed);
            let sd = stats::variance(&imputed).sqrt();
            Ok(ColumnRule::Numeric { impute, mean, sd })
        }
        Column::Categorical(v) => {
            let mut counts: std::collections::BTreeMap<&str, usize> = Default::default();
            for &i in rows {
                if let Some(s) = &v[i] {
                    *counts.entry(s.as_str()).or_default() += 1;
                }
            }
            if counts.is_empty() {
                return Err(DataError::AllMissing(name.to_string()));
            }
            // BTreeMap order makes the first maximal count the smallest level.
            let max = *counts.values().max().unwrap();
            let mode = counts.iter().find(|(_, &c)| c == max).unwrap().0.to_string();
            let levels = counts.keys().map(|s| s.to_string()).collect();
            Ok(ColumnRule::Categorical { mode, levels })
        }
    }
}

fn median(xs: &[f64]) -> f64 {
    let s = stats::sorted_copy(xs);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

impl ColumnRule {
    /// Number of output columns.
    pub fn width(&self) -> usize {
        match self {
            ColumnRule::Numeric { .. } => 1,
            ColumnRule::Categorical { levels, .. } => levels.len(),
        }
    }
}

impl BlockPlan {
    fn apply(&self, block: &Block) -> Result<Block> {
        let mut names = Vec::new();
        let mut columns = Vec::new();
        for ((rule, col), name) in self.rules.iter().zip(&block.columns).zip(&self.names) {
            match (rule, col) {
                (ColumnRule::Numeric { impute, mean, sd }, Column::Numeric(v)) => {
                    let scale = if *sd > 0.0 { *sd } else { 1.0 };
                    let out = v
                        .iter()
                        .map(|&x| if *sd > 0.0 { ((if x.is_nan() { *impute } else { x }) - mean) / scale } else { 0.0 })
                        .collect();
                    names.push(name.clone());
                    columns.push(Column::Numeric(out));
                }
                (ColumnRule::Categorical { mode, levels }, Column::Categorical(v)) => {
                    for level in levels {
                        let out = v
                            .iter()
                            .map(|c| {
                                let c = c.as_deref().filter(|s| levels.iter().any(|l| l == s)).unwrap_or(mode);
                                if c == level {
                                    1.0
                                } else {
                                    0.0
                                }
                            })
                            .collect();
                        names.push(format!("{name}={level}"));
                        columns.push(Column::Numeric(out));
                    }
                }
                _ => return Err(DataError::BadSpec(format!("column `{name}` changed type since the plan was fitted"))),
            }
        }
        Ok(Block { names, columns })
    }
}

impl PreprocessPlan {
    /// Applies the plan to every row; the result is fully numeric and finite.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        Ok(Dataset {
            y: data.y.clone(),
            a: data.a.clone(),
            z: self.z.apply(&data.z)?,
            w: self.w.apply(&data.w)?,
            x: self.x.apply(&data.x)?,
            dropped_rows: data.dropped_rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(x: Block) -> Dataset {
        let n = x.columns[0].len();
        Dataset::new(vec![0.0; n], vec![0; n], Block::default(), Block::default(), x).unwrap()
    }

    #[test]
    fn numeric_median_imputation() {
        let d = ds(Block { names: vec!["v".into()], columns: vec![Column::Numeric(vec![1.0, 3.0, f64::NAN])] });
        let plan = fit_preprocess(&d, &FitScope::Full).unwrap();
        let ColumnRule::Numeric { impute, mean, sd } = plan.x.rules[0] else { panic!() };
        assert_eq!(impute, 2.0);
        assert_eq!(mean, 2.0);
        assert!((sd - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let out = plan.apply(&d).unwrap();
        assert_eq!(out.x.columns[0].as_numeric().unwrap()[2], 0.0);
    }

    #[test]
    fn categorical_mode_and_one_hot() {
        let col = Column::Categorical(vec![Some("a".into()), Some("a".into()), Some("b".into())]);
        let d = ds(Block { names: vec!["c".into()], columns: vec![col] });
        let plan = fit_preprocess(&d, &FitScope::Full).unwrap();
        let ColumnRule::Categorical { mode, .. } = &plan.x.rules[0] else { panic!() };
        assert_eq!(mode, "a");
        assert_eq!(plan.x.rules[0].width(), 2);
        let out = plan.apply(&d).unwrap();
        assert_eq!(out.x.names, vec!["c=a", "c=b"]);
        assert_eq!(out.x.columns[1].as_numeric().unwrap(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn refit_on_standardized_column_is_identity() {
        let d = ds(Block::numeric(vec!["v".into()], vec![vec![3.0, -1.0, 4.0, 1.5, 9.0, 2.6]]));
        let once = fit_preprocess(&d, &FitScope::Full).unwrap().apply(&d).unwrap();
        let plan2 = fit_preprocess(&once, &FitScope::Full).unwrap();
        let ColumnRule::Numeric { mean, sd, .. } = plan2.x.rules[0] else { panic!() };
        assert!(mean.abs() < 1e-12);
        assert!((sd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_missing_is_an_error() {
        let d = ds(Block { names: vec!["v".into()], columns: vec![Column::Numeric(vec![f64::NAN, f64::NAN])] });
        assert!(matches!(fit_preprocess(&d, &FitScope::Full), Err(DataError::AllMissing(_))));
    }

    #[test]
    fn fold_plan_ignores_evaluation_rows() {
        let d = ds(Block::numeric(vec!["v".into()], vec![vec![1.0, 2.0, 3.0, 4.0, 5.0]]));
        let scope = FitScope::Rows { fold: 1, rows: vec![0, 1, 2] };
        let plan = fit_preprocess(&d, &scope).unwrap();
        let mut mutated = d.clone();
        if let Column::Numeric(v) = &mut mutated.x.columns[0] {
            v[3] = 1e6;
            v[4] = f64::NAN;
        }
        assert_eq!(plan, fit_preprocess(&mutated, &scope).unwrap());
        assert_eq!(plan.fitted_on, FittedOn::FoldComplement(1));
    }
}
