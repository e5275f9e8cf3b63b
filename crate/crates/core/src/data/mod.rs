//! Observed-data representation, ingestion, preprocessing, screening and basis construction.

mod basis;
mod io;
mod preprocess;
mod rhc;
mod screen;

pub use basis::{build_basis, BasisKind, BasisSpec, Side};
pub use io::{load_dataset, ColumnRoles, RawTable};
pub use preprocess::{fit_preprocess, ColumnRule, FitScope, FittedOn, PreprocessPlan};
pub use rhc::{load_rhc, rhc_from_table, RhcSummary, RHC_EXCLUDED};
pub use screen::screen_covariates;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed table: {0}")]
    Csv(#[from] csv::Error),
    #[error("empty file")]
    EmptyFile,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-binary treatment: value `{value}` in row {row}")]
    NonBinaryTreatment { row: usize, value: String },
    #[error("non-numeric value `{value}` in column `{column}`")]
    NonNumeric { column: String, value: String },
    #[error("column `{0}` is entirely missing on the fitting rows")]
    AllMissing(String),
    #[error("preprocessing scope has no rows")]
    EmptyScope,
    #[error("treatment arm {0} has no rows")]
    EmptyArm(u8),
    #[error("requested {k} screened covariates but only {available} usable features exist")]
    ScreenTooMany { k: usize, available: usize },
    #[error("basis degree must be at least 1")]
    BadDegree,
    #[error("basis dimension {d} exceeds cap {cap}")]
    DimensionOverflow { d: usize, cap: usize },
    #[error("basis needs numeric, finite inputs; column `{0}` is not")]
    NotPreprocessed(String),
    #[error("invalid basis specification: {0}")]
    BadSpec(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// One column of a proxy or covariate block. Missing numeric cells are NaN.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            Column::Numeric(v) => Some(v),
            Column::Categorical(_) => None,
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

/// Named columns making up the Z, W or X block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Block {
    pub names: Vec<String>,
    pub columns: Vec<Column>,
}

impl Block {
    pub fn numeric(names: Vec<String>, columns: Vec<Vec<f64>>) -> Self {
        assert_eq!(names.len(), columns.len());
        Block { names, columns: columns.into_iter().map(Column::Numeric).collect() }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Numeric column `j`; errors if it is categorical or holds a non-finite value.
    pub fn finite_column(&self, j: usize) -> Result<&[f64]> {
        match &self.columns[j] {
            Column::Numeric(v) if v.iter().all(|x| x.is_finite()) => Ok(v),
            _ => Err(DataError::NotPreprocessed(self.names[j].clone())),
        }
    }

    fn select(&self, rows: &[usize]) -> Block {
        Block { names: self.names.clone(), columns: self.columns.iter().map(|c| c.select(rows)).collect() }
    }
}

/// Rows of (Y, A, Z, W, X).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub a: Vec<u8>,
    pub z: Block,
    pub w: Block,
    pub x: Block,
    /// Rows removed at ingestion because Y or A was missing.
    pub dropped_rows: usize,
}

impl Dataset {
    /// Builds a dataset from numeric blocks, checking shapes and the treatment coding.
    pub fn new(y: Vec<f64>, a: Vec<u8>, z: Block, w: Block, x: Block) -> Result<Self> {
        let n = y.len();
        if a.len() != n {
            return Err(DataError::BadSpec(format!("treatment has {} rows, outcome has {n}", a.len())));
        }
        if let Some(row) = a.iter().position(|&v| v > 1) {
            return Err(DataError::NonBinaryTreatment { row, value: a[row].to_string() });
        }
        for block in [&z, &w, &x] {
            if let Some(c) = block.columns.iter().find(|c| c.len() != n) {
                return Err(DataError::BadSpec(format!("block column has {} rows, expected {n}", c.len())));
            }
        }
        Ok(Dataset { y, a, z, w, x, dropped_rows: 0 })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn arm_count(&self, arm: u8) -> usize {
        self.a.iter().filter(|&&v| v == arm).count()
    }

    /// Errors unless both arms have at least one row.
    pub fn require_both_arms(&self) -> Result<()> {
        for arm in 0..2 {
            if self.arm_count(arm) == 0 {
                return Err(DataError::EmptyArm(arm));
            }
        }
        Ok(())
    }

    /// True when every block is numeric and every value finite.
    pub fn is_preprocessed(&self) -> bool {
        self.y.iter().all(|v| v.is_finite())
            && [&self.z, &self.w, &self.x].iter().all(|b| {
                b.columns.iter().all(|c| matches!(c, Column::Numeric(v) if v.iter().all(|x| x.is_finite())))
            })
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            a: rows.iter().map(|&i| self.a[i]).collect(),
            z: self.z.select(rows),
            w: self.w.select(rows),
            x: self.x.select(rows),
            dropped_rows: 0,
        }
    }
}
