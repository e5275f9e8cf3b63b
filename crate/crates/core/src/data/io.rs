use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Block, Column, DataError, Dataset, Result};

/// Maps analysis roles to column headers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub y: String,
    pub a: String,
    pub z: Vec<String>,
    pub w: Vec<String>,
    #[serde(default)]
    pub x: Vec<String>,
}

/// Header plus string cells; empty cells mean missing.
#[derive(Clone, Debug)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
            return Err(DataError::EmptyFile);
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(|c| c.trim().to_string()).collect());
        }
        if rows.is_empty() {
            return Err(DataError::EmptyFile);
        }
        Ok(RawTable { headers, rows })
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| DataError::MissingColumn(name.to_string()))
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&str> {
        let c = self.rows[row][col].as_str();
        if c.is_empty() || c.eq_ignore_ascii_case("na") {
            None
        } else {
            Some(c)
        }
    }

    /// Numeric column if every present cell parses as a float, otherwise categorical.
    pub fn typed_column(&self, col: usize, rows: &[usize]) -> Column {
        let parsed: Option<Vec<f64>> = rows
            .iter()
            .map(|&r| match self.cell(r, col) {
                None => Some(f64::NAN),
                Some(s) => s.parse::<f64>().ok(),
            })
            .collect();
        match parsed {
            Some(v) => Column::Numeric(v),
            None => Column::Categorical(rows.iter().map(|&r| self.cell(r, col).map(str::to_string)).collect()),
        }
    }

    pub fn block(&self, names: &[String], rows: &[usize]) -> Result<Block> {
        let mut columns = Vec::with_capacity(names.len());
        for name in names {
            columns.push(self.typed_column(self.index(name)?, rows));
        }
        Ok(Block { names: names.to_vec(), columns })
    }
}

pub(crate) fn parse_treatment(value: &str, row: usize) -> Result<u8> {
    match value.parse::<f64>() {
        Ok(0.0) => Ok(0),
        Ok(1.0) => Ok(1),
        _ => Err(DataError::NonBinaryTreatment { row, value: value.to_string() }),
    }
}

/// Reads a comma-separated table and assigns columns to roles.
///
/// Rows with a missing outcome or treatment are dropped and counted.
pub fn load_dataset(path: &Path, roles: &ColumnRoles) -> Result<Dataset> {
    let table = RawTable::read(path)?;
    dataset_from_table(&table, roles)
}

pub(crate) fn dataset_from_table(table: &RawTable, roles: &ColumnRoles) -> Result<Dataset> {
    let yi = table.index(&roles.y)?;
    let ai = table.index(&roles.a)?;
    for name in roles.z.iter().chain(&roles.w).chain(&roles.x) {
        table.index(name)?;
    }
    let mut keep = Vec::new();
    let mut y = Vec::new();
    let mut a = Vec::new();
    for r in 0..table.rows.len() {
        let (Some(ys), Some(as_)) = (table.cell(r, yi), table.cell(r, ai)) else { continue };
        let yv = ys
            .parse::<f64>()
            .map_err(|_| DataError::NonNumeric { column: roles.y.clone(), value: ys.to_string() })?;
        a.push(parse_treatment(as_, r)?);
        y.push(yv);
        keep.push(r);
    }
    let mut ds = Dataset::new(
        y,
        a,
        table.block(&roles.z, &keep)?,
        table.block(&roles.w, &keep)?,
        table.block(&roles.x, &keep)?,
    )?;
    ds.dropped_rows = table.rows.len() - keep.len();
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roles() -> ColumnRoles {
        ColumnRoles {
            y: "y".into(),
            a: "a".into(),
            z: vec!["z1".into()],
            w: vec!["w1".into()],
            x: vec!["x1".into()],
        }
    }

    #[test]
    fn three_row_table_passes_through() {
        let t = RawTable::from_reader("y,a,z1,w1,x1\n1.0,0,0.5,1,2\n2.0,1,0.1,0,3\n3.5,1,0.2,1,4\n".as_bytes()).unwrap();
        let ds = dataset_from_table(&t, &roles()).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.z.width(), 1);
        assert_eq!(ds.w.width(), 1);
        assert_eq!(ds.a, vec![0, 1, 1]);
        assert_eq!(ds.y, vec![1.0, 2.0, 3.5]);
    }

    #[test]
    fn rejects_non_binary_treatment() {
        let t = RawTable::from_reader("y,a,z1,w1,x1\n1.0,2,0.5,1,2\n".as_bytes()).unwrap();
        let err = dataset_from_table(&t, &roles()).unwrap_err();
        assert!(err.to_string().contains("non-binary treatment"));
    }

    #[test]
    fn drops_rows_missing_outcome_or_treatment() {
        let t = RawTable::from_reader("y,a,z1,w1,x1\n,0,0.5,1,2\n2.0,,0.1,0,3\n3.5,1,,1,cat\n".as_bytes()).unwrap();
        let ds = dataset_from_table(&t, &roles()).unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.dropped_rows, 2);
        assert!(ds.z.columns[0].as_numeric().unwrap()[0].is_nan());
        assert!(matches!(ds.x.columns[0], Column::Categorical(_)));
    }

    #[test]
    fn missing_column_and_empty_file() {
        let t = RawTable::from_reader("y,a,z1,w1\n1,0,1,1\n".as_bytes()).unwrap();
        assert!(matches!(dataset_from_table(&t, &roles()), Err(DataError::MissingColumn(c)) if c == "x1"));
        assert!(matches!(RawTable::from_reader("".as_bytes()), Err(DataError::EmptyFile)));
        assert!(matches!(RawTable::from_reader("y,a\n".as_bytes()), Err(DataError::EmptyFile)));
    }
}
