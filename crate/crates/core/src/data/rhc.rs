use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::RawTable;
use super::{DataError, Dataset, Result};
use crate::stats;

/// Columns never used as covariates: identifiers, dates, follow-up outcomes,
/// the treatment and the proxies.
pub const RHC_EXCLUDED: &[&str] = &[
    "", "ptid", "sadmdte", "dschdte", "dthdte", "lstctdte", "death", "dth30", "t3d30", "adld3p",
    "swang1", "pafi1", "paco21", "ph1", "hema1",
];

pub const RHC_Z: [&str; 2] = ["pafi1", "paco21"];
pub const RHC_W: [&str; 2] = ["ph1", "hema1"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhcSummary {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub winsor_cap_days: f64,
    pub covariates: Vec<String>,
}

/// Reads the RHC table: Y = log(1 + hospital days) with days Winsorized at the 99.5th
/// percentile, A = right-heart catheterization, Z = (pafi1, paco21), W = (ph1, hema1),
/// X = remaining baseline columns.
pub fn load_rhc(path: &Path) -> Result<(Dataset, RhcSummary)> {
    rhc_from_table(&RawTable::read(path)?)
}

pub fn rhc_from_table(table: &RawTable) -> Result<(Dataset, RhcSummary)> {
    let adm = table.index("sadmdte")?;
    let dsc = table.index("dschdte")?;
    let dth = table.index("dthdte")?;
    let trt = table.index("swang1")?;
    let num = |r: usize, c: usize| table.cell(r, c).and_then(|s| s.parse::<f64>().ok());
    let mut keep = Vec::new();
    let mut days = Vec::new();
    let mut a = Vec::new();
    for r in 0..table.rows.len() {
        let Some(start) = num(r, adm) else { continue };
        let Some(end) = num(r, dsc).or_else(|| num(r, dth)) else { continue };
        let d = end - start;
        if d <= 0.0 {
            continue;
        }
        let Some(t) = table.cell(r, trt) else { continue };
        let arm = match t {
            "RHC" => 1,
            "No RHC" => 0,
            other => super::io::parse_treatment(other, r)?,
        };
        keep.push(r);
        days.push(d);
        a.push(arm);
    }
    if keep.is_empty() {
        return Err(DataError::EmptyFile);
    }
    let cap = stats::quantile_type7(&stats::sorted_copy(&days), 0.995);
    let y = days.iter().map(|&d| (1.0 + d.min(cap)).ln()).collect();
    let covariates: Vec<String> =
        table.headers.iter().filter(|h| !RHC_EXCLUDED.contains(&h.as_str())).cloned().collect();
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let ds = Dataset {
        y,
        a,
        z: table.block(&names(&RHC_Z), &keep)?,
        w: table.block(&names(&RHC_W), &keep)?,
        x: table.block(&covariates, &keep)?,
        dropped_rows: table.rows.len() - keep.len(),
    };
    let summary = RhcSummary { rows_read: table.rows.len(), rows_kept: keep.len(), winsor_cap_days: cap, covariates };
    Ok((ds, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    #[test]
    fn outcome_is_log_days_with_fallback_and_positive_filter() {
        let mut csv = String::from("sadmdte,dschdte,dthdte,swang1,pafi1,paco21,ph1,hema1,age,cat1\n");
        csv += "10,20,,RHC,200,40,7.4,30,60,ARF\n";
        csv += "10,,15,No RHC,210,41,7.3,31,70,CHF\n";
        csv += "10,10,,RHC,220,42,7.2,32,80,ARF\n";
        for i in 0..200 {
            csv += &format!("0,{},,No RHC,230,43,7.1,33,{},MOSF\n", 5 + i, 50 + i % 20);
        }
        csv += "0,100000,,RHC,230,43,7.1,33,55,ARF\n";
        let t = RawTable::from_reader(csv.as_bytes()).unwrap();
        let (ds, s) = rhc_from_table(&t).unwrap();
        assert_eq!(s.rows_read, 204);
        assert_eq!(ds.n(), 203);
        assert_eq!(ds.y[0], 11f64.ln());
        assert_eq!(ds.y[1], 6f64.ln());
        assert_eq!(ds.a[..2], [1, 0]);
        assert!(*ds.y.last().unwrap() < 100001f64.ln());
        assert!((ds.y.last().unwrap() - (1.0 + s.winsor_cap_days).ln()).abs() < 1e-12);
        assert_eq!(s.covariates, vec!["age", "cat1"]);
        assert!(matches!(ds.x.columns[1], Column::Categorical(_)));
    }
}
