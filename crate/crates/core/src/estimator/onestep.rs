use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Which outcome transform the bridge targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Functional {
    /// 1(Y <= y).
    Indicator,
    /// (t - Y)_+.
    Shortfall,
}

impl Functional {
    pub fn eval(self, y: f64, point: f64) -> f64 {
        match self {
            Functional::Indicator => (y <= point) as u8 as f64,
            Functional::Shortfall => (point - y).max(0.0),
        }
    }
}

/// Estimating-equation form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Score {
    /// h + 1(A=a) q (B - h).
    Pdr,
    /// h alone (outcome-bridge plug-in).
    Por,
    /// 1(A=a) q B (treatment-bridge weighting).
    Pipw,
}

/// Estimator label carried by curve estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pdr,
    Por,
    Pipw,
    NaiveAipw,
    /// Scores evaluated at the true bridges.
    Oracle,
}

impl From<Score> for Method {
    fn from(s: Score) -> Self {
        match s {
            Score::Pdr => Method::Pdr,
            Score::Por => Method::Por,
            Score::Pipw => Method::Pipw,
        }
    }
}

/// Point values and the n x K centered influence matrix for one arm.
#[derive(Clone, Debug)]
pub struct ArmCurve {
    pub values: Vec<f64>,
    pub influence: DMatrix<f64>,
}

impl ArmCurve {
    /// Values are column means of `scores`; influence is `scores` minus those means.
    pub fn from_scores(mut scores: DMatrix<f64>) -> Self {
        let n = scores.nrows() as f64;
        let mut values = Vec::with_capacity(scores.ncols());
        for mut col in scores.column_iter_mut() {
            let m = col.sum() / n;
            col.add_scalar_mut(-m);
            values.push(m);
        }
        ArmCurve { values, influence: scores }
    }

    pub fn n(&self) -> usize {
        self.influence.nrows()
    }

    /// Standard deviation (divisor n) of influence column k.
    pub fn influence_sd(&self, k: usize) -> f64 {
        (self.influence.column(k).norm_squared() / self.n() as f64).sqrt()
    }
}

/// Scores evaluated at given nuisance values.
///
/// `h` is n x K (bridge values per row and grid point), `q` is the dual bridge per row.
#[allow(clippy::too_many_arguments)]
pub fn scores_from_nuisances(
    score: Score,
    functional: Functional,
    y: &[f64],
    a: &[u8],
    arm: u8,
    grid: &[f64],
    h: &DMatrix<f64>,
    q: &DVector<f64>,
) -> DMatrix<f64> {
    let (n, k) = (y.len(), grid.len());
    assert_eq!(h.shape(), (n, k));
    assert_eq!(q.len(), n);
    let mut out = DMatrix::zeros(n, k);
    for (j, &point) in grid.iter().enumerate() {
        for i in 0..n {
            let treated = (a[i] == arm) as u8 as f64;
            let b = functional.eval(y[i], point);
            out[(i, j)] = match score {
                Score::Pdr => h[(i, j)] + treated * q[i] * (b - h[(i, j)]),
                Score::Por => h[(i, j)],
                Score::Pipw => treated * q[i] * b,
            };
        }
    }
    out
}

/// Per-arm one-step CDF curves on a threshold grid.
#[derive(Clone, Debug)]
pub struct CdfProcessEstimate {
    pub thresholds: Vec<f64>,
    pub arms: [ArmCurve; 2],
    pub method: Method,
}

impl CdfProcessEstimate {
    pub fn n(&self) -> usize {
        self.arms[0].n()
    }

    pub fn values(&self, arm: u8) -> &[f64] {
        &self.arms[arm as usize].values
    }

    pub fn influence(&self, arm: u8) -> &DMatrix<f64> {
        &self.arms[arm as usize].influence
    }
}

/// Per-arm one-step shortfall curves S_a(t) = E(t - Y(a))_+ on a level grid.
#[derive(Clone, Debug)]
pub struct ShortfallEstimate {
    pub levels: Vec<f64>,
    pub arms: [ArmCurve; 2],
    pub method: Method,
}

impl ShortfallEstimate {
    pub fn n(&self) -> usize {
        self.arms[0].n()
    }
}
