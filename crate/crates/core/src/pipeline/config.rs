use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bands::MultiplierLaw;
use crate::data::ColumnRoles;
use crate::estimator::{SolverConfig, DEFAULT_PROPENSITY_CLIP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Estimate,
    Simulate,
    Diagnose,
    /// Alias of `simulate` with component 2b.
    GaussianBench,
}

/// How a data file is turned into (Y, A, Z, W, X).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "kebab-case")]
pub enum Recipe {
    /// Right heart catheterization table: log(1 + hospital days), fixed proxies.
    Rhc,
    /// Generic table with explicit column roles.
    Table { roles: ColumnRoles },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(flatten)]
    pub recipe: Recipe,
}

/// Basis family for both bridges. `RealdataInteraction` screens X on the full sample first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BasisChoice {
    RealdataInteraction { screen: usize },
    Polynomial { degree: usize },
    Multilinear { order: usize },
    /// Additive natural splines with this many knots per input.
    Spline { knots: usize },
}

impl std::fmt::Display for BasisChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BasisChoice::RealdataInteraction { screen } => write!(f, "realdata-interaction(screen={screen})"),
            BasisChoice::Polynomial { degree } => write!(f, "polynomial(degree={degree})"),
            BasisChoice::Multilinear { order } => write!(f, "multilinear(order={order})"),
            BasisChoice::Spline { knots } => write!(f, "spline(knots={knots})"),
        }
    }
}

/// Threshold grid: `points` empirical quantiles of Y at equally spaced levels in [lower, upper].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub points: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub folds: usize,
    pub basis: BasisChoice,
    pub solver: SolverConfig,
    pub standardize: bool,
    pub grid: GridConfig,
    pub taus: Vec<f64>,
    pub cvar_taus: Vec<f64>,
    pub alpha: f64,
    pub multipliers: usize,
    pub law: MultiplierLaw,
    pub propensity_clip: (f64, f64),
}

/// τ = 0.10, 0.15, ..., 0.90.
pub fn qte_grid() -> Vec<f64> {
    (2..=18).map(|i| i as f64 * 0.05).map(|t| (t * 100.0).round() / 100.0).collect()
}

impl Default for EstimatorConfig {
    /// The real-data recipe: five folds, five screened covariates, ridge 0.1 n^{-1/2},
    /// 61-point grid over the 2nd..98th percentiles, M = 1000 Rademacher draws.
    fn default() -> Self {
        EstimatorConfig {
            folds: 5,
            basis: BasisChoice::RealdataInteraction { screen: 5 },
            solver: SolverConfig::ridge(0.1),
            standardize: true,
            grid: GridConfig { points: 61, lower: 0.02, upper: 0.98 },
            taus: qte_grid(),
            cvar_taus: vec![0.25, 0.5, 0.75],
            alpha: 0.05,
            multipliers: 1000,
            law: MultiplierLaw::Rademacher,
            propensity_clip: DEFAULT_PROPENSITY_CLIP,
        }
    }
}

/// Simulation component ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentId {
    #[serde(rename = "1")]
    One,
    /// Weak-proxy sweep.
    #[serde(rename = "2a")]
    TwoA,
    /// Gaussian inverse benchmark.
    #[serde(rename = "2b")]
    TwoB,
    #[serde(rename = "3")]
    Three,
}

impl std::str::FromStr for ComponentId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "1" => Ok(ComponentId::One),
            "2a" => Ok(ComponentId::TwoA),
            "2b" => Ok(ComponentId::TwoB),
            "3" => Ok(ComponentId::Three),
            other => Err(format!("unknown component `{other}` (expected 1, 2a, 2b or 3)")),
        }
    }
}

/// Overrides applied on top of a component's preset constants. Absent fields keep the preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub component: ComponentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    /// Proxy relevance for component 1 (and the DGP used by `diagnose`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl SimulationConfig {
    pub fn preset(component: ComponentId) -> Self {
        SimulationConfig { component, sample_sizes: None, reps: None, multipliers: None, alpha: None, folds: None, rho: None }
    }
}

/// Dimension sweep and smoothness exponents for `diagnose`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Bases to sweep; empty picks a default ladder for the input.
    pub bases: Vec<BasisChoice>,
    /// Ill-posedness exponents for the d^{1+2 alpha} sqrt(log n)/n remainder proxy.
    pub smoothness: Vec<f64>,
    /// Sample size when diagnosing a simulated design.
    pub n: usize,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig { bases: Vec::new(), smoothness: vec![0.5, 1.0], n: 4000 }
    }
}

/// Everything a run depends on. Serialized into every manifest; loading a manifest's
/// `config` reproduces the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_seed() -> u64 {
    20_240_601
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            data: None,
            simulation: None,
            estimator: EstimatorConfig::default(),
            diagnose: DiagnoseConfig::default(),
            seed: default_seed(),
            out: None,
        }
    }

    /// The real-data recipe on an RHC file.
    pub fn rhc(path: impl Into<PathBuf>) -> Self {
        RunConfig { data: Some(DataConfig { path: path.into(), recipe: Recipe::Rhc }), ..Self::new(Command::Estimate) }
    }

    /// Parses a config or a manifest (whose `config` field holds the config).
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("config") {
            Some(inner) if value.get("config_hash").is_some() => serde_json::from_value(inner.clone()),
            _ => serde_json::from_value(value),
        }
    }

    /// First 16 hex digits of SHA-256 over the compact JSON of the config without `out`.
    pub fn hash(&self) -> String {
        let canonical = RunConfig { out: None, ..self.clone() };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qte_grid_has_seventeen_levels() {
        let g = qte_grid();
        assert_eq!(g.len(), 17);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[8], 0.5);
        assert_eq!(g[16], 0.9);
    }

    #[test]
    fn round_trip_and_hash() {
        let mut cfg = RunConfig::rhc("/data/rhc.csv");
        cfg.simulation = Some(SimulationConfig { reps: Some(3), ..SimulationConfig::preset(ComponentId::TwoA) });
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let moved = RunConfig { out: Some("elsewhere".into()), ..cfg.clone() };
        assert_eq!(moved.hash(), cfg.hash());
        let reseeded = RunConfig { seed: 7, ..cfg.clone() };
        assert_ne!(reseeded.hash(), cfg.hash());
        let manifest = serde_json::json!({ "config": cfg, "config_hash": cfg.hash() });
        assert_eq!(RunConfig::from_json(&manifest.to_string()).unwrap(), cfg);
    }

    #[test]
    fn minimal_file_uses_defaults_and_rejects_unknown_keys() {
        let cfg = RunConfig::from_json(r#"{"command":"estimate","data":{"path":"x.csv","recipe":"rhc"}}"#).unwrap();
        assert_eq!(cfg.estimator, EstimatorConfig::default());
        assert_eq!(cfg.seed, 20_240_601);
        assert!(RunConfig::from_json(r#"{"command":"estimate","sed":1}"#).is_err());
        let partial = RunConfig::from_json(r#"{"command":"estimate","estimator":{"folds":3}}"#).unwrap();
        assert_eq!(partial.estimator.folds, 3);
        assert_eq!(partial.estimator.multipliers, 1000);
        let table = r#"{"command":"estimate","data":{"path":"x.csv","recipe":"table",
            "roles":{"y":"y","a":"a","z":["z"],"w":["w"]}}}"#;
        assert!(matches!(RunConfig::from_json(table).unwrap().data.unwrap().recipe, Recipe::Table { .. }));
    }

    #[test]
    fn component_ids_parse() {
        assert_eq!("2b".parse::<ComponentId>().unwrap(), ComponentId::TwoB);
        assert!("4".parse::<ComponentId>().is_err());
        assert_eq!(serde_json::to_string(&ComponentId::TwoA).unwrap(), "\"2a\"");
    }
}
