use std::path::Path;

use serde::Serialize;

use super::config::{BasisChoice, DataConfig, EstimatorConfig, GridConfig, Recipe, RunConfig};
use super::report::{num, write_json, Manifest, TableWriter};
use super::{FailureKind, PipelineError, Stage};
use crate::bands::{
    cdf_band, invert_band, isotonic_project_unit, monotone_envelope, multiplier_critical_value, quantile_estimates,
    BandSet, QuantileBands,
};
use crate::data::{
    fit_preprocess, load_dataset, load_rhc, screen_covariates, BasisKind, BasisSpec, Dataset, FitScope, RhcSummary, Side,
};
use crate::estimator::{
    crossfit, cvar_estimate, make_folds, naive_aipw_cdf, CdfProcessEstimate, CrossfitConfig, CvarEstimate,
    FoldAveragedDiagnostics, Score,
};
use crate::simulators::mix_seed;
use crate::stats::{quantile_type7, sorted_copy};

const FOLD_TAG: u64 = 0x666f6c64;
const MULTIPLIER_TAG: u64 = 0x6d756c74;

pub(super) fn fold_seed(seed: u64) -> u64 {
    mix_seed(seed, FOLD_TAG)
}

fn config_error(msg: impl Into<String>) -> PipelineError {
    PipelineError::new(Stage::Config, FailureKind::Config(msg.into()))
}

/// Rejects settings that cannot produce a run.
pub fn validate_estimator(est: &EstimatorConfig) -> Result<(), PipelineError> {
    let g = &est.grid;
    if g.points < 2 || !(0.0..1.0).contains(&g.lower) || !(g.lower < g.upper && g.upper <= 1.0) {
        return Err(config_error(format!("grid needs >= 2 points and 0 <= lower < upper <= 1, got {g:?}")));
    }
    if !(est.alpha > 0.0 && est.alpha < 1.0) {
        return Err(config_error(format!("alpha must lie in (0, 1), got {}", est.alpha)));
    }
    if est.multipliers == 0 {
        return Err(config_error("multipliers must be positive"));
    }
    if let Some(t) = est.taus.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        return Err(config_error(format!("quantile level {t} outside (0, 1)")));
    }
    if let Some(t) = est.cvar_taus.iter().find(|&&t| !(t > 0.0 && t <= 1.0)) {
        return Err(config_error(format!("CVaR level {t} outside (0, 1]")));
    }
    let (lo, hi) = est.propensity_clip;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(config_error(format!("propensity clip ({lo}, {hi}) must satisfy 0 < lo < hi < 1")));
    }
    Ok(())
}

/// Reads the data file with its recipe.
pub fn ingest(dc: &DataConfig) -> Result<(Dataset, Option<RhcSummary>), PipelineError> {
    let stage = |e| PipelineError::new(Stage::Ingestion, FailureKind::Data(e));
    let (data, summary) = match &dc.recipe {
        Recipe::Rhc => load_rhc(&dc.path).map(|(d, s)| (d, Some(s))).map_err(stage)?,
        Recipe::Table { roles } => (load_dataset(&dc.path, roles).map_err(stage)?, None),
    };
    data.require_both_arms().map_err(stage)?;
    Ok((data, summary))
}

/// Full-sample imputation, standardization and encoding.
pub fn preprocess(raw: &Dataset) -> Result<Dataset, PipelineError> {
    let stage = |e| PipelineError::new(Stage::Preprocessing, FailureKind::Data(e));
    fit_preprocess(raw, &FitScope::Full).map_err(stage)?.apply(raw).map_err(stage)
}

/// Bases for both bridges; screening (full sample) happens here. Returns screened names.
pub fn resolve_basis(data: &Dataset, choice: &BasisChoice) -> Result<(BasisSpec, BasisSpec, Vec<String>), PipelineError> {
    let both = |kind: BasisKind| (BasisSpec::new(kind.clone(), Side::W), BasisSpec::new(kind, Side::Z));
    let basis_error = |e| PipelineError::new(Stage::Basis, FailureKind::Data(e));
    Ok(match choice {
        BasisChoice::RealdataInteraction { screen } => {
            let screened = screen_covariates(data, *screen)
                .map_err(|e| PipelineError::new(Stage::Screening, FailureKind::Data(e)))?;
            let names = screened.iter().map(|&j| data.x.names[j].clone()).collect();
            let (w, z) = both(BasisKind::RealdataInteraction { screened });
            (w, z, names)
        }
        BasisChoice::Polynomial { degree } => {
            let (w, z) = both(BasisKind::Polynomial { degree: *degree });
            (w, z, Vec::new())
        }
        BasisChoice::Multilinear { order } => {
            let (w, z) = both(BasisKind::Multilinear { order: *order });
            (w, z, Vec::new())
        }
        BasisChoice::Spline { knots } => (
            BasisSpec::natural_spline(data, Side::W, *knots).map_err(basis_error)?,
            BasisSpec::natural_spline(data, Side::Z, *knots).map_err(basis_error)?,
            Vec::new(),
        ),
    })
}

/// Empirical type-7 quantiles of `y` at equally spaced levels; repeated values collapse.
pub fn empirical_grid(y: &[f64], grid: &GridConfig) -> Vec<f64> {
    let sorted = sorted_copy(y);
    let step = (grid.upper - grid.lower) / (grid.points - 1) as f64;
    let mut out: Vec<f64> = (0..grid.points).map(|k| quantile_type7(&sorted, grid.lower + step * k as f64)).collect();
    out.dedup();
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct QteRow {
    pub tau: f64,
    pub naive: f64,
    pub por: f64,
    pub pipw: f64,
    pub pdr: f64,
    pub pdr_lower: f64,
    pub pdr_upper: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateDiagnostics {
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub dropped_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhc: Option<RhcSummary>,
    pub x_features: usize,
    pub screened: Vec<String>,
    pub d_w: usize,
    pub d_z: usize,
    pub grid_points_requested: usize,
    pub grid_points: usize,
    pub critical_value: f64,
    pub band_half_width: f64,
    pub naive_clipped_share: f64,
    pub spectral: FoldAveragedDiagnostics,
    /// Per fold, per arm: smallest singular value of the arm-conditional cross moment.
    pub fold_kappa_min_conditional: Vec<[f64; 2]>,
    pub cvar_boundary_maximizers: usize,
}

/// In-memory results of the estimate pipeline.
#[derive(Clone, Debug)]
pub struct EstimateOutputs {
    pub thresholds: Vec<f64>,
    /// naive, POR, PIPW, PDR.
    pub curves: Vec<(&'static str, CdfProcessEstimate)>,
    pub band: BandSet,
    pub quantile_bands: QuantileBands,
    pub qte: Vec<QteRow>,
    pub cvar: Vec<(&'static str, CvarEstimate)>,
    pub diagnostics: EstimateDiagnostics,
}

fn qte_of(est: &CdfProcessEstimate, taus: &[f64]) -> Vec<f64> {
    let [q0, q1] = quantile_estimates(est, taus);
    q1.iter().zip(&q0).map(|(a, b)| a - b).collect()
}

/// Runs every stage after ingestion on the raw dataset.
pub fn estimate_dataset(
    raw: &Dataset,
    rhc: Option<RhcSummary>,
    est: &EstimatorConfig,
    seed: u64,
) -> Result<EstimateOutputs, PipelineError> {
    validate_estimator(est)?;
    let data = preprocess(raw)?;
    let (basis_w, basis_z, screened) = resolve_basis(&data, &est.basis)?;
    let thresholds = empirical_grid(&data.y, &est.grid);
    if thresholds.len() < 2 {
        return Err(PipelineError::new(Stage::Ingestion, FailureKind::Config("outcome has fewer than two distinct grid values".into())));
    }
    let n = data.n();
    let estimation = |e| PipelineError::new(Stage::Estimation, FailureKind::Estimate(e));
    let folds = make_folds(n, est.folds, fold_seed(seed)).map_err(|e| PipelineError::new(Stage::Config, FailureKind::Estimate(e)))?;
    let cc = CrossfitConfig { basis_w, basis_z, solver: est.solver.clone(), standardize: est.standardize };
    let cf = crossfit(&data, &cc, &folds, &thresholds, &thresholds).map_err(estimation)?;
    let (naive, naive_report) = naive_aipw_cdf(&data, &folds, &thresholds, est.propensity_clip).map_err(estimation)?;
    let pdr = cf.cdf(Score::Pdr);
    let curves = vec![("naive", naive), ("por", cf.cdf(Score::Por)), ("pipw", cf.cdf(Score::Pipw)), ("pdr", pdr.clone())];

    let critical_value = multiplier_critical_value(
        &[pdr.influence(0), pdr.influence(1)],
        est.multipliers,
        est.alpha,
        est.law,
        mix_seed(seed, MULTIPLIER_TAG),
    );
    let band = cdf_band(&pdr, critical_value, est.alpha, est.multipliers, est.law);
    let quantile_bands = invert_band(&monotone_envelope(&band), &est.taus);

    let effects: Vec<Vec<f64>> = curves.iter().map(|(_, c)| qte_of(c, &est.taus)).collect();
    let qte = est
        .taus
        .iter()
        .enumerate()
        .map(|(t, &tau)| QteRow {
            tau,
            naive: effects[0][t],
            por: effects[1][t],
            pipw: effects[2][t],
            pdr: effects[3][t],
            pdr_lower: quantile_bands.qte_lower[t],
            pdr_upper: quantile_bands.qte_upper[t],
        })
        .collect();

    let mut cvar = Vec::new();
    if !est.cvar_taus.is_empty() {
        for (name, score) in [("por", Score::Por), ("pipw", Score::Pipw), ("pdr", Score::Pdr)] {
            let c = cvar_estimate(&cf.shortfall(score), &est.cvar_taus, est.alpha, None).map_err(estimation)?;
            cvar.push((name, c));
        }
    }
    let cvar_boundary_maximizers =
        cvar.iter().flat_map(|(_, c)| c.arms.iter().flatten()).filter(|arm| arm.at_boundary).count();

    let diagnostics = EstimateDiagnostics {
        n,
        n_treated: data.arm_count(1),
        n_control: data.arm_count(0),
        dropped_rows: data.dropped_rows,
        rhc,
        x_features: data.x.width(),
        screened,
        d_w: cf.d_w,
        d_z: cf.d_z,
        grid_points_requested: est.grid.points,
        grid_points: thresholds.len(),
        critical_value,
        band_half_width: band.half_width(),
        naive_clipped_share: naive_report.clipped_share,
        spectral: cf.mean_diagnostics(),
        fold_kappa_min_conditional: cf.diagnostics.iter().map(|d| [d[0].kappa_min_conditional, d[1].kappa_min_conditional]).collect(),
        cvar_boundary_maximizers,
    };
    Ok(EstimateOutputs { thresholds, curves, band, quantile_bands, qte, cvar, diagnostics })
}

pub const ESTIMATE_OUTPUTS: [&str; 8] =
    ["cdf.csv", "bands.csv", "quantile_bands.csv", "qte.csv", "cvar.csv", "diagnostics.json", "manifest.json", "timing.json"];

/// Writes every estimate table into `dir`.
pub fn write_estimate(out: &EstimateOutputs, cfg: &RunConfig, dir: &Path) -> Result<(), PipelineError> {
    let hash = cfg.hash();
    let y_units = match cfg.data.as_ref().map(|d| &d.recipe) {
        Some(Recipe::Rhc) => "y in log(1 + hospital days)",
        _ => "y in outcome units",
    };

    let mut w = TableWriter::create(&dir.join("cdf.csv"), &format!("{y_units}; F in probability"), &hash, &["method", "arm", "y", "F_hat", "F_proj"])?;
    for (name, curve) in &out.curves {
        for arm in 0..2u8 {
            let proj = isotonic_project_unit(curve.values(arm));
            for (k, &y) in out.thresholds.iter().enumerate() {
                w.row([name.to_string(), arm.to_string(), num(y), num(curve.values(arm)[k]), num(proj[k])])?;
            }
        }
    }
    w.finish()?;

    let pdr = &out.curves[3].1;
    let env = monotone_envelope(&out.band);
    let mut w = TableWriter::create(
        &dir.join("bands.csv"),
        &format!("{y_units}; F, L, U in probability; PDR simultaneous band, critical value {}", num(out.band.critical_value)),
        &hash,
        &["arm", "y", "F_hat", "F_proj", "L", "U", "L_envelope", "U_envelope"],
    )?;
    for arm in 0..2usize {
        let proj = isotonic_project_unit(&pdr.arms[arm].values);
        for (k, &y) in out.thresholds.iter().enumerate() {
            w.row([
                arm.to_string(),
                num(y),
                num(pdr.arms[arm].values[k]),
                num(proj[k]),
                num(out.band.lower[arm][k]),
                num(out.band.upper[arm][k]),
                num(env.lower[arm][k]),
                num(env.upper[arm][k]),
            ])?;
        }
    }
    w.finish()?;

    let qb = &out.quantile_bands;
    let mut w = TableWriter::create(&dir.join("quantile_bands.csv"), y_units, &hash, &["tau", "QL0", "QU0", "QL1", "QU1", "dQL", "dQU"])?;
    for (t, &tau) in qb.taus.iter().enumerate() {
        w.row([tau, qb.lower[0][t], qb.upper[0][t], qb.lower[1][t], qb.upper[1][t], qb.qte_lower[t], qb.qte_upper[t]].map(num))?;
    }
    w.finish()?;

    let mut w = TableWriter::create(
        &dir.join("qte.csv"),
        &format!("QTE Q1(tau) - Q0(tau), {y_units}"),
        &hash,
        &["tau", "naive", "por", "pipw", "pdr", "pdr_lower", "pdr_upper"],
    )?;
    for r in &out.qte {
        w.row([r.tau, r.naive, r.por, r.pipw, r.pdr, r.pdr_lower, r.pdr_upper].map(num))?;
    }
    w.finish()?;

    let mut w = TableWriter::create(
        &dir.join("cvar.csv"),
        &format!("lower-tail CVaR, {y_units}"),
        &hash,
        &["method", "tau", "cvar0", "cvar1", "delta", "se", "lower", "upper", "boundary"],
    )?;
    for (name, c) in &out.cvar {
        for (j, e) in c.effects.iter().enumerate() {
            let boundary = c.arms[0][j].at_boundary || c.arms[1][j].at_boundary;
            let mut fields = vec![name.to_string()];
            fields.extend([e.tau, c.arms[0][j].c_hat, c.arms[1][j].c_hat, e.delta, e.se, e.lower, e.upper].map(num));
            fields.push(boundary.to_string());
            w.row(fields)?;
        }
    }
    w.finish()?;

    write_json(&dir.join("diagnostics.json"), &out.diagnostics)?;
    let seeds = vec![("folds", fold_seed(cfg.seed)), ("multipliers", mix_seed(cfg.seed, MULTIPLIER_TAG))];
    write_json(&dir.join("manifest.json"), &Manifest::new(cfg, seeds, ESTIMATE_OUTPUTS.to_vec()))
}

/// `estimate`: ingestion through report files.
pub fn run_estimate(cfg: &RunConfig, dir: &Path) -> Result<EstimateOutputs, PipelineError> {
    let dc = cfg.data.as_ref().ok_or_else(|| config_error("estimate needs a `data` section or --data"))?;
    validate_estimator(&cfg.estimator)?;
    let (raw, rhc) = ingest(dc)?;
    let out = estimate_dataset(&raw, rhc, &cfg.estimator, cfg.seed)?;
    write_estimate(&out, cfg, dir)?;
    Ok(out)
}
