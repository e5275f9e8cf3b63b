use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::ProximalDgp;
use super::oracle::{population_bridges, PopulationBridges};
use super::seeding::{mix_seed, replication_rng, with_pool};
use super::truth::{exact_truth, truth_grid, TruthTable};
use crate::bands::{
    cdf_band, estimated_density_delta_band, invert_band, isotonic_project_unit, monotone_envelope,
    multiplier_critical_value, nonexpansive, pointwise_interval, quantile_estimates, silverman_bandwidth,
    weighted_sq_dist, MultiplierLaw,
};
use crate::data::{BasisKind, BasisSpec, Dataset, Side};
use crate::estimator::{
    crossfit, cvar_estimate, make_folds, naive_aipw_cdf, CdfProcessEstimate, CrossfitConfig, FoldAveragedDiagnostics,
    Method, Score, ShortfallEstimate, SolverConfig, DEFAULT_PROPENSITY_CLIP,
};
use crate::stats::mean;

/// Estimator settings shared by the simulation drivers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimEstimator {
    pub c_lambda: f64,
    pub folds: usize,
    pub k_y: usize,
    pub multipliers: usize,
    #[serde(default)]
    pub law: MultiplierLaw,
    pub alpha: f64,
    /// Order of the multilinear basis in (proxy, X1, X2).
    pub basis_order: usize,
}

impl SimEstimator {
    pub fn crossfit_config(&self) -> CrossfitConfig {
        let spec = |side| BasisSpec::new(BasisKind::Multilinear { order: self.basis_order }, side);
        CrossfitConfig {
            basis_w: spec(Side::W),
            basis_z: spec(Side::Z),
            solver: SolverConfig::ridge(self.c_lambda),
            standardize: true,
        }
    }
}

/// Truth, grid and oracle bridges for one design, computed once per configuration.
#[derive(Clone, Debug)]
pub struct ExperimentSetup {
    pub dgp: ProximalDgp,
    /// Threshold grid, including the target point Q_1(0.5).
    pub truth: TruthTable,
    pub target_index: usize,
    pub median_index: usize,
    pub oracle: Option<PopulationBridges>,
}

impl ExperimentSetup {
    pub fn new(dgp: &ProximalDgp, est: &SimEstimator, taus: &[f64], cvar_taus: &[f64], with_oracle: bool) -> Self {
        let target = dgp.counterfactual_law(1).quantile(0.5);
        let mut grid = truth_grid(dgp, est.k_y);
        grid.push(target);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let target_index = grid.iter().position(|&y| y == target).expect("target inserted");
        let truth = exact_truth(dgp, &grid, taus, cvar_taus);
        let median_index = taus.iter().position(|&t| t == 0.5).unwrap_or(taus.len() / 2);
        let oracle = with_oracle.then(|| {
            let cfg = est.crossfit_config();
            population_bridges(dgp, &cfg.basis_w, &cfg.basis_z, &grid, &grid).expect("population system is invertible")
        });
        ExperimentSetup { dgp: dgp.clone(), truth, target_index, median_index, oracle }
    }
}

/// Band-based metrics for one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandOutcome {
    pub critical_value: f64,
    pub sim_hit: bool,
    pub sim_len: f64,
    pub df_qte_hit: bool,
    pub df_median_len: f64,
    pub estd_hit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvarOutcome {
    pub effect_error: Vec<f64>,
    pub hits: Vec<bool>,
    pub boundary: bool,
}

/// Metrics of one method in one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub cdf_error: f64,
    pub pointwise_hit: bool,
    pub pointwise_len: f64,
    pub if_sd: f64,
    pub qte_error: Vec<f64>,
    /// ||F~ - F||^2 / ||F-hat - F||^2 summed over arms (unit weights).
    pub iso_ratio: f64,
    pub iso_violation: bool,
    pub band: Option<BandOutcome>,
    pub cvar: Option<CvarOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub result: Result<MethodMetrics, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub rep: usize,
    pub methods: Vec<MethodOutcome>,
    pub diagnostics: Option<FoldAveragedDiagnostics>,
}

fn cdf_metrics(
    setup: &ExperimentSetup,
    est: &SimEstimator,
    cdf: &CdfProcessEstimate,
    data: &Dataset,
    shortfall: Option<&ShortfallEstimate>,
    bands: bool,
    seed: u64,
) -> MethodMetrics {
    let truth = &setup.truth;
    let k = setup.target_index;
    let (lo, hi) = pointwise_interval(cdf, 1, k, est.alpha);
    let f_true = truth.cdf[1][k];
    let quant = quantile_estimates(cdf, &truth.taus);
    let true_qte = truth.qte();
    let qte_error: Vec<f64> = (0..truth.taus.len()).map(|t| quant[1][t] - quant[0][t] - true_qte[t]).collect();
    let w = vec![1.0; truth.thresholds.len()];
    let (mut raw_d, mut proj_d, mut violation) = (0.0, 0.0, false);
    for a in 0..2 {
        let raw = &cdf.arms[a].values;
        let proj = isotonic_project_unit(raw);
        raw_d += weighted_sq_dist(raw, &truth.cdf[a], &w);
        proj_d += weighted_sq_dist(&proj, &truth.cdf[a], &w);
        violation |= !nonexpansive(raw, &proj, &truth.cdf[a], &w, 1e-12);
    }
    let band = (bands && est.multipliers > 0).then(|| {
        let infl = [cdf.influence(0), cdf.influence(1)];
        let chat = multiplier_critical_value(&infl, est.multipliers, est.alpha, est.law, seed);
        let b = cdf_band(cdf, chat, est.alpha, est.multipliers, est.law);
        let sim_hit = b.contains(0, &truth.cdf[0]) && b.contains(1, &truth.cdf[1]);
        let qb = invert_band(&monotone_envelope(&b), &truth.taus);
        let m = setup.median_index;
        let bw = [0, 1].map(|a| silverman_bandwidth(&data.y, &data.a, a as u8));
        let estd = estimated_density_delta_band(cdf, &truth.taus, bw, est.alpha);
        BandOutcome {
            critical_value: chat,
            sim_hit,
            sim_len: 2.0 * b.half_width(),
            df_qte_hit: qb.contains_qte(&true_qte),
            df_median_len: qb.qte_upper[m] - qb.qte_lower[m],
            estd_hit: estd.iter().zip(&true_qte).all(|(iv, &d)| iv.lower <= d && d <= iv.upper),
        }
    });
    let cvar = shortfall.and_then(|sf| {
        let c = cvar_estimate(sf, &truth.cvar_taus, est.alpha, None).ok()?;
        let true_eff = truth.cvar_effect();
        Some(CvarOutcome {
            effect_error: c.effects.iter().zip(&true_eff).map(|(e, t)| e.delta - t).collect(),
            hits: c.effects.iter().zip(&true_eff).map(|(e, &t)| e.lower <= t && t <= e.upper).collect(),
            boundary: c.arms.iter().flatten().any(|a| a.at_boundary),
        })
    });
    MethodMetrics {
        cdf_error: cdf.arms[1].values[k] - f_true,
        pointwise_hit: lo <= f_true && f_true <= hi,
        pointwise_len: hi - lo,
        if_sd: cdf.arms[1].influence_sd(k),
        qte_error,
        iso_ratio: if raw_d > 0.0 { proj_d / raw_d } else { 1.0 },
        iso_violation: violation,
        band,
        cvar,
    }
}

/// Runs every requested method on one generated dataset.
pub fn run_replication(
    setup: &ExperimentSetup,
    est: &SimEstimator,
    methods: &[Method],
    data: &Dataset,
    seed: u64,
) -> ReplicationOutcome {
    let grid = &setup.truth.thresholds;
    let folds = make_folds(data.n(), est.folds, mix_seed(seed, 1));
    let want_proximal = methods.iter().any(|m| matches!(m, Method::Pdr | Method::Por | Method::Pipw));
    let with_cvar = !setup.truth.cvar_taus.is_empty();
    let levels: &[f64] = if with_cvar { grid } else { &[] };
    let cf = match (&folds, want_proximal) {
        (Ok(f), true) => Some(crossfit(data, &est.crossfit_config(), f, grid, levels).map_err(|e| e.to_string())),
        (Err(e), true) => Some(Err(e.to_string())),
        _ => None,
    };
    let diagnostics = cf.as_ref().and_then(|r| r.as_ref().ok()).map(|o| o.mean_diagnostics());
    let outcomes = methods
        .iter()
        .map(|&method| {
            let mseed = mix_seed(seed, 100 + method as u64);
            let result = match method {
                Method::Pdr | Method::Por | Method::Pipw => {
                    let score = match method {
                        Method::Pdr => Score::Pdr,
                        Method::Por => Score::Por,
                        _ => Score::Pipw,
                    };
                    cf.as_ref().expect("proximal pass ran").as_ref().map_err(Clone::clone).map(|out| {
                        let is_pdr = method == Method::Pdr;
                        let sf = (is_pdr && with_cvar).then(|| out.shortfall(Score::Pdr));
                        cdf_metrics(setup, est, &out.cdf(score), data, sf.as_ref(), is_pdr, mseed)
                    })
                }
                Method::NaiveAipw => folds
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|f| naive_aipw_cdf(data, f, grid, DEFAULT_PROPENSITY_CLIP).map_err(|e| e.to_string()))
                    .map(|(cdf, _)| cdf_metrics(setup, est, &cdf, data, None, false, mseed)),
                Method::Oracle => match &setup.oracle {
                    Some(pb) => pb
                        .estimates(data)
                        .map_err(|e| e.to_string())
                        .map(|(cdf, sf)| cdf_metrics(setup, est, &cdf, data, with_cvar.then_some(&sf), true, mseed)),
                    None => Err("oracle bridges not prepared".into()),
                },
            };
            MethodOutcome { method, result }
        })
        .collect();
    ReplicationOutcome { rep: 0, methods: outcomes, diagnostics }
}

/// Aggregated metrics for one method at one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub reps: usize,
    pub failures: usize,
    pub cdf_bias: f64,
    pub cdf_rmse: f64,
    pub pointwise_coverage: f64,
    pub pointwise_len: f64,
    pub if_sd: f64,
    /// Per tau.
    pub qte_bias: Vec<f64>,
    pub median_qte_bias: f64,
    pub median_qte_rmse: f64,
    pub sim_coverage: f64,
    pub sim_len: f64,
    pub df_qte_coverage: f64,
    pub df_median_len: f64,
    pub estd_coverage: f64,
    /// Per CVaR level.
    pub cvar_coverage: Vec<f64>,
    pub cvar_bias: Vec<f64>,
    pub cvar_boundary_reps: usize,
    pub iso_ratio: f64,
    pub iso_violations: usize,
}

fn share(hits: impl Iterator<Item = bool>) -> f64 {
    let v: Vec<f64> = hits.map(|h| h as u8 as f64).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        mean(&v)
    }
}

fn avg(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    if v.is_empty() {
        f64::NAN
    } else {
        mean(&v)
    }
}

/// Deterministic fold over replications in index order. Failed replications are excluded
/// from every denominator and counted in `failures`.
pub fn summarize(method: Method, reps: &[ReplicationOutcome], median_index: usize) -> MethodSummary {
    let ok: Vec<&MethodMetrics> = reps
        .iter()
        .filter_map(|r| r.methods.iter().find(|m| m.method == method))
        .filter_map(|m| m.result.as_ref().ok())
        .collect();
    let total = reps.iter().filter(|r| r.methods.iter().any(|m| m.method == method)).count();
    let n_tau = ok.first().map_or(0, |m| m.qte_error.len());
    let bands: Vec<&BandOutcome> = ok.iter().filter_map(|m| m.band.as_ref()).collect();
    let cvars: Vec<&CvarOutcome> = ok.iter().filter_map(|m| m.cvar.as_ref()).collect();
    let n_cvar = cvars.first().map_or(0, |c| c.hits.len());
    MethodSummary {
        method,
        reps: total,
        failures: total - ok.len(),
        cdf_bias: avg(ok.iter().map(|m| m.cdf_error)),
        cdf_rmse: avg(ok.iter().map(|m| m.cdf_error.powi(2))).sqrt(),
        pointwise_coverage: share(ok.iter().map(|m| m.pointwise_hit)),
        pointwise_len: avg(ok.iter().map(|m| m.pointwise_len)),
        if_sd: avg(ok.iter().map(|m| m.if_sd)),
        qte_bias: (0..n_tau).map(|t| avg(ok.iter().map(|m| m.qte_error[t]))).collect(),
        median_qte_bias: avg(ok.iter().filter_map(|m| m.qte_error.get(median_index).copied())),
        median_qte_rmse: avg(ok.iter().filter_map(|m| m.qte_error.get(median_index).map(|e| e * e))).sqrt(),
        sim_coverage: share(bands.iter().map(|b| b.sim_hit)),
        sim_len: avg(bands.iter().map(|b| b.sim_len)),
        df_qte_coverage: share(bands.iter().map(|b| b.df_qte_hit)),
        df_median_len: avg(bands.iter().map(|b| b.df_median_len)),
        estd_coverage: share(bands.iter().map(|b| b.estd_hit)),
        cvar_coverage: (0..n_cvar).map(|j| share(cvars.iter().map(|c| c.hits[j]))).collect(),
        cvar_bias: (0..n_cvar).map(|j| avg(cvars.iter().map(|c| c.effect_error[j]))).collect(),
        cvar_boundary_reps: cvars.iter().filter(|c| c.boundary).count(),
        iso_ratio: avg(ok.iter().map(|m| m.iso_ratio)),
        iso_violations: ok.iter().filter(|m| m.iso_violation).count(),
    }
}

fn run_reps(
    setup: &ExperimentSetup,
    est: &SimEstimator,
    methods: &[Method],
    n: usize,
    reps: usize,
    seed: u64,
    tag: u64,
) -> Vec<ReplicationOutcome> {
    with_pool(|| {
        (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = replication_rng(seed, tag, r as u64);
                let draw = setup.dgp.generate(n, &mut rng);
                let rep_seed = mix_seed(mix_seed(seed, tag), r as u64);
                ReplicationOutcome { rep: r, ..run_replication(setup, est, methods, &draw.data, rep_seed) }
            })
            .collect()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "component", rename_all = "lowercase")]
pub enum Component {
    One { rho: f64 },
    Three,
}

impl Component {
    pub fn dgp(&self) -> ProximalDgp {
        match *self {
            Component::One { rho } => ProximalDgp::component1(rho),
            Component::Three => ProximalDgp::component3(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub component: Component,
    pub sample_sizes: Vec<usize>,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub taus: Vec<f64>,
    pub cvar_taus: Vec<f64>,
    pub estimator: SimEstimator,
    pub seed: u64,
}

impl CoverageConfig {
    /// Component I at the stated constants (rho = 0.75, K_Y = 151, M = 1000, c_lambda = 0.01).
    pub fn component1() -> Self {
        CoverageConfig {
            component: Component::One { rho: 0.75 },
            sample_sizes: vec![500, 1000, 2000, 4000, 8000],
            reps: 1000,
            methods: vec![Method::Pdr, Method::Por, Method::Pipw, Method::NaiveAipw, Method::Oracle],
            taus: vec![0.1, 0.25, 0.5, 0.75, 0.9],
            cvar_taus: vec![0.25, 0.5, 0.75],
            estimator: SimEstimator {
                c_lambda: 0.01,
                folds: 5,
                k_y: 151,
                multipliers: 1000,
                law: MultiplierLaw::Rademacher,
                alpha: 0.05,
                basis_order: 3,
            },
            seed: 1,
        }
    }

    /// Component III density-stress design (K_Y = 181, M = 499).
    pub fn component3() -> Self {
        CoverageConfig {
            component: Component::Three,
            sample_sizes: vec![800, 1600, 3200, 6400],
            reps: 1000,
            methods: vec![Method::Pdr],
            taus: vec![0.02, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.98],
            cvar_taus: vec![0.25, 0.5, 0.75],
            estimator: SimEstimator { k_y: 181, multipliers: 499, ..Self::component1().estimator },
            seed: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub n: usize,
    pub summary: MethodSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: CoverageConfig,
    pub rows: Vec<CoverageRow>,
    pub truth: TruthTable,
}

pub fn coverage_experiment(cfg: &CoverageConfig) -> CoverageReport {
    let dgp = cfg.component.dgp();
    let with_oracle = cfg.methods.contains(&Method::Oracle);
    let setup = ExperimentSetup::new(&dgp, &cfg.estimator, &cfg.taus, &cfg.cvar_taus, with_oracle);
    let mut rows = Vec::new();
    for &n in &cfg.sample_sizes {
        let reps = run_reps(&setup, &cfg.estimator, &cfg.methods, n, cfg.reps, cfg.seed, n as u64);
        for &m in &cfg.methods {
            rows.push(CoverageRow { n, summary: summarize(m, &reps, setup.median_index) });
        }
    }
    CoverageReport { config: cfg.clone(), rows, truth: setup.truth }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub rhos: Vec<f64>,
    pub n: usize,
    pub reps: usize,
    pub estimator: SimEstimator,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            rhos: vec![0.90, 0.75, 0.60, 0.45, 0.30, 0.20],
            n: 4000,
            reps: 1000,
            estimator: SimEstimator {
                c_lambda: SWEEP_C_LAMBDA,
                folds: 5,
                k_y: 161,
                multipliers: 499,
                law: MultiplierLaw::Rademacher,
                alpha: 0.05,
                basis_order: 3,
            },
            seed: 2,
        }
    }
}

/// Ridge constant for the weak-proxy sweep; small enough that regularization does not mask
/// the variance blow-up as relevance falls.
pub const SWEEP_C_LAMBDA: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rho: f64,
    /// Arm-conditional sigma_min, minimum over arms, fold- and replication-averaged.
    pub kappa_min: f64,
    /// sigma_min of the unnormalized Sigma_a, minimum over arms.
    pub kappa_min_literal: f64,
    /// max over arms of the training-fold dual norm.
    pub dual_norm: f64,
    pub summary: MethodSummary,
}

pub fn weak_proxy_sweep(cfg: &SweepConfig) -> Vec<SweepRow> {
    cfg.rhos
        .iter()
        .enumerate()
        .map(|(i, &rho)| {
            let dgp = ProximalDgp::component1(rho);
            let setup = ExperimentSetup::new(&dgp, &cfg.estimator, &[0.5], &[], false);
            let reps = run_reps(&setup, &cfg.estimator, &[Method::Pdr], cfg.n, cfg.reps, cfg.seed, i as u64);
            let diags: Vec<&FoldAveragedDiagnostics> = reps.iter().filter_map(|r| r.diagnostics.as_ref()).collect();
            SweepRow {
                rho,
                kappa_min: avg(diags.iter().map(|d| d.kappa_min_conditional[0].min(d.kappa_min_conditional[1]))),
                kappa_min_literal: avg(diags.iter().map(|d| d.kappa_min[0].min(d.kappa_min[1]))),
                dual_norm: avg(diags.iter().map(|d| d.dual_weighted_norm[0].max(d.dual_weighted_norm[1]))),
                summary: summarize(Method::Pdr, &reps, setup.median_index),
            }
        })
        .collect()
}
