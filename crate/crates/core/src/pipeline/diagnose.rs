use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{BasisChoice, RunConfig};
use super::estimate::{empirical_grid, ingest, preprocess, resolve_basis, validate_estimator};
use super::report::{num, write_json, Manifest, TableWriter};
use super::{FailureKind, PipelineError, Stage};
use crate::bridge::{assemble_moments, spectral_diagnostics, SpectralDiagnostics};
use crate::data::{build_basis, Dataset};
use crate::estimator::standardize_columns;
use crate::simulators::{mix_seed, ProximalDgp};

/// d^{1 + 2 alpha} sqrt(log n) / n.
pub fn remainder_proxy(d: usize, smoothness: f64, n: usize) -> f64 {
    (d as f64).powf(1.0 + 2.0 * smoothness) * (n as f64).ln().sqrt() / n as f64
}

/// d^{1 + 2 alpha} sqrt(log n) < n^{1/2}.
pub fn admissible(d: usize, smoothness: f64, n: usize) -> bool {
    remainder_proxy(d, smoothness, n) < (n as f64).sqrt().recip()
}

#[derive(Clone, Debug, Serialize)]
pub struct RemainderEntry {
    pub smoothness: f64,
    pub proxy: f64,
    pub admissible: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DimensionRow {
    pub basis: BasisChoice,
    pub d_w: usize,
    pub d_z: usize,
    pub screened: Vec<String>,
    /// Per arm; `None` when the solve failed.
    pub arms: [Option<SpectralDiagnostics>; 2],
    pub failures: Vec<String>,
    pub remainder: Vec<RemainderEntry>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnoseReport {
    pub source: String,
    pub n: usize,
    pub grid_points: usize,
    pub rows: Vec<DimensionRow>,
}

fn default_ladder(data: &Dataset, simulated: bool) -> Vec<BasisChoice> {
    if simulated {
        (1..=3).map(|order| BasisChoice::Multilinear { order }).collect()
    } else {
        [0, 1, 2, 3, 5, 8]
            .into_iter()
            .filter(|&k| k <= data.x.width())
            .map(|screen| BasisChoice::RealdataInteraction { screen })
            .collect()
    }
}

/// Full-sample spectra, minimum singular values, dual norms and Picard sums over a basis ladder.
pub fn diagnose_dataset(
    data: &Dataset,
    source: String,
    bases: &[BasisChoice],
    cfg: &RunConfig,
) -> Result<DiagnoseReport, PipelineError> {
    let est = &cfg.estimator;
    let n = data.n();
    let grid = empirical_grid(&data.y, &est.grid);
    let all: Vec<usize> = (0..n).collect();
    let mut rows = Vec::new();
    for choice in bases {
        let (spec_w, spec_z, screened) = resolve_basis(data, choice)?;
        let basis = |spec| build_basis(spec, data).map_err(|e| PipelineError::new(Stage::Basis, FailureKind::Data(e)));
        let (mut bw, mut bz) = (basis(&spec_w)?, basis(&spec_z)?);
        if est.standardize {
            standardize_columns(&mut bw, &all, spec_w.include_intercept);
            standardize_columns(&mut bz, &all, spec_z.include_intercept);
        }
        let mut failures = Vec::new();
        let arms = [0u8, 1].map(|arm| {
            let result = assemble_moments(arm, &bw, &bz, &data.y, &data.a, &grid, &[]).and_then(|ms| {
                let fit = est.solver.solve(&ms, n)?;
                spectral_diagnostics(&ms, &fit, Some((&bz, &data.a)))
            });
            result.map_err(|e| failures.push(format!("arm {arm}: {e}"))).ok()
        });
        let d = bw.ncols().max(bz.ncols());
        let remainder = cfg
            .diagnose
            .smoothness
            .iter()
            .map(|&s| RemainderEntry { smoothness: s, proxy: remainder_proxy(d, s, n), admissible: admissible(d, s, n) })
            .collect();
        rows.push(DimensionRow { basis: choice.clone(), d_w: bw.ncols(), d_z: bz.ncols(), screened, arms, failures, remainder });
    }
    Ok(DiagnoseReport { source, n, grid_points: grid.len(), rows })
}

fn write_report(report: &DiagnoseReport, cfg: &RunConfig, dir: &Path) -> Result<(), PipelineError> {
    let hash = cfg.hash();
    let mut header = vec!["basis", "d_w", "d_z", "kappa_min_0", "kappa_min_1", "kappa_cond_0", "kappa_cond_1", "dual_norm_0", "dual_norm_1"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for s in &cfg.diagnose.smoothness {
        header.push(format!("remainder_alpha_{s}"));
        header.push(format!("admissible_alpha_{s}"));
    }
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = TableWriter::create(&dir.join("dimension_sweep.csv"), "singular values and norms unitless", &hash, &refs)?;
    for row in &report.rows {
        let get = |f: &dyn Fn(&SpectralDiagnostics) -> f64| row.arms.each_ref().map(|a| num(a.as_ref().map_or(f64::NAN, f)));
        let label = row.basis.to_string();
        let mut fields = vec![label, row.d_w.to_string(), row.d_z.to_string()];
        fields.extend(get(&|d| d.kappa_min));
        fields.extend(get(&|d| d.kappa_min_conditional));
        fields.extend(get(&|d| d.dual_weighted_norm.unwrap_or(f64::NAN)));
        for r in &row.remainder {
            fields.push(num(r.proxy));
            fields.push(r.admissible.to_string());
        }
        w.row(fields)?;
    }
    w.finish()?;
    let mut w = TableWriter::create(
        &dir.join("spectrum.csv"),
        "singular values of the cross moment; Picard partial sums unitless",
        &hash,
        &["row", "d_w", "arm", "j", "singular_value", "picard_partial_sum"],
    )?;
    for (i, row) in report.rows.iter().enumerate() {
        for diag in row.arms.iter().flatten() {
            for (j, s) in diag.singular_values.iter().enumerate() {
                let picard = diag.picard_partial_sums.get(j).copied().unwrap_or(f64::NAN);
                w.row([i.to_string(), row.d_w.to_string(), diag.arm.to_string(), (j + 1).to_string(), num(*s), num(picard)])?;
            }
        }
    }
    w.finish()?;
    write_json(&dir.join("diagnostics.json"), report)?;
    let files = vec!["dimension_sweep.csv", "spectrum.csv", "diagnostics.json", "manifest.json", "timing.json"];
    write_json(&dir.join("manifest.json"), &Manifest::new(cfg, vec![("dgp", mix_seed(cfg.seed, 0x646770))], files))
}

/// `diagnose`: a data file, or a simulated Component I draw of size `diagnose.n`.
pub fn run_diagnose(cfg: &RunConfig, dir: &Path) -> Result<DiagnoseReport, PipelineError> {
    validate_estimator(&cfg.estimator)?;
    let (data, source, simulated) = if let Some(dc) = &cfg.data {
        let (raw, _) = ingest(dc)?;
        (preprocess(&raw)?, dc.path.display().to_string(), false)
    } else if let Some(sim) = &cfg.simulation {
        let rho = sim.rho.unwrap_or(0.75);
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(PipelineError::new(Stage::Config, FailureKind::Config(format!("rho must lie in (0, 1], got {rho}"))));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x646770));
        let draw = ProximalDgp::component1(rho).generate(cfg.diagnose.n, &mut rng);
        (draw.data, format!("component 1, rho = {rho}"), true)
    } else {
        return Err(PipelineError::new(Stage::Config, FailureKind::Config("diagnose needs a `data` or `simulation` section".into())));
    };
    let bases = if cfg.diagnose.bases.is_empty() { default_ladder(&data, simulated) } else { cfg.diagnose.bases.clone() };
    let report = diagnose_dataset(&data, source, &bases, cfg)?;
    write_report(&report, cfg, dir)?;
    Ok(report)
}
