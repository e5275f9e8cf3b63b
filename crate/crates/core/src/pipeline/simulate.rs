use std::path::Path;

use super::config::{ComponentId, RunConfig, SimulationConfig};
use super::report::{num, write_json, Manifest, TableWriter};
use super::{FailureKind, PipelineError, Stage};
use crate::simulators::{
    coverage_experiment, gaussian_bench, weak_proxy_sweep, Component, CoverageConfig, CoverageReport, GaussBenchConfig,
    GaussRegime, SimEstimator, SweepConfig, SweepRow,
};

fn config_error(msg: impl Into<String>) -> PipelineError {
    PipelineError::new(Stage::Config, FailureKind::Config(msg.into()))
}

/// Result tables of one `simulate` run.
#[derive(Clone, Debug)]
pub enum SimulationOutput {
    Coverage(Box<CoverageReport>),
    Sweep(Vec<SweepRow>),
    Gauss(Vec<GaussRegime>),
}

fn validate(sim: &SimulationConfig) -> Result<(), PipelineError> {
    if sim.reps == Some(0) {
        return Err(config_error("reps must be positive"));
    }
    if let Some(ns) = &sim.sample_sizes {
        if ns.is_empty() || ns.iter().any(|&n| n < 50) {
            return Err(config_error(format!("sample sizes must be non-empty and >= 50, got {ns:?}")));
        }
    }
    if let Some(a) = sim.alpha.filter(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(config_error(format!("alpha must lie in (0, 1), got {a}")));
    }
    if sim.multipliers == Some(0) || sim.folds.is_some_and(|k| k < 2) {
        return Err(config_error("multipliers must be positive and folds >= 2"));
    }
    if let Some(rho) = sim.rho.filter(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(config_error(format!("rho must lie in (0, 1], got {rho}")));
    }
    Ok(())
}

fn apply_estimator(sim: &SimulationConfig, est: SimEstimator) -> SimEstimator {
    SimEstimator {
        multipliers: sim.multipliers.unwrap_or(est.multipliers),
        alpha: sim.alpha.unwrap_or(est.alpha),
        folds: sim.folds.unwrap_or(est.folds),
        ..est
    }
}

fn coverage_config(sim: &SimulationConfig, base: CoverageConfig, seed: u64) -> CoverageConfig {
    let component = match (base.component, sim.rho) {
        (Component::One { .. }, Some(rho)) => Component::One { rho },
        (c, _) => c,
    };
    CoverageConfig {
        component,
        sample_sizes: sim.sample_sizes.clone().unwrap_or(base.sample_sizes),
        reps: sim.reps.unwrap_or(base.reps),
        estimator: apply_estimator(sim, base.estimator),
        seed,
        ..base
    }
}

/// The simulation section, with `gaussian-bench` implying component 2b.
pub fn simulation_section(cfg: &RunConfig) -> Result<SimulationConfig, PipelineError> {
    match (&cfg.simulation, cfg.command) {
        (Some(s), super::Command::GaussianBench) if s.component != ComponentId::TwoB => {
            Err(config_error("gaussian-bench runs component 2b only"))
        }
        (Some(s), _) => Ok(s.clone()),
        (None, super::Command::GaussianBench) => Ok(SimulationConfig::preset(ComponentId::TwoB)),
        (None, _) => Err(config_error("simulate needs a `simulation` section or --component")),
    }
}

pub fn simulate(sim: &SimulationConfig, seed: u64) -> Result<SimulationOutput, PipelineError> {
    validate(sim)?;
    Ok(match sim.component {
        ComponentId::One => SimulationOutput::Coverage(Box::new(coverage_experiment(&coverage_config(sim, CoverageConfig::component1(), seed)))),
        ComponentId::Three => SimulationOutput::Coverage(Box::new(coverage_experiment(&coverage_config(sim, CoverageConfig::component3(), seed)))),
        ComponentId::TwoA => {
            let base = SweepConfig::default();
            let n = match sim.sample_sizes.as_deref() {
                None => base.n,
                Some([n]) => *n,
                Some(ns) => return Err(config_error(format!("the weak-proxy sweep takes one sample size, got {ns:?}"))),
            };
            let rhos = sim.rho.map_or(base.rhos.clone(), |r| vec![r]);
            let cfg = SweepConfig { rhos, n, reps: sim.reps.unwrap_or(base.reps), estimator: apply_estimator(sim, base.estimator), seed };
            SimulationOutput::Sweep(weak_proxy_sweep(&cfg))
        }
        ComponentId::TwoB => {
            let base = GaussBenchConfig::default();
            let cfg = GaussBenchConfig {
                sample_sizes: sim.sample_sizes.clone().unwrap_or(base.sample_sizes.clone()),
                reps: sim.reps.unwrap_or(base.reps),
                seed,
                ..base
            };
            SimulationOutput::Gauss(gaussian_bench(&cfg))
        }
    })
}

fn write_coverage(rep: &CoverageReport, dir: &Path, hash: &str) -> Result<Vec<&'static str>, PipelineError> {
    let taus = &rep.config.taus;
    let cvar_taus = &rep.config.cvar_taus;
    let mut header: Vec<String> = [
        "n", "method", "reps", "failures", "cdf_bias", "cdf_rmse", "pt_cov", "pt_len", "if_sd", "median_qte_bias",
        "median_qte_rmse", "sim_cov", "sim_len", "df_qte_cov", "df_median_len", "estd_cov", "iso_ratio",
        "iso_violations", "cvar_boundary_reps",
    ]
    .map(String::from)
    .to_vec();
    header.extend(taus.iter().map(|t| format!("qte_bias_{t}")));
    header.extend(cvar_taus.iter().map(|t| format!("cvar_cov_{t}")));
    header.extend(cvar_taus.iter().map(|t| format!("cvar_bias_{t}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = TableWriter::create(
        &dir.join("coverage.csv"),
        "coverage as share of successful replications; lengths and biases in outcome units; cdf errors in probability",
        hash,
        &header_refs,
    )?;
    for row in &rep.rows {
        let s = &row.summary;
        let method = serde_json::to_value(s.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let mut fields = vec![row.n.to_string(), method, s.reps.to_string(), s.failures.to_string()];
        fields.extend(
            [
                s.cdf_bias, s.cdf_rmse, s.pointwise_coverage, s.pointwise_len, s.if_sd, s.median_qte_bias, s.median_qte_rmse,
                s.sim_coverage, s.sim_len, s.df_qte_coverage, s.df_median_len, s.estd_coverage, s.iso_ratio,
            ]
            .map(num),
        );
        fields.push(s.iso_violations.to_string());
        fields.push(s.cvar_boundary_reps.to_string());
        let pad = |v: &[f64], k: usize| (0..k).map(|i| num(v.get(i).copied().unwrap_or(f64::NAN))).collect::<Vec<_>>();
        fields.extend(pad(&s.qte_bias, taus.len()));
        fields.extend(pad(&s.cvar_coverage, cvar_taus.len()));
        fields.extend(pad(&s.cvar_bias, cvar_taus.len()));
        w.row(fields)?;
    }
    w.finish()?;
    write_json(&dir.join("truth.json"), &rep.truth)?;
    Ok(vec!["coverage.csv", "truth.json"])
}

fn write_sweep(rows: &[SweepRow], dir: &Path, hash: &str) -> Result<Vec<&'static str>, PipelineError> {
    let mut w = TableWriter::create(
        &dir.join("sweep.csv"),
        "kappa and norms unitless; lengths in outcome or probability units; coverage as share",
        hash,
        &["rho", "kappa_min", "kappa_min_literal", "dual_norm", "if_sd", "pt_cov", "pt_len", "sim_cov", "sim_len", "median_qte_bias", "reps", "failures"],
    )?;
    for r in rows {
        let s = &r.summary;
        let mut fields: Vec<String> =
            [r.rho, r.kappa_min, r.kappa_min_literal, r.dual_norm, s.if_sd, s.pointwise_coverage, s.pointwise_len, s.sim_coverage, s.sim_len, s.median_qte_bias]
                .map(num)
                .to_vec();
        fields.push(s.reps.to_string());
        fields.push(s.failures.to_string());
        w.row(fields)?;
    }
    w.finish()?;
    Ok(vec!["sweep.csv"])
}

fn write_gauss(regimes: &[GaussRegime], dir: &Path, hash: &str) -> Result<Vec<&'static str>, PipelineError> {
    let status = |r: &GaussRegime| serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let mut w = TableWriter::create(
        &dir.join("gauss.csv"),
        "bias and MSE in target units",
        hash,
        &["rho_l", "status", "n", "m_star", "truncation_bias", "variance", "mc_bias", "mc_variance", "mc_mse"],
    )?;
    for r in regimes {
        for row in &r.rows {
            let mut fields = vec![num(r.rho_l), status(r), row.n.to_string(), row.m_star.to_string()];
            fields.extend([row.truncation_bias, row.variance, row.mc_bias, row.mc_variance, row.mc_mse].map(num));
            w.row(fields)?;
        }
    }
    w.finish()?;
    let mut w = TableWriter::create(&dir.join("gauss_exponents.csv"), "rate exponents of MSE in n", hash, &["rho_l", "status", "theory_exponent", "empirical_exponent"])?;
    for r in regimes {
        w.row([num(r.rho_l), status(r), num(r.theory_exponent), num(r.empirical_exponent)])?;
    }
    w.finish()?;
    let mut w = TableWriter::create(&dir.join("picard.csv"), "partial sums of l_j^2/s_j^2", hash, &["rho_l", "m", "partial_sum"])?;
    for r in regimes {
        for (m, s) in r.picard_sums.iter().enumerate() {
            w.row([num(r.rho_l), (m + 1).to_string(), num(*s)])?;
        }
    }
    w.finish()?;
    Ok(vec!["gauss.csv", "gauss_exponents.csv", "picard.csv"])
}

/// `simulate` and `gaussian-bench`: run the component and write its tables and manifest.
pub fn run_simulate(cfg: &RunConfig, dir: &Path) -> Result<SimulationOutput, PipelineError> {
    let sim = simulation_section(cfg)?;
    let out = simulate(&sim, cfg.seed)?;
    let hash = cfg.hash();
    let mut files = match &out {
        SimulationOutput::Coverage(rep) => write_coverage(rep, dir, &hash)?,
        SimulationOutput::Sweep(rows) => write_sweep(rows, dir, &hash)?,
        SimulationOutput::Gauss(regimes) => write_gauss(regimes, dir, &hash)?,
    };
    files.extend(["manifest.json", "timing.json"]);
    write_json(&dir.join("manifest.json"), &Manifest::new(cfg, vec![("replications", cfg.seed)], files))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Command;

    fn smoke(component: ComponentId) -> RunConfig {
        let mut cfg = RunConfig::new(Command::Simulate);
        cfg.simulation = Some(SimulationConfig {
            sample_sizes: Some(vec![500]),
            reps: Some(2),
            multipliers: Some(50),
            ..SimulationConfig::preset(component)
        });
        cfg
    }

    #[test]
    fn component1_smoke_is_byte_reproducible() {
        let cfg = smoke(ComponentId::One);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_simulate(&cfg, a.path()).unwrap();
        run_simulate(&cfg, b.path()).unwrap();
        for f in ["coverage.csv", "truth.json", "manifest.json"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let text = std::fs::read_to_string(a.path().join("coverage.csv")).unwrap();
        // Header comment, column header, five methods.
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn gauss_default_table_shape() {
        let mut cfg = RunConfig::new(Command::GaussianBench);
        cfg.simulation = Some(SimulationConfig { reps: Some(20), ..SimulationConfig::preset(ComponentId::TwoB) });
        let dir = tempfile::tempdir().unwrap();
        let SimulationOutput::Gauss(regimes) = run_simulate(&cfg, dir.path()).unwrap() else { panic!() };
        assert_eq!(regimes.len(), 3);
        assert!(regimes.iter().all(|r| r.rows.len() == 7));
        let text = std::fs::read_to_string(dir.path().join("gauss.csv")).unwrap();
        assert_eq!(text.lines().count(), 2 + 21);
    }

    #[test]
    fn sweep_rejects_several_sample_sizes() {
        let mut cfg = smoke(ComponentId::TwoA);
        cfg.simulation.as_mut().unwrap().sample_sizes = Some(vec![500, 1000]);
        let err = run_simulate(&cfg, Path::new("/tmp")).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        let mut bench = smoke(ComponentId::One);
        bench.command = Command::GaussianBench;
        assert!(simulation_section(&bench).is_err());
    }
}
