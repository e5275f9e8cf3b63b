//! Run configuration, the real-data estimate pipeline, simulation and diagnostic drivers,
//! and report emission.

mod config;
mod diagnose;
mod estimate;
mod report;
mod simulate;

pub use config::{
    qte_grid, BasisChoice, Command, ComponentId, DataConfig, DiagnoseConfig, EstimatorConfig, GridConfig, Recipe,
    RunConfig, SimulationConfig,
};
pub use diagnose::{admissible, diagnose_dataset, remainder_proxy, run_diagnose, DiagnoseReport, DimensionRow, RemainderEntry};
pub use estimate::{
    empirical_grid, estimate_dataset, ingest, preprocess, resolve_basis, run_estimate, validate_estimator, write_estimate,
    EstimateDiagnostics, EstimateOutputs, QteRow, ESTIMATE_OUTPUTS,
};
pub use report::{num, write_json, Manifest, TableWriter};
pub use simulate::{run_simulate, simulate, simulation_section, SimulationOutput};

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::data::DataError;
use crate::estimator::EstimateError;

/// Where in a run a failure happened.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Ingestion,
    Preprocessing,
    Screening,
    Basis,
    Estimation,
    Output,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Ingestion => "ingestion",
            Stage::Preprocessing => "preprocessing",
            Stage::Screening => "screening",
            Stage::Basis => "basis",
            Stage::Estimation => "estimation",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum FailureKind {
    #[error(transparent)]
    Data(DataError),
    #[error(transparent)]
    Estimate(EstimateError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON: {0}")]
    Json(serde_json::Error),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Error)]
#[error("stage `{stage}`: {kind}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub kind: FailureKind,
}

impl PipelineError {
    pub fn new(stage: Stage, kind: FailureKind) -> Self {
        PipelineError { stage, kind }
    }

    /// 2 input error, 3 numerical failure, 4 config error.
    pub fn exit_code(&self) -> i32 {
        if self.stage == Stage::Config {
            return 4;
        }
        match &self.kind {
            FailureKind::Config(_) => 4,
            FailureKind::Data(_) | FailureKind::Io { .. } | FailureKind::Json(_) => 2,
            FailureKind::Estimate(e) => match e {
                EstimateError::Data(_) | EstimateError::EmptyTrainingArm { .. } => 2,
                EstimateError::BadFolds { .. } | EstimateError::BadLevel(_) | EstimateError::EmptySearchGrid => 4,
                EstimateError::FoldMismatch { .. } | EstimateError::Fold { .. } | EstimateError::Bridge(_) => 3,
            },
        }
    }
}

/// What a completed run produced.
#[derive(Debug)]
pub enum RunOutcome {
    Estimate(Box<EstimateOutputs>),
    Simulate(SimulationOutput),
    Diagnose(DiagnoseReport),
}

/// Dispatches on `cfg.command`, writing every report into `cfg.out` plus `timing.json`.
pub fn run(cfg: &RunConfig) -> Result<(RunOutcome, PathBuf), PipelineError> {
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| PipelineError::new(Stage::Config, FailureKind::Config("no output directory (`out` or --out)".into())))?;
    report::ensure_dir(&dir)?;
    let start = Instant::now();
    let outcome = match cfg.command {
        Command::Estimate => RunOutcome::Estimate(Box::new(run_estimate(cfg, &dir)?)),
        Command::Simulate | Command::GaussianBench => RunOutcome::Simulate(run_simulate(cfg, &dir)?),
        Command::Diagnose => RunOutcome::Diagnose(run_diagnose(cfg, &dir)?),
    };
    report::write_timing(&dir, start.elapsed().as_secs_f64())?;
    Ok((outcome, dir))
}
