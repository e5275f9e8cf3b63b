//! Cross-fitted one-step estimation of counterfactual CDF and shortfall processes.

mod crossfit;
mod cvar;
mod folds;
mod naive;
mod onestep;

pub use crossfit::{
    crossfit, crossfit_cdf, por_pipw_estimates, shortfall_process, standardize_columns, ArmNuisance, CrossfitConfig,
    CrossfitOutput, FoldAveragedDiagnostics, SolverConfig,
};
pub use cvar::{cvar_estimate, CvarArm, CvarEffect, CvarEstimate};
pub use folds::{make_folds, FoldPlan};
pub use naive::{clip_propensity, fit_logistic, naive_aipw_cdf, NaiveReport, DEFAULT_PROPENSITY_CLIP};
pub use onestep::{
    scores_from_nuisances, ArmCurve, CdfProcessEstimate, Functional, Method, Score, ShortfallEstimate,
};

use thiserror::Error;

use crate::bridge::BridgeError;
use crate::data::DataError;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("need 2 <= K <= n folds, got K = {k} for n = {n}")]
    BadFolds { k: usize, n: usize },
    #[error("fold plan covers {folds} rows but the data has {n}")]
    FoldMismatch { folds: usize, n: usize },
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: BridgeError,
    },
    #[error("fold {fold}: training complement has no rows with A = {arm}")]
    EmptyTrainingArm { fold: usize, arm: u8 },
    #[error("CVaR search grid is empty")]
    EmptySearchGrid,
    #[error("CVaR level {0} outside (0, 1]")]
    BadLevel(f64),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
}

pub type Result<T> = std::result::Result<T, EstimateError>;
