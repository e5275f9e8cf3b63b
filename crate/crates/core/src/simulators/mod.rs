//! Data-generating processes, truth oracles and experiment drivers.

mod dgp;
mod experiments;
mod finite;
mod gauss;
mod law;
mod oracle;
mod seeding;
mod truth;

pub use dgp::{gen_component1, gen_component3, Dgp1Config, Dgp3Config, NoiseLaw, OracleChannel, ProximalDgp, SimDraw};
pub use finite::{FiniteProximalLaw, ObservedCell};
pub use gauss::{gaussian_bench, picard_status, GaussBenchConfig, GaussRegime, GaussRow, PicardStatus, Sequence, TruncationRule};
pub use law::NormalMixture;
pub use oracle::{population_bridges, PopulationBridges};
pub use seeding::{mix_seed, replication_rng, with_pool, THREADS_ENV};
pub use truth::{exact_truth, truth_from_draws, truth_grid, truth_oracle, TruthSource, TruthTable};
pub use experiments::{
    coverage_experiment, run_replication, summarize, weak_proxy_sweep, BandOutcome, Component, CoverageConfig,
    CoverageReport, CoverageRow, CvarOutcome, ExperimentSetup, MethodMetrics, MethodOutcome, MethodSummary,
    ReplicationOutcome, SimEstimator, SweepConfig, SweepRow, SWEEP_C_LAMBDA,
};
