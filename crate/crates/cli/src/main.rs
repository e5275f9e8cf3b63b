use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use proxidist::pipeline::{run, Command, ComponentId, DataConfig, Recipe, RunConfig, RunOutcome, SimulationConfig};
use proxidist::simulators::with_pool;

/// Exit code for unreadable or malformed configuration.
const CONFIG_EXIT: u8 = 4;

#[derive(Parser)]
#[command(name = "proxidist", version, about = "Proximal counterfactual distribution, quantile and CVaR inference")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Cross-fitted CDF, band, QTE and CVaR tables for a data file.
    Estimate(Common),
    /// Monte Carlo experiments for one simulation component.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Component id: 1, 2a, 2b or 3.
        // Parsed after clap so an unknown id exits as a config error.
        #[arg(long)]
        component: Option<String>,
    },
    /// Spectra, dual norms and Picard sums over a basis dimension sweep.
    Diagnose(Common),
    /// Gaussian inverse benchmark (simulate component 2b).
    GaussianBench(Common),
}

/// Flags shared by every subcommand; each overrides the matching config-file value.
#[derive(Args)]
struct Common {
    /// JSON config or a previously emitted manifest.json.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data file; without a config the RHC recipe is used.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated sample sizes; `diagnose` uses the first.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Bootstrap multiplier draws.
    #[arg(long)]
    multipliers: Option<usize>,
    /// Cross-fitting folds.
    #[arg(long)]
    folds: Option<usize>,
}

fn load(common: &Common, command: Command) -> Result<RunConfig, String> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            RunConfig::from_json(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))?
        }
        None => RunConfig::new(command),
    };
    cfg.command = command;
    if let Some(path) = &common.data {
        let recipe = cfg.data.take().map_or(Recipe::Rhc, |d| d.recipe);
        cfg.data = Some(DataConfig { path: path.clone(), recipe });
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(alpha) = common.alpha {
        cfg.estimator.alpha = alpha;
    }
    if let Some(m) = common.multipliers {
        cfg.estimator.multipliers = m;
    }
    if let Some(k) = common.folds {
        cfg.estimator.folds = k;
    }
    if let Some(n) = common.n.as_ref().and_then(|list| list.first()) {
        cfg.diagnose.n = *n;
    }
    Ok(cfg)
}

/// Simulation overrides land on the `simulation` section, created from the preset if absent.
fn override_simulation(cfg: &mut RunConfig, common: &Common, component: Option<ComponentId>) {
    let touched = component.is_some()
        || common.reps.is_some()
        || common.n.is_some()
        || common.alpha.is_some()
        || common.multipliers.is_some()
        || common.folds.is_some();
    if !touched {
        return;
    }
    let default = match cfg.command {
        Command::GaussianBench => Some(ComponentId::TwoB),
        _ => component,
    };
    let Some(mut sim) = cfg.simulation.take().or_else(|| default.map(SimulationConfig::preset)) else {
        return;
    };
    if let Some(c) = component {
        if c != sim.component {
            sim = SimulationConfig { component: c, ..sim };
        }
    }
    sim.reps = common.reps.or(sim.reps);
    sim.sample_sizes = common.n.clone().or(sim.sample_sizes);
    sim.alpha = common.alpha.or(sim.alpha);
    sim.multipliers = common.multipliers.or(sim.multipliers);
    sim.folds = common.folds.or(sim.folds);
    cfg.simulation = Some(sim);
}

fn build(sub: &Sub) -> Result<RunConfig, String> {
    match sub {
        Sub::Estimate(common) => load(common, Command::Estimate),
        Sub::Diagnose(common) => load(common, Command::Diagnose),
        Sub::Simulate { common, component } => {
            let component = component.as_deref().map(str::parse::<ComponentId>).transpose().map_err(|e| e.to_string())?;
            let mut cfg = load(common, Command::Simulate)?;
            override_simulation(&mut cfg, common, component);
            Ok(cfg)
        }
        Sub::GaussianBench(common) => {
            let mut cfg = load(common, Command::GaussianBench)?;
            override_simulation(&mut cfg, common, None);
            Ok(cfg)
        }
    }
}

fn summary(outcome: &RunOutcome) -> String {
    match outcome {
        RunOutcome::Estimate(est) => format!("estimate: n = {}, {} QTE rows", est.diagnostics.n, est.qte.len()),
        RunOutcome::Simulate(_) => "simulate: tables written".to_string(),
        RunOutcome::Diagnose(report) => format!("diagnose: {} bases on {}", report.rows.len(), report.source),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match build(&cli.command) {
        Ok(cfg) => cfg,
        Err(msg) => {
            error!("stage `config`: {msg}");
            return ExitCode::from(CONFIG_EXIT);
        }
    };
    info!("config hash {}", cfg.hash());
    match with_pool(|| run(&cfg)) {
        Ok((outcome, dir)) => {
            info!("{}", summary(&outcome));
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e}");
            eprintln!("stage: {}", e.stage);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
