//! Seeded multi-run experiments, exact regret and plot-ready output.

mod config;
mod emit;
mod regret;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    ExperimentConfig, ModeSpec, OutputFormat, OutputSpec, Variant, DEFAULT_ALPHA, DEFAULT_LAMBDA,
    DEFAULT_OUTPUT, DEFAULT_SEARCH_BUDGET,
};
pub use emit::{emit, sidecar_path, write_csv, Sidecar, CSV_HEADER, VERSION};
pub use regret::{
    compute_regret, diagnose, regret_of_run, RegretRecord, RegretTrace, TraceDiagnostics,
    REGRET_TOLERANCE,
};

use crate::agent::{self, AgentConfig, AgentMode, Environment, OfuAgent, PrivateSetup};
use crate::confidence::logdet_cap;
use crate::counters::PrivacyBudget;
use crate::error::Result;
use crate::lq_system::{sample_instance, Instance};

/// Calibration actually used by one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantCalibration {
    pub variant: String,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub sigma_gram: Option<f64>,
    pub sigma_cross: Option<f64>,
    pub big_lambda: Option<f64>,
    pub eta: Option<f64>,
    pub nu: Option<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Composed DP epsilon of both counters at the requested delta.
    pub epsilon_actual: Option<f64>,
    pub logdet_cap: f64,
}

/// Traces sorted by (variant order, seed) plus the metadata needed to emit them.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub calibration: Vec<VariantCalibration>,
    pub traces: Vec<RegretTrace>,
}

fn agent_mode(cfg: &ExperimentConfig, variant: &Variant) -> Result<AgentMode> {
    let inst = &cfg.instance;
    Ok(match *variant {
        Variant::NonPrivate { lambda } => AgentMode::NonPrivate { lambda },
        Variant::Private { epsilon, delta } => AgentMode::Private(PrivateSetup::from_budget(
            PrivacyBudget::new(epsilon, delta)?,
            cfg.sigma_mode,
            inst.n,
            inst.d,
            inst.horizon,
            inst.episodes,
            inst.gamma,
            cfg.alpha,
        )?),
    })
}

/// Noise scales and regularization for every variant, without running anything.
pub fn calibrate_variants(cfg: &ExperimentConfig) -> Result<Vec<VariantCalibration>> {
    cfg.validate()?;
    let inst = &cfg.instance;
    cfg.variants()
        .iter()
        .map(|variant| {
            let mode = agent_mode(cfg, variant)?;
            let (setup, lambda_min, lambda_max) = match &mode {
                AgentMode::Private(s) => {
                    (Some(s), s.calibration.lambda_min, s.calibration.lambda_max)
                }
                AgentMode::NonPrivate { lambda } => (None, *lambda, *lambda),
                AgentMode::Oracle(_) => unreachable!("experiments never configure the oracle"),
            };
            Ok(VariantCalibration {
                variant: variant.label(),
                epsilon: variant.epsilon(),
                delta: variant.delta(),
                sigma_gram: setup.map(|s| s.sigma_gram),
                sigma_cross: setup.map(|s| s.sigma_cross),
                big_lambda: setup.map(|s| s.calibration.big_lambda),
                eta: setup.map(|s| s.calibration.eta),
                nu: setup.map(|s| s.calibration.nu),
                lambda_min,
                lambda_max,
                epsilon_actual: setup.and_then(|s| s.report).map(|r| r.epsilon_total),
                logdet_cap: logdet_cap(
                    inst.n,
                    inst.d,
                    inst.horizon,
                    inst.episodes,
                    inst.gamma,
                    lambda_min,
                ),
            })
        })
        .collect()
}

/// One replica of one variant on a fixed instance.
pub fn run_replica(
    cfg: &ExperimentConfig,
    instance: &Instance,
    variant: &Variant,
    seed: u64,
    config_hash: &str,
) -> Result<RegretTrace> {
    let inst = &cfg.instance;
    let mode = agent_mode(cfg, variant)?;
    let mut agent_cfg = AgentConfig::for_instance(
        instance,
        inst.episodes,
        inst.gamma,
        cfg.alpha,
        cfg.search_budget,
        inst.horizon,
    );
    agent_cfg.logdet_rule = cfg.logdet_rule;
    let mut agent = OfuAgent::new(agent_cfg, mode, seed)?;
    let mut env = Environment::new(instance, seed, cfg.redraw_initial_state);
    let records = agent::run(&mut agent, &mut env)?;

    let bounds = agent.bounds().expect("learning agent");
    let cap = logdet_cap(
        inst.n,
        inst.d,
        inst.horizon,
        inst.episodes,
        inst.gamma,
        bounds.lambda_min,
    );
    let diagnostics = diagnose(
        &instance.system,
        &records,
        Some(bounds.lambda_min),
        Some(cap),
        agent.clamp_events(),
    )?;
    Ok(RegretTrace {
        variant: variant.label(),
        seed,
        epsilon: variant.epsilon(),
        delta: variant.delta(),
        config_hash: config_hash.to_string(),
        records: regret_of_run(&instance.system, &records, inst.horizon)?,
        diagnostics,
    })
}

/// Runs every (variant, seed) pair on the rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let calibration = calibrate_variants(cfg)?;
    let shared = if cfg.resample_instance {
        None
    } else {
        Some(sample_instance(&cfg.instance)?)
    };
    let config_hash = cfg.hash();
    let variants = cfg.variants();
    let seeds = cfg.seeds();
    let jobs: Vec<(usize, u64)> = (0..variants.len())
        .flat_map(|v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let mut results = jobs
        .par_iter()
        .map(|&(v, seed)| {
            let own;
            let instance = match &shared {
                Some(inst) => inst,
                None => {
                    own = sample_instance(&cfg.instance_for(seed))?;
                    &own
                }
            };
            run_replica(cfg, instance, &variants[v], seed, &config_hash).map(|t| (v, seed, t))
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|&(v, seed, _)| (v, seed));
    Ok(ExperimentOutput {
        config: cfg.clone(),
        config_hash,
        calibration,
        traces: results.into_iter().map(|(_, _, t)| t).collect(),
    })
}
