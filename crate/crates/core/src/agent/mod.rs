//! Optimism-in-the-face-of-uncertainty agent for episodic LQ control, with
//! exact or privatized running statistics.

mod calibration;
mod search;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use calibration::{calibrate, PrivateCalibration, PrivateSetup};
pub use search::{
    optimistic_select, project_to_unit_ball, Fallback, OptimisticChoice, SearchProblem,
};

use crate::confidence::{
    estimate, logdet_cap, logdet_gram, radius, ConfidenceEllipsoid, GramStatistics,
    RegularizerBounds, LAMBDA_FLOOR,
};
use crate::counters::TreeCounter;
use crate::error::{Error, Result};
use crate::linalg::stream_rng;
use crate::lq_system::{
    unit_vector, CostMatrices, EpisodeTrajectory, Instance, LqSystem, NoiseModel, SystemDynamics,
    Transition,
};
use crate::riccati::{riccati_backward, GainSchedule, ValueMatrices};

/// RNG stream ids derived from one replica seed.
pub mod streams {
    pub const ENVIRONMENT: u64 = 0;
    pub const SEARCH: u64 = 1;
    pub const GRAM_COUNTER: u64 = 2;
    pub const CROSS_COUNTER: u64 = 3;
    pub const INITIAL_STATE: u64 = 4;
}

/// Slack allowed on `‖x‖ ≤ 1` and `‖z‖ ≤ 1+γ` before a step counts as a violation.
pub const BOUND_SLACK: f64 = 1e-9;

/// Runs abort once clamps fire in more than this fraction of episodes.
pub const MAX_CLAMP_FRACTION: f64 = 0.1;

/// Which statistics the agent plans from.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentMode {
    /// Exact sums with a fixed ridge `λI`.
    NonPrivate { lambda: f64 },
    /// Sums released through noisy tree counters.
    Private(PrivateSetup),
    /// Knows the true dynamics and plays their Riccati gains. Baseline only.
    Oracle(SystemDynamics),
}

/// How `ln det(I + λ_min⁻¹ZᵀZ)` enters the radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogdetRule {
    /// From the exact Gram matrix. Not available to private agents.
    #[default]
    Exact,
    /// The deterministic worst-case cap.
    Cap,
}

/// Problem constants the agent is given.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub n: usize,
    pub d: usize,
    pub horizon: usize,
    pub episodes: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub search_budget: usize,
    pub costs: CostMatrices,
    pub noise: NoiseModel,
    /// Ignored in private mode, which always uses the cap.
    pub logdet_rule: LogdetRule,
}

impl AgentConfig {
    pub fn for_instance(
        instance: &Instance,
        episodes: usize,
        gamma: f64,
        alpha: f64,
        search_budget: usize,
        horizon: usize,
    ) -> Self {
        let system = &instance.system;
        Self {
            n: system.state_dim(),
            d: system.control_dim(),
            horizon,
            episodes,
            gamma,
            alpha,
            search_budget,
            costs: system.costs.clone(),
            noise: system.noise,
            logdet_rule: LogdetRule::Exact,
        }
    }
}

/// What the agent looked at. Private agents never read exact sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AccessAudit {
    pub counter_queries: usize,
    pub exact_gram_reads: usize,
    pub episodes_observed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDiagnostics {
    pub beta: f64,
    pub logdet: f64,
    /// Exact-Gram log-determinant, computed only where the rule allows it.
    pub logdet_measured: Option<f64>,
    pub logdet_cap: f64,
    pub clamped: bool,
    pub candidates: usize,
    pub rejected_outside: usize,
    pub rejected_gain: usize,
    pub fallback: Option<String>,
}

/// The agent's decision for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodePlan {
    pub episode: usize,
    pub choice: OptimisticChoice,
    pub ellipsoid: Option<ConfidenceEllipsoid>,
    pub diagnostics: Option<PlanDiagnostics>,
}

struct Learner {
    gram: TreeCounter,
    cross: TreeCounter,
    bounds: RegularizerBounds,
    shift: f64,
    rule: LogdetRule,
    confidence_alpha: f64,
    rng: ChaCha8Rng,
    clamp_events: usize,
}

enum Policy {
    Learner(Box<Learner>),
    Oracle(Box<(OptimisticChoice, ValueMatrices)>),
}

pub struct OfuAgent {
    config: AgentConfig,
    policy: Policy,
    episode: usize,
    forced: Vec<DMatrix<f64>>,
    audit: AccessAudit,
    private: bool,
}

impl OfuAgent {
    /// `seed` picks the search and counter-noise streams.
    pub fn new(config: AgentConfig, mode: AgentMode, seed: u64) -> Result<Self> {
        if config.episodes == 0 || config.horizon == 0 {
            return Err(Error::config("K", "episodes and horizon must be positive"));
        }
        if !(config.alpha > 0.0 && config.alpha < 1.0) {
            return Err(Error::config(
                "alpha",
                format!("must lie in (0, 1), got {}", config.alpha),
            ));
        }
        let p = config.n + config.d;
        let private = matches!(mode, AgentMode::Private(_));
        let (sigma_gram, sigma_cross, bounds, shift, rule, confidence_alpha) = match mode {
            AgentMode::Oracle(dynamics) => {
                if dynamics.state_dim() != config.n || dynamics.control_dim() != config.d {
                    return Err(Error::Dimension("oracle dynamics do not match n, d".into()));
                }
                let (values, gains) = riccati_backward(&dynamics, &config.costs, config.horizon)?;
                let choice = OptimisticChoice {
                    theta: dynamics.theta(),
                    max_gain: gains.max_norm(),
                    gains,
                    objective: 0.0,
                    candidates: 1,
                    rejected_outside: 0,
                    rejected_gain: 0,
                    fallback: None,
                    forced_winner: None,
                };
                return Ok(Self {
                    config,
                    policy: Policy::Oracle(Box::new((choice, values))),
                    episode: 0,
                    forced: Vec::new(),
                    audit: AccessAudit::default(),
                    private: false,
                });
            }
            AgentMode::NonPrivate { lambda } => {
                if !(lambda.is_finite() && lambda > 0.0) {
                    return Err(Error::config(
                        "lambda",
                        format!("must be finite and > 0, got {lambda}"),
                    ));
                }
                (
                    0.0,
                    0.0,
                    RegularizerBounds::ridge(lambda)?,
                    lambda,
                    config.logdet_rule,
                    config.alpha,
                )
            }
            AgentMode::Private(setup) => (
                setup.sigma_gram,
                setup.sigma_cross,
                setup.calibration.bounds(),
                setup.calibration.eta,
                LogdetRule::Cap,
                config.alpha * setup.confidence_share,
            ),
        };
        let gram = TreeCounter::new(
            config.episodes,
            (p, p),
            true,
            sigma_gram,
            stream_rng(seed, streams::GRAM_COUNTER),
        )?;
        let cross = TreeCounter::new(
            config.episodes,
            (p, config.n),
            false,
            sigma_cross,
            stream_rng(seed, streams::CROSS_COUNTER),
        )?;
        let learner = Learner {
            gram,
            cross,
            bounds,
            shift,
            rule,
            confidence_alpha,
            rng: stream_rng(seed, streams::SEARCH),
            clamp_events: 0,
        };
        Ok(Self {
            config,
            policy: Policy::Learner(Box::new(learner)),
            episode: 0,
            forced: Vec::new(),
            audit: AccessAudit::default(),
            private,
        })
    }

    /// Extra parameters evaluated by every search alongside the samples.
    pub fn with_forced_candidates(mut self, forced: Vec<DMatrix<f64>>) -> Self {
        self.forced = forced;
        self
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn audit(&self) -> AccessAudit {
        self.audit
    }

    pub fn is_private(&self) -> bool {
        self.private
    }

    pub fn clamp_events(&self) -> usize {
        match &self.policy {
            Policy::Learner(l) => l.clamp_events,
            Policy::Oracle(_) => 0,
        }
    }

    pub fn bounds(&self) -> Option<RegularizerBounds> {
        match &self.policy {
            Policy::Learner(l) => Some(l.bounds),
            Policy::Oracle(_) => None,
        }
    }

    /// Released noisy Gram counter, for inspection.
    pub fn gram_counter(&self) -> Option<&TreeCounter> {
        match &self.policy {
            Policy::Learner(l) => Some(&l.gram),
            Policy::Oracle(_) => None,
        }
    }

    pub fn cross_counter(&self) -> Option<&TreeCounter> {
        match &self.policy {
            Policy::Learner(l) => Some(&l.cross),
            Policy::Oracle(_) => None,
        }
    }

    /// Statistics for the next episode: `V = T₁ + shift·I`, `U = T₂`.
    pub fn statistics(&mut self) -> Result<GramStatistics> {
        let k = self.episode + 1;
        match &mut self.policy {
            Policy::Learner(l) => {
                let p = self.config.n + self.config.d;
                let t1 = l.gram.query(k)?;
                let t2 = l.cross.query(k)?;
                self.audit.counter_queries += 2;
                GramStatistics::new(t1 + DMatrix::identity(p, p) * l.shift, t2, k)
            }
            Policy::Oracle(_) => Err(Error::Dimension("oracle agent keeps no statistics".into())),
        }
    }

    /// Chooses the gains for the next episode given its start state.
    pub fn plan(&mut self, x1: &DVector<f64>) -> Result<EpisodePlan> {
        let k = self.episode + 1;
        if k > self.config.episodes {
            return Err(Error::StepOutOfRange {
                index: k,
                max: self.config.episodes,
            });
        }
        if let Policy::Oracle(oracle) = &self.policy {
            let (choice, values) = oracle.as_ref();
            let mut choice = choice.clone();
            choice.objective = values.cost_to_go(&self.config.noise, x1, 1)?;
            return Ok(EpisodePlan {
                episode: k,
                choice,
                ellipsoid: None,
                diagnostics: None,
            });
        }
        let mut stats = self.statistics()?;
        let cfg = &self.config;
        let Policy::Learner(l) = &mut self.policy else {
            unreachable!("oracle handled above")
        };
        let clamped = stats.condition(LAMBDA_FLOOR);
        if clamped {
            l.clamp_events += 1;
            if (l.clamp_events as f64) > MAX_CLAMP_FRACTION * cfg.episodes as f64 {
                return Err(Error::Conditioning {
                    events: l.clamp_events,
                    episodes: cfg.episodes,
                });
            }
        }
        let center = estimate(&stats)?;
        let cap = logdet_cap(
            cfg.n,
            cfg.d,
            cfg.horizon,
            cfg.episodes,
            cfg.gamma,
            l.bounds.lambda_min,
        );
        let measured = match l.rule {
            LogdetRule::Exact => {
                self.audit.exact_gram_reads += 1;
                let p = cfg.n + cfg.d;
                let gram = &stats.v - DMatrix::identity(p, p) * l.shift;
                Some(logdet_gram(&gram, l.bounds.lambda_min)?)
            }
            LogdetRule::Cap => None,
        };
        let logdet = measured.unwrap_or(cap);
        let beta = radius(
            logdet,
            &l.bounds,
            cfg.noise.radius(),
            cfg.n,
            l.confidence_alpha,
        );
        let ellipsoid = ConfidenceEllipsoid {
            center,
            shape: stats.v,
            radius: beta,
            alpha: l.confidence_alpha,
        };
        let problem = SearchProblem {
            costs: &cfg.costs,
            noise: &cfg.noise,
            horizon: cfg.horizon,
            gamma: cfg.gamma,
        };
        let choice = optimistic_select(
            &ellipsoid,
            x1,
            &problem,
            &mut l.rng,
            cfg.search_budget,
            &self.forced,
        )?;
        let diagnostics = PlanDiagnostics {
            beta,
            logdet,
            logdet_measured: measured,
            logdet_cap: cap,
            clamped,
            candidates: choice.candidates,
            rejected_outside: choice.rejected_outside,
            rejected_gain: choice.rejected_gain,
            fallback: choice.fallback.map(|f| format!("{f:?}")),
        };
        Ok(EpisodePlan {
            episode: k,
            choice,
            ellipsoid: Some(ellipsoid),
            diagnostics: Some(diagnostics),
        })
    }

    /// Feeds a finished episode into the statistics and advances the episode index.
    pub fn observe(&mut self, trajectory: &EpisodeTrajectory) -> Result<()> {
        if trajectory.episode != self.episode + 1 {
            return Err(Error::StepOutOfRange {
                index: trajectory.episode,
                max: self.episode + 1,
            });
        }
        if let Policy::Learner(l) = &mut self.policy {
            l.gram.feed(&trajectory.gram_sum())?;
            l.cross.feed(&trajectory.cross_sum())?;
        }
        self.episode += 1;
        self.audit.episodes_observed += 1;
        Ok(())
    }
}

/// Simulated environment for one replica.
pub struct Environment {
    pub system: LqSystem,
    pub initial_state: DVector<f64>,
    noise_rng: ChaCha8Rng,
    start_rng: Option<ChaCha8Rng>,
}

impl Environment {
    /// With `redraw_initial_state` every episode starts from a fresh unit vector.
    pub fn new(instance: &Instance, seed: u64, redraw_initial_state: bool) -> Self {
        Self {
            system: instance.system.clone(),
            initial_state: instance.initial_state.clone(),
            noise_rng: stream_rng(seed, streams::ENVIRONMENT),
            start_rng: redraw_initial_state.then(|| stream_rng(seed, streams::INITIAL_STATE)),
        }
    }

    pub fn next_initial_state(&mut self) -> DVector<f64> {
        match &mut self.start_rng {
            Some(rng) => unit_vector(self.system.state_dim(), rng),
            None => self.initial_state.clone(),
        }
    }

    /// Plays `u_h = K_h x_h` for one episode. Returns the trajectory and the
    /// number of steps where `‖x‖ ≤ 1` or `‖z‖ ≤ 1+γ` failed.
    pub fn run_episode(
        &mut self,
        episode: usize,
        x1: &DVector<f64>,
        gains: &GainSchedule,
        gamma: f64,
    ) -> Result<(EpisodeTrajectory, usize)> {
        let mut x = x1.clone();
        let mut transitions = Vec::with_capacity(gains.horizon());
        let mut violations = 0;
        for k in gains.iter() {
            let u = k * &x;
            let z_norm = (x.norm_squared() + u.norm_squared()).sqrt();
            if x.norm() > 1.0 + BOUND_SLACK || z_norm > 1.0 + gamma + BOUND_SLACK {
                violations += 1;
            }
            let (next, cost) = self.system.step(&x, &u, &mut self.noise_rng)?;
            transitions.push(Transition {
                state: x,
                control: u,
                cost,
                next_state: next.clone(),
            });
            x = next;
        }
        Ok((
            EpisodeTrajectory {
                episode,
                transitions,
            },
            violations,
        ))
    }
}

/// Everything recorded for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub plan: EpisodePlan,
    pub initial_state: DVector<f64>,
    pub trajectory: EpisodeTrajectory,
    pub bound_violations: usize,
}

/// Plays all `K` episodes.
pub fn run(agent: &mut OfuAgent, env: &mut Environment) -> Result<Vec<EpisodeRecord>> {
    let episodes = agent.config().episodes;
    let gamma = agent.config().gamma;
    let mut records = Vec::with_capacity(episodes);
    for k in 1..=episodes {
        let x1 = env.next_initial_state();
        let plan = agent.plan(&x1)?;
        let (trajectory, bound_violations) = env.run_episode(k, &x1, &plan.choice.gains, gamma)?;
        agent.observe(&trajectory)?;
        records.push(EpisodeRecord {
            plan,
            initial_state: x1,
            trajectory,
            bound_violations,
        });
    }
    Ok(records)
}
