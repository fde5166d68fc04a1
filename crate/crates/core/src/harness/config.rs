use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::LogdetRule;
use crate::counters::SigmaMode;
use crate::error::{Error, Result};
use crate::lq_system::InstanceConfig;

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_SEARCH_BUDGET: usize = 64;
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_OUTPUT: &str = "regret.csv";
pub const MAX_REPLICAS: usize = 100_000;
pub const MAX_SEARCH_BUDGET: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// What to run: one non-private agent, one private agent, or an ε sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeSpec {
    NonPrivate {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    Private {
        epsilon: f64,
        delta: f64,
    },
    Sweep {
        epsilons: Vec<f64>,
        delta: f64,
        #[serde(default)]
        include_non_private: bool,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

/// One JSON document describing a full experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceConfig,
    pub mode: ModeSpec,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Replica `r` runs with seed `instance.seed + r`.
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_search_budget")]
    pub search_budget: usize,
    #[serde(default)]
    pub sigma_mode: SigmaMode,
    /// Radius rule for non-private variants.
    #[serde(default)]
    pub logdet_rule: LogdetRule,
    #[serde(default)]
    pub redraw_initial_state: bool,
    /// Give each replica its own instance, sampled from the replica seed.
    #[serde(default)]
    pub resample_instance: bool,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_replicas() -> usize {
    1
}

fn default_search_budget() -> usize {
    DEFAULT_SEARCH_BUDGET
}

/// A single agent setting within an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    NonPrivate { lambda: f64 },
    Private { epsilon: f64, delta: f64 },
}

impl Variant {
    pub fn label(&self) -> String {
        match self {
            Variant::NonPrivate { .. } => "non_private".to_string(),
            Variant::Private { epsilon, .. } => format!("private_eps_{epsilon}"),
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self {
            Variant::NonPrivate { .. } => None,
            Variant::Private { epsilon, .. } => Some(*epsilon),
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match self {
            Variant::NonPrivate { .. } => None,
            Variant::Private { delta, .. } => Some(*delta),
        }
    }
}

fn check_lambda(field: &str, lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::config(
            field,
            format!("must be finite and > 0, got {lambda}"),
        ))
    }
}

fn check_epsilon(field: &str, epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::config(
            field,
            format!("must be finite and > 0, got {epsilon}"),
        ))
    }
}

fn check_delta(field: &str, delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(
            field,
            format!("must lie in (0, 1], got {delta}"),
        ))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.instance.validate_at("instance.")?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(
                "alpha",
                format!("must lie in (0, 1), got {}", self.alpha),
            ));
        }
        if self.replicas == 0 || self.replicas > MAX_REPLICAS {
            return Err(Error::config(
                "replicas",
                format!("must be in 1..={MAX_REPLICAS}, got {}", self.replicas),
            ));
        }
        if self.search_budget > MAX_SEARCH_BUDGET {
            return Err(Error::config(
                "search_budget",
                format!(
                    "must be at most {MAX_SEARCH_BUDGET}, got {}",
                    self.search_budget
                ),
            ));
        }
        let private_possible = self.instance.episodes >= 2;
        match &self.mode {
            ModeSpec::NonPrivate { lambda } => check_lambda("mode.lambda", *lambda)?,
            ModeSpec::Private { epsilon, delta } => {
                check_epsilon("mode.epsilon", *epsilon)?;
                check_delta("mode.delta", *delta)?;
                if !private_possible {
                    return Err(Error::config(
                        "instance.K",
                        "private mode needs at least 2 episodes",
                    ));
                }
            }
            ModeSpec::Sweep {
                epsilons,
                delta,
                lambda,
                include_non_private,
            } => {
                if epsilons.is_empty() && !include_non_private {
                    return Err(Error::config("mode.epsilons", "sweep has no variants"));
                }
                for (i, e) in epsilons.iter().enumerate() {
                    check_epsilon(&format!("mode.epsilons[{i}]"), *e)?;
                }
                check_delta("mode.delta", *delta)?;
                check_lambda("mode.lambda", *lambda)?;
                if !epsilons.is_empty() && !private_possible {
                    return Err(Error::config(
                        "instance.K",
                        "private mode needs at least 2 episodes",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Variants in emission order: non-private first, then ε as listed.
    pub fn variants(&self) -> Vec<Variant> {
        match &self.mode {
            ModeSpec::NonPrivate { lambda } => vec![Variant::NonPrivate { lambda: *lambda }],
            ModeSpec::Private { epsilon, delta } => vec![Variant::Private {
                epsilon: *epsilon,
                delta: *delta,
            }],
            ModeSpec::Sweep {
                epsilons,
                delta,
                include_non_private,
                lambda,
            } => {
                let mut out = Vec::with_capacity(epsilons.len() + 1);
                if *include_non_private {
                    out.push(Variant::NonPrivate { lambda: *lambda });
                }
                out.extend(epsilons.iter().map(|&epsilon| Variant::Private {
                    epsilon,
                    delta: *delta,
                }));
                out
            }
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replicas as u64)
            .map(|r| self.instance.seed.wrapping_add(r))
            .collect()
    }

    /// Instance settings used by the replica with `seed`.
    pub fn instance_for(&self, seed: u64) -> InstanceConfig {
        let mut inst = self.instance.clone();
        if self.resample_instance {
            inst.seed = seed;
        }
        inst
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
