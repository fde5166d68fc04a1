use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::agent::{EpisodeRecord, Fallback};
use crate::confidence::logdet_gram;
use crate::error::Result;
use crate::lq_system::LqSystem;
use crate::riccati::{linear_policy_cost, riccati_backward, GainSchedule};

/// Per-episode regret may dip below zero by this much from rounding.
pub const REGRET_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub episode: usize,
    /// Expected cost of the played gains on the true system.
    pub policy_cost: f64,
    /// Optimal expected cost from the same start state.
    pub optimal_cost: f64,
    pub episode_regret: f64,
    pub cumulative_regret: f64,
}

/// Run-level counters used by the acceptance checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceDiagnostics {
    /// Episodes whose confidence set missed the true parameter.
    pub uncovered_episodes: usize,
    pub clamp_events: usize,
    pub bound_violations: usize,
    pub gain_fallbacks: usize,
    pub empty_fallbacks: usize,
    /// Episodes where the radius cap was below the measured log-determinant.
    pub logdet_cap_violations: usize,
    /// Largest measured-to-cap log-determinant ratio seen.
    pub max_logdet_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub variant: String,
    pub seed: u64,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub config_hash: String,
    pub records: Vec<RegretRecord>,
    pub diagnostics: TraceDiagnostics,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_regret)
    }

    /// Cumulative regret after episode `k` (1-based).
    pub fn regret_at(&self, k: usize) -> Option<f64> {
        k.checked_sub(1)
            .and_then(|i| self.records.get(i))
            .map(|r| r.cumulative_regret)
    }
}

/// Exact expected regret of each played gain schedule from its start state.
pub fn compute_regret(
    system: &LqSystem,
    plays: impl IntoIterator<Item = (usize, nalgebra::DVector<f64>, GainSchedule)>,
    horizon: usize,
) -> Result<Vec<RegretRecord>> {
    let (values, _) = riccati_backward(&system.dynamics, &system.costs, horizon)?;
    let mut cumulative = 0.0;
    let mut out = Vec::new();
    for (episode, x1, gains) in plays {
        let policy_cost = linear_policy_cost(
            &system.dynamics,
            &system.costs,
            &system.noise,
            &gains,
            &x1,
            1,
        )?;
        let optimal_cost = values.cost_to_go(&system.noise, &x1, 1)?;
        let episode_regret = policy_cost - optimal_cost;
        cumulative += episode_regret;
        out.push(RegretRecord {
            episode,
            policy_cost,
            optimal_cost,
            episode_regret,
            cumulative_regret: cumulative,
        });
    }
    Ok(out)
}

/// Regret of a finished run.
pub fn regret_of_run(
    system: &LqSystem,
    records: &[EpisodeRecord],
    horizon: usize,
) -> Result<Vec<RegretRecord>> {
    compute_regret(
        system,
        records.iter().map(|r| {
            (
                r.plan.episode,
                r.initial_state.clone(),
                r.plan.choice.gains.clone(),
            )
        }),
        horizon,
    )
}

/// Coverage, fallbacks and the measured log-determinant against the cap.
///
/// The Gram matrix is rebuilt from the trajectories here, outside the agent,
/// so private agents are checked without reading exact sums themselves.
pub fn diagnose(
    system: &LqSystem,
    records: &[EpisodeRecord],
    lambda_min: Option<f64>,
    cap: Option<f64>,
    clamp_events: usize,
) -> Result<TraceDiagnostics> {
    let theta = system.dynamics.theta();
    let p = system.state_dim() + system.control_dim();
    let mut gram = DMatrix::zeros(p, p);
    let mut diag = TraceDiagnostics {
        clamp_events,
        ..Default::default()
    };
    for record in records {
        if let Some(ell) = &record.plan.ellipsoid {
            if !ell.contains(&theta)? {
                diag.uncovered_episodes += 1;
            }
        }
        match record.plan.choice.fallback {
            Some(Fallback::GainBudget) => diag.gain_fallbacks += 1,
            Some(Fallback::EmptyIntersection) => diag.empty_fallbacks += 1,
            None => {}
        }
        diag.bound_violations += record.bound_violations;
        gram += record.trajectory.gram_sum();
        if let (Some(lambda_min), Some(cap)) = (lambda_min, cap) {
            let measured = logdet_gram(&gram, lambda_min)?;
            if measured > cap {
                diag.logdet_cap_violations += 1;
            }
            if cap > 0.0 {
                diag.max_logdet_ratio = diag.max_logdet_ratio.max(measured / cap);
            }
        }
    }
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lq_system::{CostMatrices, NoiseModel, SystemDynamics};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn scalar_system(a: f64, b: f64) -> LqSystem {
        LqSystem::new(
            SystemDynamics::new(
                DMatrix::from_element(1, 1, a),
                DMatrix::from_element(1, 1, b),
            )
            .unwrap(),
            CostMatrices::scaled_identity(1, 1, 1.0).unwrap(),
            NoiseModel::new(1, 0.1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn optimal_play_has_zero_regret() {
        let system = scalar_system(0.5, 0.3);
        let (_, gains) = riccati_backward(&system.dynamics, &system.costs, 4).unwrap();
        let x1 = DVector::from_element(1, 1.0);
        let records =
            compute_regret(&system, (1..=5).map(|k| (k, x1.clone(), gains.clone())), 4).unwrap();
        assert_eq!(records.len(), 5);
        assert!(records.last().unwrap().cumulative_regret.abs() < 1e-9);
    }

    #[test]
    fn zero_gain_regret_is_constant() {
        // H = 1: policy cost x², optimal cost x² + 0; H = 2 gives a closed form.
        let (a, b, x) = (0.5_f64, 0.3_f64, 1.0_f64);
        let system = scalar_system(a, b);
        let sw = 0.01; // c_w² / n
        let zero = GainSchedule::zeros(2, 1, 1);
        let records = compute_regret(
            &system,
            (1..=3).map(|k| (k, DVector::from_element(1, x), zero.clone())),
            2,
        )
        .unwrap();
        // zero gains: x² + (a²x² + sw); optimal: P1 = 1 + a² − (ab)²/(1+b²), plus sw
        let p1 = 1.0 + a * a - (a * b).powi(2) / (1.0 + b * b);
        let expected = (1.0 + a * a) * x * x + sw - (p1 * x * x + sw);
        for (i, r) in records.iter().enumerate() {
            assert_relative_eq!(r.episode_regret, expected, epsilon = 1e-12);
            assert_relative_eq!(
                r.cumulative_regret,
                expected * (i + 1) as f64,
                epsilon = 1e-12
            );
        }
    }
}
