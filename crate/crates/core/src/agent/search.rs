//! Optimistic parameter search over `C_k(α) ∩ S`.
//!
//! The exact argmin of `J₁*(Θ, x₁)` over the ellipsoid is a nonconvex
//! problem. We evaluate the projected center plus `M` seeded samples
//! `Θ̂ + β·r·V^{-1/2}·D` (`D` a uniformly random unit-Frobenius direction,
//! `r = u^{1/p}` so samples are uniform in the ellipsoid), each radially
//! projected into the unit Frobenius ball, and keep the cheapest one whose
//! gains respect `max_h ‖K_h‖ ≤ γ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::confidence::ConfidenceEllipsoid;
use crate::error::Result;
use crate::linalg::inv_sqrt_spd;
use crate::lq_system::{CostMatrices, NoiseModel, SystemDynamics};
use crate::riccati::{riccati_backward, GainSchedule};

/// Slack on membership tests for points produced by the sampler itself.
const MEMBERSHIP_SLACK: f64 = 1e-9;

/// Known parts of the problem the agent plans with.
#[derive(Debug, Clone, Copy)]
pub struct SearchProblem<'a> {
    pub costs: &'a CostMatrices,
    pub noise: &'a NoiseModel,
    pub horizon: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    /// No candidate met the gain budget; the smallest max-gain in the set won.
    GainBudget,
    /// No candidate landed in `C_k ∩ S`; the projected center was used.
    EmptyIntersection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticChoice {
    pub theta: DMatrix<f64>,
    pub gains: GainSchedule,
    /// `J₁*(Θ̃, x₁)`.
    pub objective: f64,
    pub max_gain: f64,
    pub candidates: usize,
    pub rejected_outside: usize,
    pub rejected_gain: usize,
    pub fallback: Option<Fallback>,
    /// Index into the forced candidate list, if one of them won.
    pub forced_winner: Option<usize>,
}

struct Candidate {
    theta: DMatrix<f64>,
    gains: GainSchedule,
    objective: f64,
    max_gain: f64,
    forced: Option<usize>,
}

/// Scales `theta` into the unit Frobenius ball.
pub fn project_to_unit_ball(theta: DMatrix<f64>) -> DMatrix<f64> {
    let norm = theta.norm();
    if norm > 1.0 {
        theta / norm
    } else {
        theta
    }
}

fn evaluate(
    theta: DMatrix<f64>,
    x1: &DVector<f64>,
    problem: &SearchProblem<'_>,
    forced: Option<usize>,
) -> Result<Candidate> {
    let n = theta.ncols();
    let dynamics = SystemDynamics::from_theta(&theta, n)?;
    let (values, gains) = riccati_backward(&dynamics, problem.costs, problem.horizon)?;
    let objective = values.cost_to_go(problem.noise, x1, 1)?;
    let max_gain = gains.max_norm();
    Ok(Candidate {
        theta,
        gains,
        objective,
        max_gain,
        forced,
    })
}

/// Picks the most optimistic admissible parameter found with `budget` samples
/// (plus the projected center and any `forced` candidates).
pub fn optimistic_select<R: Rng + ?Sized>(
    ell: &ConfidenceEllipsoid,
    x1: &DVector<f64>,
    problem: &SearchProblem<'_>,
    rng: &mut R,
    budget: usize,
    forced: &[DMatrix<f64>],
) -> Result<OptimisticChoice> {
    let (rows, cols) = ell.center.shape();
    let dim = (rows * cols) as f64;
    let spread = inv_sqrt_spd(&ell.shape)?;
    let limit = ell.radius * (1.0 + MEMBERSHIP_SLACK);

    let mut best: Option<Candidate> = None;
    let mut least_gain: Option<Candidate> = None;
    let mut candidates = 0;
    let mut rejected_outside = 0;
    let mut rejected_gain = 0;

    let center = project_to_unit_ball(ell.center.clone());
    let mut consider = |theta: DMatrix<f64>, forced_idx: Option<usize>| -> Result<()> {
        candidates += 1;
        if ell.distance(&theta)? > limit {
            rejected_outside += 1;
            return Ok(());
        }
        let cand = evaluate(theta, x1, problem, forced_idx)?;
        if cand.max_gain > problem.gamma {
            rejected_gain += 1;
            if least_gain
                .as_ref()
                .is_none_or(|c| cand.max_gain < c.max_gain)
            {
                least_gain = Some(cand);
            }
            return Ok(());
        }
        if best.as_ref().is_none_or(|c| cand.objective < c.objective) {
            best = Some(cand);
        }
        Ok(())
    };

    consider(center.clone(), None)?;
    for (i, theta) in forced.iter().enumerate() {
        consider(theta.clone(), Some(i))?;
    }
    for _ in 0..budget {
        let mut direction =
            DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = direction.norm();
        let u: f64 = rng.random();
        if norm > 0.0 {
            direction /= norm;
        }
        let scale = ell.radius * u.powf(1.0 / dim);
        let theta = &ell.center + &spread * direction * scale;
        consider(project_to_unit_ball(theta), None)?;
    }

    let (winner, fallback) = match (best, least_gain) {
        (Some(c), _) => (c, None),
        (None, Some(c)) => (c, Some(Fallback::GainBudget)),
        (None, None) => (
            evaluate(center, x1, problem, None)?,
            Some(Fallback::EmptyIntersection),
        ),
    };
    Ok(OptimisticChoice {
        theta: winner.theta,
        gains: winner.gains,
        objective: winner.objective,
        max_gain: winner.max_gain,
        candidates,
        rejected_outside,
        rejected_gain,
        fallback,
        forced_winner: winner.forced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::stream_rng;
    use approx::assert_relative_eq;

    fn problem<'a>(
        costs: &'a CostMatrices,
        noise: &'a NoiseModel,
        gamma: f64,
    ) -> SearchProblem<'a> {
        SearchProblem {
            costs,
            noise,
            horizon: 4,
            gamma,
        }
    }

    #[test]
    fn collapsed_ellipsoid_returns_center() {
        let costs = CostMatrices::scaled_identity(2, 1, 1.0).unwrap();
        let noise = NoiseModel::new(2, 0.1).unwrap();
        let center = DMatrix::from_row_slice(3, 2, &[0.3, 0.1, -0.2, 0.4, 0.2, 0.1]);
        let ell = ConfidenceEllipsoid {
            center: center.clone(),
            shape: DMatrix::identity(3, 3),
            radius: 1e-13,
            alpha: 0.1,
        };
        let x1 = DVector::from_vec(vec![0.6, 0.8]);
        let choice = optimistic_select(
            &ell,
            &x1,
            &problem(&costs, &noise, 10.0),
            &mut stream_rng(1, 1),
            50,
            &[],
        )
        .unwrap();
        assert_relative_eq!(choice.theta, center, epsilon = 1e-12);
        assert_eq!(choice.candidates, 51);
        assert!(choice.fallback.is_none());
    }

    #[test]
    fn selection_stays_in_set_and_ball() {
        let costs = CostMatrices::scaled_identity(2, 1, 1.0).unwrap();
        let noise = NoiseModel::new(2, 0.1).unwrap();
        let ell = ConfidenceEllipsoid {
            center: DMatrix::from_row_slice(3, 2, &[0.6, 0.1, -0.2, 0.5, 0.3, 0.1]),
            shape: DMatrix::from_row_slice(3, 3, &[4.0, 0.5, 0.0, 0.5, 2.0, 0.1, 0.0, 0.1, 1.0]),
            radius: 0.8,
            alpha: 0.1,
        };
        let x1 = DVector::from_vec(vec![1.0, 0.0]);
        let mut rng = stream_rng(4, 1);
        for _ in 0..20 {
            let choice =
                optimistic_select(&ell, &x1, &problem(&costs, &noise, 0.8), &mut rng, 40, &[])
                    .unwrap();
            assert!(choice.theta.norm() <= 1.0 + 1e-12);
            assert!(ell.distance(&choice.theta).unwrap() <= ell.radius * (1.0 + 1e-9));
            if choice.fallback.is_none() {
                assert!(choice.max_gain <= 0.8);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let costs = CostMatrices::scaled_identity(1, 1, 1.0).unwrap();
        let noise = NoiseModel::new(1, 0.2).unwrap();
        let ell = ConfidenceEllipsoid {
            center: DMatrix::from_row_slice(2, 1, &[0.4, 0.3]),
            shape: DMatrix::identity(2, 2) * 10.0,
            radius: 1.0,
            alpha: 0.1,
        };
        let x1 = DVector::from_element(1, 1.0);
        let p = problem(&costs, &noise, 1.0);
        let a = optimistic_select(&ell, &x1, &p, &mut stream_rng(9, 1), 30, &[]).unwrap();
        let b = optimistic_select(&ell, &x1, &p, &mut stream_rng(9, 1), 30, &[]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gain_budget_fallback_is_flagged() {
        let costs = CostMatrices::scaled_identity(1, 1, 0.01).unwrap();
        let noise = NoiseModel::new(1, 0.1).unwrap();
        // Strong drift with strong actuation: optimal gains are large.
        let ell = ConfidenceEllipsoid {
            center: DMatrix::from_row_slice(2, 1, &[0.7, 0.7]),
            shape: DMatrix::identity(2, 2) * 1e6,
            radius: 1.0,
            alpha: 0.1,
        };
        let x1 = DVector::from_element(1, 1.0);
        let choice = optimistic_select(
            &ell,
            &x1,
            &problem(&costs, &noise, 1e-3),
            &mut stream_rng(2, 1),
            10,
            &[],
        )
        .unwrap();
        assert_eq!(choice.fallback, Some(Fallback::GainBudget));
        assert_eq!(choice.rejected_gain, choice.candidates);
    }
}
