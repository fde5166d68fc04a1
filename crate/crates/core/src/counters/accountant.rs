//! Sensitivities, Gaussian noise calibration and zCDP accounting for the two
//! episode counters.
//!
//! Each counter gets half the budget, `(ε/2, δ/2)`. A counter releases every
//! episode through at most `m = ⌈log₂ K⌉` nodes, each a Gaussian mechanism
//! that is `Δ²/(2σ²)`-zCDP, so the counter is `ρ = mΔ²/(2σ²)`-zCDP and hence
//! `(ρ + 2√(ρ ln(2/δ)), δ/2)`-DP.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `m = ⌈log₂ K⌉`, the most nodes any released prefix is built from.
pub fn tree_depth(episodes: usize) -> u32 {
    if episodes <= 1 {
        0
    } else {
        usize::BITS - (episodes - 1).leading_zeros()
    }
}

/// `(Δ₁, Δ₂) = (H(1+γ)², H(1+γ))`: Frobenius sensitivities of one episode's
/// `Σ z zᵀ` and `Σ z x'ᵀ` when `‖z‖ ≤ 1+γ` and `‖x'‖ ≤ 1`.
pub fn sensitivity_bounds(horizon: usize, gamma: f64) -> (f64, f64) {
    let h = horizon as f64;
    (h * (1.0 + gamma).powi(2), h * (1.0 + gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// Solve the zCDP-to-DP conversion exactly for `ε/2`.
    #[default]
    Exact,
    /// `σ² = 8mΔ² ln(2/δ)/ε²`, the closed-form approximation.
    Approximate,
}

fn check_privacy_params(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Privacy(format!(
            "epsilon must be finite and > 0, got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Privacy(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    Ok(())
}

/// zCDP parameter `ρ` that converts to exactly `ε/2` at `δ/2`:
/// `√ρ = √(ln(2/δ) + ε/2) − √(ln(2/δ))`.
pub fn rho_for_half_budget(epsilon: f64, delta: f64) -> Result<f64> {
    check_privacy_params(epsilon, delta)?;
    let log_term = (2.0 / delta).ln();
    let half = 0.5 * epsilon;
    // Rationalized form of √(L + e) − √L, stable when e ≪ L.
    let root = half / ((log_term + half).sqrt() + log_term.sqrt());
    Ok(root * root)
}

/// Per-entry noise scale for a counter with sensitivity `Δ` over `K` episodes.
pub fn calibrate_sigma(
    epsilon: f64,
    delta: f64,
    episodes: usize,
    sensitivity: f64,
    mode: SigmaMode,
) -> Result<f64> {
    check_privacy_params(epsilon, delta)?;
    if episodes == 0 {
        return Err(Error::Privacy("episode count must be positive".into()));
    }
    if !(sensitivity.is_finite() && sensitivity >= 0.0) {
        return Err(Error::Privacy(format!(
            "sensitivity must be >= 0, got {sensitivity}"
        )));
    }
    let m = tree_depth(episodes) as f64;
    let variance = match mode {
        SigmaMode::Exact => {
            m * sensitivity * sensitivity / (2.0 * rho_for_half_budget(epsilon, delta)?)
        }
        SigmaMode::Approximate => {
            8.0 * m * sensitivity * sensitivity * (2.0 / delta).ln() / (epsilon * epsilon)
        }
    };
    Ok(variance.sqrt())
}

/// `ρ = mΔ²/(2σ²)` for one counter.
pub fn counter_rho(sigma: f64, sensitivity: f64, episodes: usize) -> f64 {
    let m = tree_depth(episodes) as f64;
    if m == 0.0 || sensitivity == 0.0 {
        return 0.0;
    }
    m * sensitivity * sensitivity / (2.0 * sigma * sigma)
}

/// DP epsilon of one counter at `δ/2`: `ρ + 2√(ρ ln(2/δ))`.
pub fn accountant_epsilon(sigma: f64, sensitivity: f64, episodes: usize, delta: f64) -> f64 {
    let rho = counter_rho(sigma, sensitivity, episodes);
    rho + 2.0 * (rho * (2.0 / delta).ln()).sqrt()
}

/// Total `(ε, δ)` requested for the whole algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        check_privacy_params(epsilon, delta)?;
        Ok(Self { epsilon, delta })
    }

    /// Noise scales and accounting for both counters.
    pub fn calibrate(
        &self,
        horizon: usize,
        episodes: usize,
        gamma: f64,
        mode: SigmaMode,
    ) -> Result<PrivacyReport> {
        let (gram_sens, cross_sens) = sensitivity_bounds(horizon, gamma);
        let counter = |sensitivity: f64| -> Result<CounterCalibration> {
            let sigma = calibrate_sigma(self.epsilon, self.delta, episodes, sensitivity, mode)?;
            Ok(CounterCalibration {
                sigma,
                sensitivity,
                rho: counter_rho(sigma, sensitivity, episodes),
                epsilon: accountant_epsilon(sigma, sensitivity, episodes, self.delta),
                delta: 0.5 * self.delta,
            })
        };
        let gram = counter(gram_sens)?;
        let cross = counter(cross_sens)?;
        Ok(PrivacyReport {
            budget: *self,
            mode,
            depth: tree_depth(episodes),
            epsilon_total: gram.epsilon + cross.epsilon,
            delta_total: gram.delta + cross.delta,
            gram,
            cross,
        })
    }
}

/// Calibration of a single counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterCalibration {
    pub sigma: f64,
    pub sensitivity: f64,
    pub rho: f64,
    /// Achieved DP epsilon at `delta`.
    pub epsilon: f64,
    pub delta: f64,
}

/// Both counters plus the composed guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub budget: PrivacyBudget,
    pub mode: SigmaMode,
    /// `m = ⌈log₂ K⌉`.
    pub depth: u32,
    /// Counter over `Σ z zᵀ`.
    pub gram: CounterCalibration,
    /// Counter over `Σ z x'ᵀ`.
    pub cross: CounterCalibration,
    pub epsilon_total: f64,
    pub delta_total: f64,
}
