use serde::{Deserialize, Serialize};

use crate::confidence::RegularizerBounds;
use crate::counters::{tree_depth, PrivacyBudget, PrivacyReport, SigmaMode};
use crate::error::{Error, Result};

/// Regularization constants for the private statistics.
///
/// With `Λ = σ₁√m (4√(n+d) + √(8 ln(4K/α)))` the accumulated symmetric noise
/// `N_k` satisfies `‖N_k‖ ≤ Λ` w.p. `1 − α/2K`; shifting by `η = 2Λ` keeps
/// `H_k = N_k + ηI` between `Λ` and `3Λ`, and the cross-term noise stays
/// within `ν` in the `H_k⁻¹` norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivateCalibration {
    pub big_lambda: f64,
    pub eta: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub nu: f64,
}

impl PrivateCalibration {
    /// Constants written out directly; used for noiseless private runs.
    pub fn from_parts(eta: f64, lambda_min: f64, lambda_max: f64, nu: f64) -> Result<Self> {
        RegularizerBounds::new(lambda_min, lambda_max, nu)?;
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::Privacy(format!(
                "eta must be finite and > 0, got {eta}"
            )));
        }
        Ok(Self {
            big_lambda: 0.5 * eta,
            eta,
            lambda_min,
            lambda_max,
            nu,
        })
    }

    pub fn bounds(&self) -> RegularizerBounds {
        RegularizerBounds {
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
            nu: self.nu,
        }
    }
}

/// Instantiates `Λ`, `η = 2Λ`, `λ_min = Λ`, `λ_max = 3Λ` and
/// `ν = σ₂√(m/Λ)(√(2n(n+d)) + √(4 ln(2K/α)))`.
pub fn calibrate(
    n: usize,
    d: usize,
    episodes: usize,
    alpha: f64,
    sigma_gram: f64,
    sigma_cross: f64,
) -> Result<PrivateCalibration> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Privacy(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    let m = tree_depth(episodes) as f64;
    let k = episodes as f64;
    let p = (n + d) as f64;
    let big_lambda =
        sigma_gram * m.sqrt() * (4.0 * p.sqrt() + (8.0 * (4.0 * k / alpha).ln()).sqrt());
    if !(big_lambda.is_finite() && big_lambda > 0.0) {
        return Err(Error::Privacy(format!(
            "private mode needs a positive noise cap, got Λ = {big_lambda} (σ₁ = {sigma_gram}, m = {m})"
        )));
    }
    let nu = sigma_cross
        * (m / big_lambda).sqrt()
        * ((2.0 * n as f64 * p).sqrt() + (4.0 * (2.0 * k / alpha).ln()).sqrt());
    Ok(PrivateCalibration {
        big_lambda,
        eta: 2.0 * big_lambda,
        lambda_min: big_lambda,
        lambda_max: 3.0 * big_lambda,
        nu,
    })
}

/// Everything a private agent needs: counter noise scales and regularization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivateSetup {
    pub sigma_gram: f64,
    pub sigma_cross: f64,
    pub calibration: PrivateCalibration,
    /// Fraction of `α` spent on the confidence set; the rest covers the
    /// noise-bound events.
    pub confidence_share: f64,
    pub report: Option<PrivacyReport>,
}

impl PrivateSetup {
    /// Calibrates both counters to `budget` and splits `α` evenly between the
    /// confidence set and the noise-bound events.
    #[allow(clippy::too_many_arguments)]
    pub fn from_budget(
        budget: PrivacyBudget,
        mode: SigmaMode,
        n: usize,
        d: usize,
        horizon: usize,
        episodes: usize,
        gamma: f64,
        alpha: f64,
    ) -> Result<Self> {
        let report = budget.calibrate(horizon, episodes, gamma, mode)?;
        let calibration = calibrate(
            n,
            d,
            episodes,
            0.5 * alpha,
            report.gram.sigma,
            report.cross.sigma,
        )?;
        Ok(Self {
            sigma_gram: report.gram.sigma,
            sigma_cross: report.cross.sigma,
            calibration,
            confidence_share: 0.5,
            report: Some(report),
        })
    }

    /// Counters without noise and a fixed `ηI` shift. The noise events hold
    /// surely, so the whole `α` goes to the confidence set.
    pub fn noiseless(eta: f64) -> Result<Self> {
        Ok(Self {
            sigma_gram: 0.0,
            sigma_cross: 0.0,
            calibration: PrivateCalibration::from_parts(eta, eta, eta, 0.0)?,
            confidence_share: 1.0,
            report: None,
        })
    }
}
