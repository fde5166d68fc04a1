//! Ridge estimation under changing regularizers and the matching confidence
//! ellipsoid `{Θ : ‖Θ − Θ̂‖_V ≤ β}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{clamp_eigenvalues, logdet_spd, symmetrize, weighted_sq_norm};

/// Eigenvalue floor applied to `V` before it is factorized.
pub const LAMBDA_FLOOR: f64 = 1e-8;

/// `V = ZᵀZ + H_k` and `U = ZᵀX_next + L_k`, either exact or privatized.
#[derive(Debug, Clone, PartialEq)]
pub struct GramStatistics {
    pub v: DMatrix<f64>,
    pub u: DMatrix<f64>,
    /// Episode these statistics were built for (data from episodes `1..k-1`).
    pub episode: usize,
}

impl GramStatistics {
    pub fn new(v: DMatrix<f64>, u: DMatrix<f64>, episode: usize) -> Result<Self> {
        if !v.is_square() || v.nrows() != u.nrows() || u.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "V is {}x{}, U is {}x{}",
                v.nrows(),
                v.ncols(),
                u.nrows(),
                u.ncols()
            )));
        }
        Ok(Self { v, u, episode })
    }

    /// Symmetrizes `V` and lifts eigenvalues below `floor`. Returns `true`
    /// when the clamp fired.
    pub fn condition(&mut self, floor: f64) -> bool {
        symmetrize(&mut self.v);
        clamp_eigenvalues(&mut self.v, floor) < floor
    }
}

/// `Θ̂ = V⁻¹U`, via Cholesky.
pub fn estimate(stats: &GramStatistics) -> Result<DMatrix<f64>> {
    let chol = stats
        .v
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("Gram matrix V"))?;
    Ok(chol.solve(&stats.u))
}

/// Constants bounding the regularizers `H_k` and cross-term perturbations
/// `L_k` with high probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerBounds {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub nu: f64,
}

impl RegularizerBounds {
    pub fn new(lambda_min: f64, lambda_max: f64, nu: f64) -> Result<Self> {
        if !(lambda_min > 0.0 && lambda_min <= lambda_max && lambda_max.is_finite())
            || !(nu >= 0.0 && nu.is_finite())
        {
            return Err(Error::config(
                "regularizer",
                format!("need 0 < lambda_min <= lambda_max and nu >= 0, got {lambda_min}, {lambda_max}, {nu}"),
            ));
        }
        Ok(Self {
            lambda_min,
            lambda_max,
            nu,
        })
    }

    /// Fixed ridge penalty `H_k = λI`, `L_k = 0`.
    pub fn ridge(lambda: f64) -> Result<Self> {
        Self::new(lambda, lambda, 0.0)
    }
}

/// Confidence radius
/// `β = C_w·√(2 ln(2/α) + n·logdet) + √λ_max + ν`.
///
/// `logdet` stands for `ln det(I + λ_min⁻¹ ZᵀZ)` or any upper bound on it.
pub fn radius(logdet: f64, bounds: &RegularizerBounds, c_w: f64, n: usize, alpha: f64) -> f64 {
    let inner = 2.0 * (2.0 / alpha).ln() + n as f64 * logdet.max(0.0);
    c_w * inner.sqrt() + bounds.lambda_max.sqrt() + bounds.nu
}

/// Deterministic cap on the log-determinant when every `‖z‖ ≤ 1+γ`:
/// `(n+d)·ln(1 + HK(1+γ)² / ((n+d)·λ_min))`.
pub fn logdet_cap(
    n: usize,
    d: usize,
    horizon: usize,
    episodes: usize,
    gamma: f64,
    lambda_min: f64,
) -> f64 {
    let p = (n + d) as f64;
    let mass = horizon as f64 * episodes as f64 * (1.0 + gamma).powi(2);
    p * (mass / (p * lambda_min)).ln_1p()
}

/// `ln det(I + λ_min⁻¹ G)` for a PSD Gram matrix `G`.
pub fn logdet_gram(gram: &DMatrix<f64>, lambda_min: f64) -> Result<f64> {
    let p = gram.nrows();
    let mut m = DMatrix::identity(p, p) + gram / lambda_min;
    symmetrize(&mut m);
    logdet_spd(&m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceEllipsoid {
    pub center: DMatrix<f64>,
    pub shape: DMatrix<f64>,
    pub radius: f64,
    pub alpha: f64,
}

impl ConfidenceEllipsoid {
    /// `‖Θ − Θ̂‖_V`.
    pub fn distance(&self, theta: &DMatrix<f64>) -> Result<f64> {
        if theta.shape() != self.center.shape() {
            return Err(Error::Dimension(format!(
                "theta is {:?}, ellipsoid center is {:?}",
                theta.shape(),
                self.center.shape()
            )));
        }
        let diff = theta - &self.center;
        Ok(weighted_sq_norm(&diff, &self.shape).max(0.0).sqrt())
    }

    pub fn contains(&self, theta: &DMatrix<f64>) -> Result<bool> {
        let dist = self.distance(theta)?;
        Ok(dist <= self.radius)
    }
}
