//! Finite-horizon Riccati recursion and exact expected costs of linear
//! feedback policies.
//!
//! Steps are 1-based throughout: `P_1 .. P_{H+1}` and `K_1 .. K_H`, with
//! `P_{H+1} = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{clamp_eigenvalues, spectral_norm, symmetrize};
use crate::lq_system::{CostMatrices, NoiseModel, SystemDynamics};

/// Negative eigenvalues smaller than this in magnitude are rounding noise.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// `P_1 .. P_{H+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueMatrices(Vec<DMatrix<f64>>);

impl ValueMatrices {
    pub fn horizon(&self) -> usize {
        self.0.len() - 1
    }

    /// `P_h` for `1 ≤ h ≤ H+1`.
    pub fn get(&self, h: usize) -> Result<&DMatrix<f64>> {
        if h == 0 || h > self.0.len() {
            return Err(Error::StepOutOfRange {
                index: h,
                max: self.0.len(),
            });
        }
        Ok(&self.0[h - 1])
    }

    pub fn iter(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.0.iter()
    }

    /// `J*_h(Θ, x) = xᵀP_h x + Σ_{h'=h..H} E[wᵀ P_{h'+1} w]`.
    pub fn cost_to_go(&self, noise: &NoiseModel, x: &DVector<f64>, h: usize) -> Result<f64> {
        let p = self.get(h)?;
        check_state(x, p.nrows())?;
        let noise_term: f64 = self.0[h..]
            .iter()
            .map(|p| noise.expected_quadratic(p))
            .sum();
        Ok(x.dot(&(p * x)) + noise_term)
    }
}

/// `K_1 .. K_H`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule(Vec<DMatrix<f64>>);

impl GainSchedule {
    pub fn new(gains: Vec<DMatrix<f64>>) -> Self {
        Self(gains)
    }

    /// `H` zero gains of shape `d×n`.
    pub fn zeros(horizon: usize, n: usize, d: usize) -> Self {
        Self(vec![DMatrix::zeros(d, n); horizon])
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }

    /// `K_h` for `1 ≤ h ≤ H`.
    pub fn get(&self, h: usize) -> Result<&DMatrix<f64>> {
        if h == 0 || h > self.0.len() {
            return Err(Error::StepOutOfRange {
                index: h,
                max: self.0.len(),
            });
        }
        Ok(&self.0[h - 1])
    }

    pub fn iter(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.0.iter()
    }

    /// `max_h ‖K_h‖` in spectral norm.
    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(spectral_norm).fold(0.0, f64::max)
    }
}

/// Backward Riccati recursion.
///
/// `K_h = −(R + BᵀP_{h+1}B)⁻¹ BᵀP_{h+1}A` and
/// `P_h = Q + AᵀP_{h+1}A + (BᵀP_{h+1}A)ᵀ K_h`, symmetrized every step.
pub fn riccati_backward(
    dynamics: &SystemDynamics,
    costs: &CostMatrices,
    horizon: usize,
) -> Result<(ValueMatrices, GainSchedule)> {
    check_costs(dynamics, costs)?;
    let (n, d) = (dynamics.state_dim(), dynamics.control_dim());
    let (a, b) = (dynamics.a(), dynamics.b());
    let bt = b.transpose();

    let mut values = vec![DMatrix::zeros(n, n); horizon + 1];
    let mut gains = vec![DMatrix::zeros(d, n); horizon];

    for h in (0..horizon).rev() {
        let next = &values[h + 1];
        let bt_p = &bt * next;
        let s = costs.r() + &bt_p * b;
        let g = &bt_p * a;
        let chol = s.cholesky().ok_or(Error::NotPositiveDefinite("R + BᵀPB"))?;
        let k = -chol.solve(&g);

        let mut p = costs.q() + a.transpose() * next * a + g.transpose() * &k;
        symmetrize(&mut p);
        // P_h ⪰ Q ≻ 0 in exact arithmetic; only fall back to an eigenvalue
        // clamp when Cholesky disagrees.
        if p.clone().cholesky().is_none() {
            let min = clamp_eigenvalues(&mut p, 0.0);
            debug_assert!(
                min >= -PSD_TOLERANCE * (1.0 + p.amax()),
                "P_h min eigenvalue {min}"
            );
        }
        values[h] = p;
        gains[h] = k;
    }
    Ok((ValueMatrices(values), GainSchedule(gains)))
}

/// Optimal expected cost-to-go `J*_h(Θ, x)` over a horizon of `horizon` steps.
pub fn optimal_cost(
    dynamics: &SystemDynamics,
    costs: &CostMatrices,
    noise: &NoiseModel,
    x: &DVector<f64>,
    h: usize,
    horizon: usize,
) -> Result<f64> {
    if h == 0 || h > horizon + 1 {
        return Err(Error::StepOutOfRange {
            index: h,
            max: horizon + 1,
        });
    }
    let (values, _) = riccati_backward(dynamics, costs, horizon)?;
    values.cost_to_go(noise, x, h)
}

/// Exact expected cost-to-go of the linear policy `u_h = K_h x_h` from step `h`.
///
/// Uses `M_{H+1} = 0`, `M_h = Q + K_hᵀRK_h + (A+BK_h)ᵀ M_{h+1} (A+BK_h)`.
pub fn linear_policy_cost(
    dynamics: &SystemDynamics,
    costs: &CostMatrices,
    noise: &NoiseModel,
    gains: &GainSchedule,
    x: &DVector<f64>,
    h: usize,
) -> Result<f64> {
    check_costs(dynamics, costs)?;
    let horizon = gains.horizon();
    if h == 0 || h > horizon + 1 {
        return Err(Error::StepOutOfRange {
            index: h,
            max: horizon + 1,
        });
    }
    let n = dynamics.state_dim();
    check_state(x, n)?;
    let (a, b) = (dynamics.a(), dynamics.b());

    let mut m = DMatrix::zeros(n, n);
    let mut noise_term = 0.0;
    for k in gains.0[h - 1..].iter().rev() {
        if k.shape() != (dynamics.control_dim(), n) {
            return Err(Error::Dimension(format!(
                "gain is {}x{}, expected {}x{n}",
                k.nrows(),
                k.ncols(),
                dynamics.control_dim()
            )));
        }
        // E[wᵀ M_{h'+1} w] for the step whose M_{h'} we are about to build.
        noise_term += noise.expected_quadratic(&m);
        let closed = a + b * k;
        let mut next =
            costs.q() + k.transpose() * costs.r() * k + closed.transpose() * &m * &closed;
        symmetrize(&mut next);
        m = next;
    }
    Ok(x.dot(&(&m * x)) + noise_term)
}

fn check_costs(dynamics: &SystemDynamics, costs: &CostMatrices) -> Result<()> {
    if costs.q().nrows() != dynamics.state_dim() || costs.r().nrows() != dynamics.control_dim() {
        return Err(Error::Dimension(format!(
            "Q is {0}x{0} and R is {1}x{1} for n={2} d={3}",
            costs.q().nrows(),
            costs.r().nrows(),
            dynamics.state_dim(),
            dynamics.control_dim()
        )));
    }
    Ok(())
}

fn check_state(x: &DVector<f64>, n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::Dimension(format!(
            "state has length {}, expected {n}",
            x.len()
        )));
    }
    Ok(())
}
