//! Episodic linear-quadratic environment: `x' = A x + B u + w`, stage cost
//! `xᵀQx + uᵀRu`, bounded isotropic noise, and a seeded instance sampler.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, stream_rng};

const BUDGET_TOLERANCE: f64 = 1e-12;

/// Upper limits on config sizes; the simulator is meant for desk-scale problems.
pub const MAX_DIM: usize = 32;
pub const MAX_HORIZON: usize = 10_000;
pub const MAX_EPISODES: usize = 1 << 22;

/// Problem description shared by the instance sampler and the harness.
///
/// Field names on the wire are `n, d, H, K, gamma, c_a, c_b, c_w, c_cost, seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub n: usize,
    pub d: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "K")]
    pub episodes: usize,
    pub gamma: f64,
    pub c_a: f64,
    pub c_b: f64,
    pub c_w: f64,
    pub c_cost: f64,
    pub seed: u64,
}

impl InstanceConfig {
    pub fn validate(&self) -> Result<()> {
        self.validate_at("")
    }

    /// Validates with every field name prefixed by `prefix` in error reports.
    pub fn validate_at(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}{name}");
        let check_count = |name: &str, v: usize, max: usize| {
            if v == 0 || v > max {
                Err(Error::config(
                    field(name),
                    format!("must be in 1..={max}, got {v}"),
                ))
            } else {
                Ok(())
            }
        };
        check_count("n", self.n, MAX_DIM)?;
        check_count("d", self.d, MAX_DIM)?;
        check_count("H", self.horizon, MAX_HORIZON)?;
        check_count("K", self.episodes, MAX_EPISODES)?;

        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::config(field("gamma"), "must be finite and > 0"));
        }
        for (name, v) in [("c_a", self.c_a), ("c_b", self.c_b)] {
            if !(v.is_finite() && (0.0..1.0).contains(&v)) {
                return Err(Error::config(
                    field(name),
                    format!("must lie in [0, 1), got {v}"),
                ));
            }
        }
        if !(self.c_w.is_finite() && self.c_w > 0.0 && self.c_w < 1.0) {
            return Err(Error::config(
                field("c_w"),
                format!("must lie in (0, 1), got {}", self.c_w),
            ));
        }
        if !(self.c_cost.is_finite() && self.c_cost > 0.0) {
            return Err(Error::config(field("c_cost"), "must be finite and > 0"));
        }
        let budget = self.c_a + self.gamma * self.c_b + self.c_w;
        if budget > 1.0 + BUDGET_TOLERANCE {
            return Err(Error::config(
                field("gamma"),
                format!("c_a + gamma * c_b + c_w = {budget} exceeds 1"),
            ));
        }
        Ok(())
    }
}

/// True dynamics `Θ = [A, B]ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemDynamics {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl SystemDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || b.ncols() == 0 || n == 0 {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b })
    }

    /// Splits an `(n+d)×n` parameter matrix back into `A` and `B`.
    pub fn from_theta(theta: &DMatrix<f64>, n: usize) -> Result<Self> {
        if theta.ncols() != n || theta.nrows() <= n {
            return Err(Error::Dimension(format!(
                "theta is {}x{}, expected (n+d)x{n}",
                theta.nrows(),
                theta.ncols()
            )));
        }
        let d = theta.nrows() - n;
        let a = theta.rows(0, n).transpose();
        let b = theta.rows(n, d).transpose();
        Ok(Self { a, b })
    }

    pub fn theta(&self) -> DMatrix<f64> {
        let (n, d) = (self.state_dim(), self.control_dim());
        let mut theta = DMatrix::zeros(n + d, n);
        theta.rows_mut(0, n).copy_from(&self.a.transpose());
        theta.rows_mut(n, d).copy_from(&self.b.transpose());
        theta
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn frobenius_norm(&self) -> f64 {
        (self.a.norm_squared() + self.b.norm_squared()).sqrt()
    }

    pub fn transition(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
}

/// Stage-cost weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrices {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl CostMatrices {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        for (name, m) in [("Q", &q), ("R", &r)] {
            if !m.is_square() || m.nrows() == 0 {
                return Err(Error::Dimension(format!("{name} must be square")));
            }
            if (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
                return Err(Error::NotPositiveDefinite("cost matrix is not symmetric"));
            }
            if m.clone().cholesky().is_none() {
                return Err(Error::NotPositiveDefinite("cost matrix"));
            }
        }
        Ok(Self { q, r })
    }

    /// `Q = scale·I_n`, `R = scale·I_d`.
    pub fn scaled_identity(n: usize, d: usize, scale: f64) -> Result<Self> {
        Self::new(
            DMatrix::identity(n, n) * scale,
            DMatrix::identity(d, d) * scale,
        )
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let cost = x.dot(&(&self.q * x)) + u.dot(&(&self.r * u));
        cost.max(0.0)
    }
}

/// `w = c_w · s` with `s` uniform on the unit sphere of `R^n`.
///
/// Zero mean, `‖w‖ = c_w` surely, covariance `(c_w²/n)·I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    dim: usize,
    radius: f64,
}

impl NoiseModel {
    pub fn new(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("noise dimension must be positive".into()));
        }
        if !(radius.is_finite() && (0.0..1.0).contains(&radius)) {
            return Err(Error::config(
                "c_w",
                format!("noise radius {radius} outside [0, 1)"),
            ));
        }
        Ok(Self { dim, radius })
    }

    /// Deterministic dynamics; `draw` always returns zero.
    pub fn disabled(dim: usize) -> Self {
        Self { dim, radius: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Per-coordinate variance `c_w²/n`.
    pub fn variance(&self) -> f64 {
        self.radius * self.radius / self.dim as f64
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * self.variance()
    }

    /// `E[wᵀ P w] = trace(P Σ_w)`.
    pub fn expected_quadratic(&self, p: &DMatrix<f64>) -> f64 {
        p.trace() * self.variance()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        // Always consumes exactly `dim` normals so that streams stay aligned
        // across runs that differ only in policy.
        let mut g = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        if self.radius == 0.0 {
            g.fill(0.0);
            return g;
        }
        let norm = g.norm();
        if norm == 0.0 {
            g[0] = self.radius;
            return g;
        }
        g * (self.radius / norm)
    }
}

/// Dynamics plus costs plus noise.
#[derive(Debug, Clone, PartialEq)]
pub struct LqSystem {
    pub dynamics: SystemDynamics,
    pub costs: CostMatrices,
    pub noise: NoiseModel,
}

impl LqSystem {
    pub fn new(dynamics: SystemDynamics, costs: CostMatrices, noise: NoiseModel) -> Result<Self> {
        let (n, d) = (dynamics.state_dim(), dynamics.control_dim());
        if costs.q().nrows() != n || costs.r().nrows() != d || noise.dim() != n {
            return Err(Error::Dimension(format!(
                "system n={n} d={d}, Q {}x{}, R {}x{}, noise dim {}",
                costs.q().nrows(),
                costs.q().ncols(),
                costs.r().nrows(),
                costs.r().ncols(),
                noise.dim()
            )));
        }
        Ok(Self {
            dynamics,
            costs,
            noise,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }

    /// One transition. Returns `(x_next, c)` where `c` is the cost at `(x, u)`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        rng: &mut R,
    ) -> Result<(DVector<f64>, f64)> {
        if x.len() != self.state_dim() || u.len() != self.control_dim() {
            return Err(Error::Dimension(format!(
                "step got x of length {} and u of length {} for n={} d={}",
                x.len(),
                u.len(),
                self.state_dim(),
                self.control_dim()
            )));
        }
        let w = self.noise.draw(rng);
        let next = self.dynamics.transition(x, u) + w;
        Ok((next, self.costs.stage_cost(x, u)))
    }
}

/// A sampled problem: system plus the start state used for every episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub system: LqSystem,
    pub initial_state: DVector<f64>,
}

/// Draws an admissible instance for `cfg`. Deterministic in `cfg.seed`.
///
/// `A` and `B` get i.i.d. Gaussian entries, are rescaled to spectral norms
/// `c_a` and `c_b`, and finally `Θ` is shrunk to unit Frobenius norm if it
/// exceeds it. The last step can leave `‖A‖ < c_a`.
pub fn sample_instance(cfg: &InstanceConfig) -> Result<Instance> {
    cfg.validate()?;
    let (n, d) = (cfg.n, cfg.d);
    let mut rng = stream_rng(cfg.seed, 0);

    let mut draw = |rows: usize, cols: usize, target: f64| {
        let m = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = spectral_norm(&m);
        if norm > 0.0 {
            m * (target / norm)
        } else {
            m
        }
    };
    let a = draw(n, n, cfg.c_a);
    let b = draw(n, d, cfg.c_b);

    let fro = (a.norm_squared() + b.norm_squared()).sqrt();
    let shrink = if fro > 1.0 { 1.0 / fro } else { 1.0 };
    let dynamics = SystemDynamics::new(a * shrink, b * shrink)?;

    let costs = CostMatrices::scaled_identity(n, d, cfg.c_cost)?;
    let noise = NoiseModel::new(n, cfg.c_w)?;
    let system = LqSystem::new(dynamics, costs, noise)?;

    Ok(Instance {
        system,
        initial_state: unit_vector(n, &mut stream_rng(cfg.seed, 1)),
    })
}

/// Uniform point on the unit sphere of `R^n`.
pub fn unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 1e-12 {
            return g / norm;
        }
    }
}

/// One step of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: DVector<f64>,
    pub control: DVector<f64>,
    pub cost: f64,
    pub next_state: DVector<f64>,
}

impl Transition {
    /// `z = [xᵀ, uᵀ]ᵀ`.
    pub fn z(&self) -> DVector<f64> {
        let n = self.state.len();
        let mut z = DVector::zeros(n + self.control.len());
        z.rows_mut(0, n).copy_from(&self.state);
        z.rows_mut(n, self.control.len()).copy_from(&self.control);
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrajectory {
    /// 1-based episode index.
    pub episode: usize,
    pub transitions: Vec<Transition>,
}

impl EpisodeTrajectory {
    /// `Σ_h z_h z_hᵀ`, the episode's contribution to `ZᵀZ`.
    pub fn gram_sum(&self) -> DMatrix<f64> {
        let p = self.z_dim();
        let mut acc = DMatrix::zeros(p, p);
        for t in &self.transitions {
            let z = t.z();
            acc.ger(1.0, &z, &z, 1.0);
        }
        acc
    }

    /// `Σ_h z_h x_{h+1}ᵀ`, the episode's contribution to `ZᵀX_next`.
    pub fn cross_sum(&self) -> DMatrix<f64> {
        let n = self.transitions.first().map_or(0, |t| t.state.len());
        let mut acc = DMatrix::zeros(self.z_dim(), n);
        for t in &self.transitions {
            acc.ger(1.0, &t.z(), &t.next_state, 1.0);
        }
        acc
    }

    pub fn total_cost(&self) -> f64 {
        self.transitions.iter().map(|t| t.cost).sum()
    }

    fn z_dim(&self) -> usize {
        self.transitions
            .first()
            .map_or(0, |t| t.state.len() + t.control.len())
    }
}
