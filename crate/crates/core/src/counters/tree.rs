//! Binary counting mechanism over a stream of matrices.
//!
//! Episode `t` closes the dyadic node at level `trailing_zeros(t)`, covering
//! `[t − 2^level + 1, t]`. The node absorbs the nodes below it, which are then
//! dropped, so at most one node per level is held and the prefix `[1, t]` is
//! the sum of the held nodes (one per set bit of `t`).

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A dyadic partial sum with its Gaussian perturbation, drawn once.
#[derive(Debug, Clone, PartialEq)]
pub struct PSumNode {
    pub first: usize,
    pub last: usize,
    exact: DMatrix<f64>,
    noise: DMatrix<f64>,
}

impl PSumNode {
    pub fn exact(&self) -> &DMatrix<f64> {
        &self.exact
    }

    pub fn noise(&self) -> &DMatrix<f64> {
        &self.noise
    }

    pub fn noisy(&self) -> DMatrix<f64> {
        &self.exact + &self.noise
    }
}

/// Streaming counter for matrix-valued episodes with capacity `K`.
#[derive(Debug, Clone)]
pub struct TreeCounter {
    capacity: usize,
    rows: usize,
    cols: usize,
    symmetric: bool,
    sigma: f64,
    fed: usize,
    levels: Vec<Option<PSumNode>>,
    nodes_created: usize,
    queries: usize,
    rng: ChaCha8Rng,
}

impl TreeCounter {
    /// `symmetric` ties entry `(q,p)` to `(p,q)` so noisy sums stay symmetric;
    /// it requires a square shape.
    pub fn new(
        capacity: usize,
        shape: (usize, usize),
        symmetric: bool,
        sigma: f64,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let (rows, cols) = shape;
        if capacity == 0 || rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "counter needs positive capacity and shape, got {capacity} and {rows}x{cols}"
            )));
        }
        if symmetric && rows != cols {
            return Err(Error::Dimension(format!(
                "symmetric counter needs a square shape, got {rows}x{cols}"
            )));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Privacy(format!(
                "noise scale must be finite and >= 0, got {sigma}"
            )));
        }
        let depth = usize::BITS - capacity.leading_zeros();
        Ok(Self {
            capacity,
            rows,
            cols,
            symmetric,
            sigma,
            fed: 0,
            levels: vec![None; depth as usize],
            nodes_created: 0,
            queries: 0,
            rng,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn fed(&self) -> usize {
        self.fed
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nodes_created(&self) -> usize {
        self.nodes_created
    }

    pub fn nodes_held(&self) -> usize {
        self.levels.iter().flatten().count()
    }

    /// Number of `query` calls served so far.
    pub fn queries(&self) -> usize {
        self.queries
    }

    /// Ranges `[first, last]` of the nodes currently covering `[1, fed]`,
    /// largest first.
    pub fn cover(&self) -> Vec<(usize, usize)> {
        self.levels
            .iter()
            .rev()
            .flatten()
            .map(|node| (node.first, node.last))
            .collect()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &PSumNode> {
        self.levels.iter().rev().flatten()
    }

    /// Adds one episode's matrix to the stream.
    pub fn feed(&mut self, value: &DMatrix<f64>) -> Result<()> {
        if self.fed == self.capacity {
            return Err(Error::CounterOverflow {
                capacity: self.capacity,
            });
        }
        if value.shape() != (self.rows, self.cols) {
            return Err(Error::Dimension(format!(
                "counter expects {}x{}, got {}x{}",
                self.rows,
                self.cols,
                value.nrows(),
                value.ncols()
            )));
        }
        let t = self.fed + 1;
        let level = t.trailing_zeros() as usize;

        let mut exact = DMatrix::zeros(self.rows, self.cols);
        for slot in self.levels[..level].iter_mut().rev() {
            let child = slot
                .take()
                .expect("lower levels are occupied when closing a node");
            exact += child.exact;
        }
        exact += value;

        let noise = self.draw_noise();
        self.levels[level] = Some(PSumNode {
            first: t + 1 - (1 << level),
            last: t,
            exact,
            noise,
        });
        self.nodes_created += 1;
        self.fed = t;
        Ok(())
    }

    /// Noisy prefix sum over episodes `[1, k−1]`, released at the start of
    /// episode `k`. Requires exactly `k−1` episodes fed.
    pub fn query(&mut self, k: usize) -> Result<DMatrix<f64>> {
        if k == 0 || k - 1 != self.fed {
            return Err(Error::CounterQuery {
                requested: k,
                fed: self.fed,
            });
        }
        self.queries += 1;
        let mut acc = DMatrix::zeros(self.rows, self.cols);
        for node in self.nodes() {
            acc += &node.exact;
            acc += &node.noise;
        }
        Ok(acc)
    }

    fn draw_noise(&mut self) -> DMatrix<f64> {
        let mut noise = DMatrix::zeros(self.rows, self.cols);
        if self.sigma == 0.0 {
            return noise;
        }
        if self.symmetric {
            for p in 0..self.rows {
                for q in p..self.cols {
                    let z: f64 = self.rng.sample(StandardNormal);
                    noise[(p, q)] = self.sigma * z;
                    noise[(q, p)] = self.sigma * z;
                }
            }
        } else {
            for v in noise.iter_mut() {
                let z: f64 = self.rng.sample(StandardNormal);
                *v = self.sigma * z;
            }
        }
        noise
    }
}
