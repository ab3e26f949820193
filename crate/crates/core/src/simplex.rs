//! Channel probability distributions and their fluctuation covariance.
//!
//! A measurement with `n` macroscopic outcomes is described by a point on
//! the probability simplex. Fluctuations are drift-free with covariance
//! (per unit `t/tau_red`)
//!
//! ```text
//! A_jk = -p_j p_k        (j != k)
//! A_jj =  p_j (1 - p_j)
//! ```
//!
//! i.e. `A = diag(p) - p p^T`. The sampling step here is an exact square
//! root of that covariance, so no per-step matrix factorization is needed,
//! and it conserves total probability identically.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Channels below this mass are zeroed and permanently absorbed. Euler
/// steps can overshoot slightly below zero; absorption must be permanent.
pub const CLAMP_THRESHOLD: f64 = 1e-12;

/// Tolerance on `sum(probs) == 1` for validated inputs.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SimplexError {
    #[error("need at least 2 channels, got {0}")]
    TooFewChannels(usize),
    #[error("probabilities must be finite and in [0,1]; channel {index} is {value}")]
    InvalidProbability { index: usize, value: f64 },
    #[error("probabilities sum to {0}, expected 1 within {SUM_TOLERANCE:e}")]
    NotNormalized(f64),
    #[error("noise vector has length {got}, expected {expected}")]
    NoiseLength { got: usize, expected: usize },
    #[error("noise must be finite")]
    NonFiniteNoise,
    #[error("step size dt/tau must be positive and finite, got {0}")]
    InvalidStep(f64),
}

/// A point on the probability simplex with permanent-loss bookkeeping.
///
/// Invariants maintained by every public operation: the probabilities sum
/// to 1 within [`SUM_TOLERANCE`], dead channels hold exactly zero, and a
/// dead channel never regains mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDistribution {
    probs: Vec<f64>,
    dead: Vec<bool>,
}

impl ChannelDistribution {
    /// Validates and adopts a probability vector. Channels at or below the
    /// clamp threshold start out dead.
    pub fn new(probs: Vec<f64>) -> Result<Self, SimplexError> {
        if probs.len() < 2 {
            return Err(SimplexError::TooFewChannels(probs.len()));
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0 + SUM_TOLERANCE).contains(&value) {
                return Err(SimplexError::InvalidProbability { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(SimplexError::NotNormalized(sum));
        }
        let mut dist = Self { dead: vec![false; probs.len()], probs };
        dist.clamp_and_renormalize();
        Ok(dist)
    }

    /// Uniform distribution over `n` channels.
    pub fn uniform(n: usize) -> Result<Self, SimplexError> {
        Self::new(vec![1.0 / n as f64; n.max(1)])
    }

    /// Vertex distribution: all mass on `winner`.
    pub fn vertex(n: usize, winner: usize) -> Result<Self, SimplexError> {
        let mut probs = vec![0.0; n];
        probs[winner] = 1.0;
        Self::new(probs)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dead(&self) -> &[bool] {
        &self.dead
    }

    /// Index of the sole surviving channel if one holds at least
    /// `1 - threshold` of the mass.
    pub fn absorbed_channel(&self, threshold: f64) -> Option<usize> {
        self.probs.iter().position(|&p| p >= 1.0 - threshold)
    }

    /// Snaps the distribution to the vertex of `winner`: that channel gets
    /// exactly 1, every other channel dies.
    pub fn snap_to_vertex(&mut self, winner: usize) {
        for (j, p) in self.probs.iter_mut().enumerate() {
            if j == winner {
                *p = 1.0;
            } else {
                *p = 0.0;
                self.dead[j] = true;
            }
        }
    }

    /// One diffusion step of size `dt_over_tau = dt / tau_red`, in place.
    ///
    /// The update is `dp_j = sqrt(dt_over_tau) * (sqrt(p_j) eta_j - p_j * S)`
    /// with `S = sum_k sqrt(p_k) eta_k`, which has exactly the covariance
    /// `A * dt_over_tau` and conserves `sum(p)` identically. Channels pushed
    /// below the clamp threshold are zeroed and die; survivors are
    /// renormalized proportionally.
    pub fn step_in_place(&mut self, dt_over_tau: f64, noise: &[f64]) -> Result<(), SimplexError> {
        if !(dt_over_tau > 0.0) || !dt_over_tau.is_finite() {
            return Err(SimplexError::InvalidStep(dt_over_tau));
        }
        if noise.len() != self.probs.len() {
            return Err(SimplexError::NoiseLength { got: noise.len(), expected: self.probs.len() });
        }
        if noise.iter().any(|x| !x.is_finite()) {
            return Err(SimplexError::NonFiniteNoise);
        }
        let sqrt_dt = dt_over_tau.sqrt();
        let weighted_sum: f64 = self
            .probs
            .iter()
            .zip(noise)
            .map(|(&p, &eta)| p.sqrt() * eta)
            .sum();
        for (j, p) in self.probs.iter_mut().enumerate() {
            if self.dead[j] {
                continue;
            }
            let delta = sqrt_dt * (p.sqrt() * noise[j] - *p * weighted_sum);
            *p += delta;
        }
        self.clamp_and_renormalize();
        Ok(())
    }

    /// Kills channel `j`: zeroes it and renormalizes the survivors.
    pub fn kill_channel(&mut self, j: usize) {
        self.probs[j] = 0.0;
        self.dead[j] = true;
        self.clamp_and_renormalize();
    }

    /// Rescales channel `j` by `factor` (>= 0). Used when a coarser process
    /// updates a marginal and the joint entries follow proportionally.
    /// Callers must renormalize once all rescalings of a step are applied.
    pub(crate) fn scale_channel_raw(&mut self, j: usize, factor: f64) {
        if !self.dead[j] {
            self.probs[j] *= factor;
        }
    }

    pub(crate) fn clamp_and_renormalize(&mut self) {
        let mut total = 0.0;
        let mut largest = (0usize, f64::NEG_INFINITY);
        for (j, (p, d)) in self.probs.iter_mut().zip(self.dead.iter_mut()).enumerate() {
            if !*d && *p > largest.1 {
                largest = (j, *p);
            }
            if *d || *p < CLAMP_THRESHOLD {
                *p = 0.0;
                *d = true;
            } else {
                total += *p;
            }
        }
        if total > 0.0 {
            for p in &mut self.probs {
                *p /= total;
            }
        } else {
            // All channels clamped at once cannot happen for a state that
            // summed to 1 before the step; keep the invariant regardless.
            self.probs[largest.0] = 1.0;
            self.dead[largest.0] = false;
        }
    }
}

/// Fluctuation covariance `A * tau_red`, stored dimensionless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    /// Row-major symmetric matrix, `n x n`.
    pub matrix: Vec<Vec<f64>>,
}

impl CovarianceSpec {
    /// Largest absolute row sum. Total probability conservation requires
    /// every row of `A` to sum to zero.
    pub fn max_row_sum(&self) -> f64 {
        self.matrix
            .iter()
            .map(|row| row.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

/// Covariance of one unit of `t/tau_red` at the point `p`:
/// `A = diag(p) - p p^T`. Dead channels give all-zero rows and columns.
pub fn build_covariance(p: &ChannelDistribution) -> CovarianceSpec {
    let probs = p.probs();
    let n = probs.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            matrix[j][k] = if j == k {
                probs[j] * (1.0 - probs[j])
            } else {
                -probs[j] * probs[k]
            };
        }
    }
    CovarianceSpec { matrix }
}

/// One diffusion step, returning a new distribution. See
/// [`ChannelDistribution::step_in_place`] for the construction.
pub fn sample_step(
    p: &ChannelDistribution,
    dt_over_tau: f64,
    noise: &[f64],
) -> Result<ChannelDistribution, SimplexError> {
    let mut next = p.clone();
    next.step_in_place(dt_over_tau, noise)?;
    Ok(next)
}
