//! Numerical laboratory for stochastic wave-function reduction.
//!
//! The model: probabilities of macroscopic measurement channels perform a
//! drift-free Brownian motion on the probability simplex with covariance
//! `A_jk = -p_j p_k / tau_red` (off-diagonal), absorbing at the vertices.
//! Absorption frequencies then reproduce the Born rule, and the exit time
//! is of the order of `tau_red`, which in turn is fixed by phonon physics
//! in the pointer material.
//!
//! Subsystems:
//! - [`simplex`]: channel distributions and the covariance-exact sampling step.
//! - [`reduction`]: Monte Carlo trajectory ensembles, exit statistics, rate
//!   schedules for the proximity stage, decoherence prelude.
//! - [`fokker_planck`]: deterministic two-channel Fokker-Planck solver with
//!   absorbing boundaries, the independent oracle for the Monte Carlo engine.
//! - [`material`]: closed-form phonon/overlap calculators and the reduction
//!   rate `1/tau_red` from material parameters.
//! - [`epr`]: two-apparatus measurement of an entangled spin pair.
//! - [`factorization`]: variational separable approximation of gridded wave
//!   functions (best rank-k products, stepwise three-variable splitting).
//! - [`selfcheck`]: the acceptance suite, runnable in-process.

pub mod epr;
pub mod factorization;
pub mod fokker_planck;
pub mod linalg;
pub mod material;
pub mod reduction;
pub mod rng;
pub mod selfcheck;
pub mod simplex;
pub mod stats;

pub use simplex::{build_covariance, sample_step, ChannelDistribution, CovarianceSpec};
