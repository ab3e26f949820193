//! Two-apparatus measurement of an entangled spin pair.
//!
//! The pair starts in `a |+ ->  + b |- +>` (z basis) and both spins are
//! measured along a common axis z' tilted by `theta`. The four outcome
//! channels `(alpha, beta)` then carry amplitudes `c_ab` fixed by the
//! half-angle rotation, and two independent local reduction processes run:
//! each apparatus diffuses its own outcome marginal and the joint
//! distribution follows proportionally, preserving the other apparatus's
//! conditional structure. The fluctuations of the two apparatuses add in
//! the joint covariance, the joint probabilities stay a martingale, and
//! absorption frequencies reproduce `|c_ab|^2` no matter how the two
//! measurement schedules interleave.
//!
//! Channel order everywhere, including file output: `++, +-, -+, --`.

use crate::rng::trajectory_rng;
use crate::simplex::{ChannelDistribution, SimplexError};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHANNEL_LABELS: [&str; 4] = ["++", "+-", "-+", "--"];

/// Runs per aggregation chunk; fixed so worker count cannot reorder merges.
const CHUNK: usize = 1024;

#[derive(Debug, Error)]
pub enum EprError {
    #[error("amplitudes must satisfy |a|^2 + |b|^2 = 1 within 1e-9, got {0}")]
    NotNormalized(f64),
    #[error("schedule parameter {name} must be positive, got {value}")]
    BadSchedule { name: &'static str, value: f64 },
    #[error(transparent)]
    Simplex(#[from] SimplexError),
}

/// Entangled pair expressed in the measurement basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EprState {
    pub a: Complex64,
    pub b: Complex64,
    pub theta: f64,
    /// Amplitudes `c_ab` in channel order `++, +-, -+, --`.
    pub coefficients: [Complex64; 4],
}

/// Rotates the pair state into the z' basis tilted by `theta`:
/// with `c = cos(theta/2)`, `s = sin(theta/2)`,
///
/// ```text
/// c_++ = -(a+b) c s     c_+- = a c^2 - b s^2
/// c_-+ =  b c^2 - a s^2  c_-- = (a+b) c s
/// ```
pub fn rotate_pair(a: Complex64, b: Complex64, theta: f64) -> Result<EprState, EprError> {
    let norm = a.norm_sqr() + b.norm_sqr();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(EprError::NotNormalized(norm));
    }
    let c = (theta / 2.0).cos();
    let s = (theta / 2.0).sin();
    let cs = c * s;
    let coefficients = [
        -(a + b) * cs,
        a * (c * c) - b * (s * s),
        b * (c * c) - a * (s * s),
        (a + b) * cs,
    ];
    Ok(EprState { a, b, theta, coefficients })
}

impl EprState {
    /// Rotated singlet; its coefficients are theta-independent.
    pub fn singlet(theta: f64) -> Self {
        let inv = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        rotate_pair(inv, -inv, theta).expect("singlet is normalized")
    }

    /// Exact spin correlation `E = sum_ab (ab) |c_ab|^2`.
    pub fn exact_correlation(&self) -> f64 {
        let p = self.probabilities();
        p[0] - p[1] - p[2] + p[3]
    }

    fn probabilities(&self) -> [f64; 4] {
        let mut p = [0.0; 4];
        for (out, c) in p.iter_mut().zip(&self.coefficients) {
            *out = c.norm_sqr();
        }
        let sum: f64 = p.iter().sum();
        for v in &mut p {
            *v /= sum;
        }
        p
    }
}

/// Joint outcome probabilities `p_ab = |c_ab|^2` as a 4-channel
/// distribution in the fixed channel order.
pub fn joint_probabilities(state: &EprState) -> ChannelDistribution {
    ChannelDistribution::new(state.probabilities().to_vec())
        .expect("squared moduli of a normalized state form a distribution")
}

fn alpha_of_channel(ch: usize) -> usize {
    ch / 2
}

fn beta_of_channel(ch: usize) -> usize {
    ch % 2
}

/// Applies one apparatus's Wright-Fisher step to the joint distribution
/// through the marginal of `axis` (0 = alpha, 1 = beta): the marginal
/// diffuses with time scale `tau`, the joint entries rescale by the
/// marginal ratio, and a marginal that dies kills its joint channels.
fn marginal_step(
    p: &mut ChannelDistribution,
    axis: usize,
    dt_over_tau: f64,
    noise: &[f64; 2],
) -> Result<(), SimplexError> {
    let of = if axis == 0 { alpha_of_channel } else { beta_of_channel };
    let mut q = [0.0f64; 2];
    let mut alive = [false; 2];
    for ch in 0..4 {
        q[of(ch)] += p.probs()[ch];
        alive[of(ch)] |= !p.dead()[ch];
    }
    let marginal = ChannelDistribution::new(q.to_vec())?;
    let next = crate::simplex::sample_step(&marginal, dt_over_tau, noise)?;
    for side in 0..2 {
        if !alive[side] || q[side] <= 0.0 {
            continue;
        }
        if next.dead()[side] {
            for ch in 0..4 {
                if of(ch) == side {
                    p.kill_channel(ch);
                }
            }
        } else {
            let factor = next.probs()[side] / q[side];
            for ch in 0..4 {
                if of(ch) == side {
                    p.scale_channel_raw(ch, factor);
                }
            }
        }
    }
    p.clamp_and_renormalize();
    Ok(())
}

/// One joint step of both apparatuses: apparatus 1 diffuses the alpha
/// marginal (time scale `tau1`), apparatus 2 the beta marginal (`tau2`).
/// An infinite tau disables that apparatus. The noise pairs must be
/// independent standard normal draws.
pub fn two_apparatus_step(
    p: &ChannelDistribution,
    dt: f64,
    tau1: f64,
    tau2: f64,
    noise1: &[f64; 2],
    noise2: &[f64; 2],
) -> Result<ChannelDistribution, EprError> {
    let mut next = p.clone();
    let d1 = dt / tau1;
    let d2 = dt / tau2;
    if d1 > 0.0 {
        marginal_step(&mut next, 0, d1, noise1)?;
    }
    if d2 > 0.0 {
        marginal_step(&mut next, 1, d2, noise2)?;
    }
    Ok(next)
}

/// Interleaving of the two local reduction processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EprMode {
    Simultaneous,
    Sequential,
    Overlapping,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EprSchedule {
    pub mode: EprMode,
    /// Reduction time scale of apparatus 1 (s).
    pub tau_red_1: f64,
    /// Reduction time scale of apparatus 2 (s).
    pub tau_red_2: f64,
    /// Start of apparatus 2 in overlapping mode (s).
    pub start_delay_2: f64,
}

impl EprSchedule {
    pub fn simultaneous(tau1: f64, tau2: f64) -> Self {
        Self { mode: EprMode::Simultaneous, tau_red_1: tau1, tau_red_2: tau2, start_delay_2: 0.0 }
    }

    pub fn sequential(tau1: f64, tau2: f64) -> Self {
        Self { mode: EprMode::Sequential, tau_red_1: tau1, tau_red_2: tau2, start_delay_2: 0.0 }
    }

    pub fn overlapping(tau1: f64, tau2: f64, delay: f64) -> Self {
        Self { mode: EprMode::Overlapping, tau_red_1: tau1, tau_red_2: tau2, start_delay_2: delay }
    }

    pub fn validate(&self) -> Result<(), EprError> {
        for (name, value) in [("tau_red_1", self.tau_red_1), ("tau_red_2", self.tau_red_2)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(EprError::BadSchedule { name, value });
            }
        }
        if !(self.start_delay_2 >= 0.0) || !self.start_delay_2.is_finite() {
            return Err(EprError::BadSchedule { name: "start_delay_2", value: self.start_delay_2 });
        }
        Ok(())
    }

    fn dt(&self) -> f64 {
        0.01 * self.tau_red_1.min(self.tau_red_2)
    }

    fn max_time(&self) -> f64 {
        40.0 * (self.tau_red_1 + self.tau_red_2) + self.start_delay_2
    }
}

/// One measurement record: outcomes are +1/-1, exit times in seconds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EprRun {
    pub outcome_alpha: i8,
    pub outcome_beta: i8,
    pub exit_time_1: f64,
    pub exit_time_2: f64,
}

/// Aggregated joint statistics of an EPR ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EprReport {
    pub n_runs: usize,
    /// Absorption counts in channel order `++, +-, -+, --`.
    pub joint_counts: [u64; 4],
    pub unresolved: usize,
    /// Exact probabilities `|c_ab|^2`.
    pub expected: [f64; 4],
    /// Exact correlation from the coefficients.
    pub expected_correlation: f64,
    /// Per-run records in run order; emitted as CSV, not JSON.
    #[serde(skip)]
    pub runs: Vec<EprRun>,
}

impl EprReport {
    pub fn frequencies(&self) -> [f64; 4] {
        let n = self.n_runs.max(1) as f64;
        let mut f = [0.0; 4];
        for (out, &c) in f.iter_mut().zip(&self.joint_counts) {
            *out = c as f64 / n;
        }
        f
    }

    pub fn marginal_alpha(&self) -> [f64; 2] {
        let f = self.frequencies();
        [f[0] + f[1], f[2] + f[3]]
    }

    pub fn marginal_beta(&self) -> [f64; 2] {
        let f = self.frequencies();
        [f[0] + f[2], f[1] + f[3]]
    }

    /// Empirical spin correlation `E = f++ - f+- - f-+ + f--`.
    pub fn correlation(&self) -> f64 {
        let f = self.frequencies();
        f[0] - f[1] - f[2] + f[3]
    }

    /// Goodness of fit of the joint counts against `|c_ab|^2`.
    pub fn chi_square(&self) -> Option<(f64, usize, f64)> {
        crate::stats::chi_square_gof(&self.joint_counts, &self.expected)
    }

    /// Per-run records as CSV with columns
    /// `run_index,outcome_alpha,outcome_beta,exit_time_1,exit_time_2`.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("run_index,outcome_alpha,outcome_beta,exit_time_1,exit_time_2\n");
        for (k, run) in self.runs.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                k, run.outcome_alpha, run.outcome_beta, run.exit_time_1, run.exit_time_2
            ));
        }
        out
    }
}

struct RunOutcome {
    channel: Option<usize>,
    exit_1: f64,
    exit_2: f64,
}

fn marginal_absorbed(p: &ChannelDistribution, axis: usize, threshold: f64) -> bool {
    let of = if axis == 0 { alpha_of_channel } else { beta_of_channel };
    let mut q = [0.0f64; 2];
    for ch in 0..4 {
        q[of(ch)] += p.probs()[ch];
    }
    q.iter().any(|&v| v >= 1.0 - threshold)
}

fn single_run(
    p0: &ChannelDistribution,
    schedule: &EprSchedule,
    master_seed: u64,
    run_index: u64,
) -> Result<RunOutcome, EprError> {
    const THRESHOLD: f64 = 1e-12;
    let mut rng = trajectory_rng(master_seed, run_index);
    let normal = StandardNormal;
    let dt = schedule.dt();
    let max_time = schedule.max_time();
    let mut p = p0.clone();
    let mut t = 0.0f64;
    let mut step = 0u64;
    let mut exit_1: Option<f64> = None;
    let mut exit_2: Option<f64> = None;
    loop {
        if exit_1.is_none() && marginal_absorbed(&p, 0, THRESHOLD) {
            exit_1 = Some(t);
        }
        if exit_2.is_none() && marginal_absorbed(&p, 1, THRESHOLD) {
            exit_2 = Some(t);
        }
        if let Some(channel) = p.absorbed_channel(THRESHOLD) {
            return Ok(RunOutcome {
                channel: Some(channel),
                exit_1: exit_1.unwrap_or(t),
                exit_2: exit_2.unwrap_or(t),
            });
        }
        if t >= max_time {
            return Ok(RunOutcome { channel: None, exit_1: f64::NAN, exit_2: f64::NAN });
        }
        let active_1 = exit_1.is_none();
        let active_2 = exit_2.is_none()
            && match schedule.mode {
                EprMode::Simultaneous => true,
                EprMode::Sequential => exit_1.is_some(),
                EprMode::Overlapping => t >= schedule.start_delay_2,
            };
        if active_1 {
            let noise = [normal.sample(&mut rng), normal.sample(&mut rng)];
            marginal_step(&mut p, 0, dt / schedule.tau_red_1, &noise)?;
        }
        if active_2 {
            let noise = [normal.sample(&mut rng), normal.sample(&mut rng)];
            marginal_step(&mut p, 1, dt / schedule.tau_red_2, &noise)?;
        }
        step += 1;
        t = step as f64 * dt;
    }
}

/// Runs `n_runs` independent joint reductions. Deterministic for a fixed
/// master seed regardless of worker count.
pub fn run_epr_experiment(
    state: &EprState,
    schedule: &EprSchedule,
    n_runs: usize,
    master_seed: u64,
) -> Result<EprReport, EprError> {
    schedule.validate()?;
    let p0 = joint_probabilities(state);
    let expected = state.probabilities();

    struct Chunk {
        counts: [u64; 4],
        unresolved: usize,
        runs: Vec<EprRun>,
    }

    let n_chunks = n_runs.div_ceil(CHUNK);
    let chunks: Result<Vec<Chunk>, EprError> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK;
            let hi = ((chunk + 1) * CHUNK).min(n_runs);
            let mut acc = Chunk { counts: [0; 4], unresolved: 0, runs: Vec::with_capacity(hi - lo) };
            for index in lo..hi {
                let outcome = single_run(&p0, schedule, master_seed, index as u64)?;
                match outcome.channel {
                    Some(ch) => {
                        acc.counts[ch] += 1;
                        let alpha = if alpha_of_channel(ch) == 0 { 1 } else { -1 };
                        let beta = if beta_of_channel(ch) == 0 { 1 } else { -1 };
                        acc.runs.push(EprRun {
                            outcome_alpha: alpha,
                            outcome_beta: beta,
                            exit_time_1: outcome.exit_1,
                            exit_time_2: outcome.exit_2,
                        });
                    }
                    None => acc.unresolved += 1,
                }
            }
            Ok(acc)
        })
        .collect();
    let chunks = chunks?;

    let mut report = EprReport {
        n_runs,
        joint_counts: [0; 4],
        unresolved: 0,
        expected,
        expected_correlation: state.exact_correlation(),
        runs: Vec::with_capacity(n_runs),
    };
    for chunk in chunks {
        for (total, c) in report.joint_counts.iter_mut().zip(&chunk.counts) {
            *total += c;
        }
        report.unresolved += chunk.unresolved;
        report.runs.extend(chunk.runs);
    }
    Ok(report)
}
