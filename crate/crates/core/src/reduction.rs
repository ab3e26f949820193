//! Monte Carlo engine for the reduction process.
//!
//! Each trajectory performs the drift-free simplex diffusion of
//! [`crate::simplex`] until one channel absorbs all probability or a time
//! cap is reached. The rate `1/tau_red` is either constant or follows the
//! proximity-stage schedule, where the pointer separation grows with the
//! amplified signal and shuts the fluctuations down once it exceeds the
//! overlap scale `xi0`.
//!
//! Determinism contract: every trajectory draws from its own counter-keyed
//! stream, and ensemble aggregation runs over fixed-size chunks merged in
//! index order, so reports are bit-identical for a given master seed no
//! matter how many worker threads run.

use crate::rng::trajectory_rng;
use crate::simplex::{ChannelDistribution, SimplexError};
use crate::stats::{fit_survival_tail, quantile_sorted, TailFit};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Points of the saved time grid for ensemble-mean trajectories.
const SAVE_POINTS: usize = 101;
/// Trajectories per aggregation chunk (fixed so thread count cannot
/// change the merge order).
const CHUNK: usize = 1024;
/// Survival window for the exponential tail fit: the decade `[0.01, 0.1]`.
pub const TAIL_WINDOW: (f64, f64) = (0.01, 0.1);

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("tau_red must be positive, got {0}")]
    BadTau(f64),
    #[error("dt = {dt} violates the stability guard dt <= 0.05 * tau ({tau})")]
    UnstableDt { dt: f64, tau: f64 },
    #[error("max_time must be positive, got {0}")]
    BadMaxTime(f64),
    #[error("rate schedule parameter {name} must be positive, got {value}")]
    BadSchedule { name: &'static str, value: f64 },
    #[error(transparent)]
    Simplex(#[from] SimplexError),
}

/// Time stepping and ensemble-size parameters. Times in seconds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionParams {
    pub tau_red: f64,
    pub dt: f64,
    pub max_time: f64,
    pub n_trajectories: usize,
    pub master_seed: u64,
    /// Exit is declared when one channel holds `>= 1 - absorption_threshold`.
    pub absorption_threshold: f64,
}

impl DiffusionParams {
    /// Defaults: `dt = 0.01 tau_red`, `max_time = 20 tau_red`,
    /// absorption threshold `1e-12`.
    pub fn new(tau_red: f64, n_trajectories: usize, master_seed: u64) -> Self {
        Self {
            tau_red,
            dt: 0.01 * tau_red,
            max_time: 20.0 * tau_red,
            n_trajectories,
            master_seed,
            absorption_threshold: 1e-12,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_max_time(mut self, max_time: f64) -> Self {
        self.max_time = max_time;
        self
    }

    pub fn validate(&self, schedule: &RateSchedule) -> Result<(), ReductionError> {
        if !(self.tau_red > 0.0) || !self.tau_red.is_finite() {
            return Err(ReductionError::BadTau(self.tau_red));
        }
        if !(self.max_time > 0.0) || !self.max_time.is_finite() {
            return Err(ReductionError::BadMaxTime(self.max_time));
        }
        schedule.validate()?;
        // The fastest rate over [0, max_time] bounds the effective step.
        let max_rate = schedule.max_rate(self);
        let tau_min = 1.0 / max_rate;
        if !(self.dt > 0.0) || self.dt > 0.05 * tau_min {
            return Err(ReductionError::UnstableDt { dt: self.dt, tau: tau_min });
        }
        Ok(())
    }
}

/// Time dependence of the reduction rate `1/tau_red(t)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RateSchedule {
    /// `1/tau_red` from [`DiffusionParams::tau_red`].
    Constant,
    /// Proximity stage: the pointer separation `xi(t) = xi_init exp(t/tau_signal)`
    /// grows with the signal, and the rate carries the overlap suppression
    /// `exp(-xi^2/xi0^2)`. All lengths in cm, times in seconds.
    Proximity { xi0: f64, xi_init: f64, tau_signal: f64, tau_red_at_zero: f64 },
}

impl RateSchedule {
    pub fn validate(&self) -> Result<(), ReductionError> {
        match *self {
            RateSchedule::Constant => Ok(()),
            RateSchedule::Proximity { xi0, xi_init, tau_signal, tau_red_at_zero } => {
                let checks = [
                    ("xi0", xi0),
                    ("tau_signal", tau_signal),
                    ("tau_red_at_zero", tau_red_at_zero),
                ];
                for (name, value) in checks {
                    if !(value > 0.0) || !value.is_finite() {
                        return Err(ReductionError::BadSchedule { name, value });
                    }
                }
                if !(xi_init >= 0.0) || !xi_init.is_finite() {
                    return Err(ReductionError::BadSchedule { name: "xi_init", value: xi_init });
                }
                Ok(())
            }
        }
    }

    /// Instantaneous rate `1/tau_red(t)` in 1/s.
    pub fn rate(&self, params: &DiffusionParams, t: f64) -> f64 {
        match *self {
            RateSchedule::Constant => 1.0 / params.tau_red,
            RateSchedule::Proximity { .. } => proximity_rate(self, t),
        }
    }

    /// Largest rate over the run. The proximity rate decays monotonically
    /// (xi grows), so the maximum sits at t = 0.
    fn max_rate(&self, params: &DiffusionParams) -> f64 {
        match *self {
            RateSchedule::Constant => 1.0 / params.tau_red,
            RateSchedule::Proximity { .. } => proximity_rate(self, 0.0),
        }
    }
}

/// Proximity-stage rate `1/tau_red(t) = exp(-xi(t)^2/xi0^2) / tau_red_at_zero`
/// with `xi(t) = xi_init exp(t/tau_signal)`.
///
/// Panics when called on a constant schedule; callers branch on the mode.
pub fn proximity_rate(schedule: &RateSchedule, t: f64) -> f64 {
    match *schedule {
        RateSchedule::Proximity { xi0, xi_init, tau_signal, tau_red_at_zero } => {
            let xi = xi_init * (t / tau_signal).exp();
            let ratio = xi / xi0;
            (-ratio * ratio).exp() / tau_red_at_zero
        }
        RateSchedule::Constant => panic!("proximity_rate requires the proximity mode"),
    }
}

/// Exponential suppression of the off-diagonal density-matrix magnitude by
/// the environment of the reactive region.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecoherenceParams {
    pub t_deco: f64,
    pub initial_offdiag_magnitude: f64,
}

impl DecoherenceParams {
    pub fn new(t_deco: f64, initial_offdiag_magnitude: f64) -> Self {
        assert!(t_deco > 0.0, "t_deco must be positive");
        assert!(
            (0.0..=1.0).contains(&initial_offdiag_magnitude),
            "initial magnitude must lie in [0,1]"
        );
        Self { t_deco, initial_offdiag_magnitude }
    }
}

/// Off-diagonal magnitude after time `t >= 0`:
/// `initial * exp(-t/t_deco)`.
pub fn offdiag_magnitude(params: &DecoherenceParams, t: f64) -> f64 {
    assert!(t >= 0.0, "t must be nonnegative");
    params.initial_offdiag_magnitude * (-t / params.t_deco).exp()
}

/// Outcome of a single trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryResult {
    pub state: ChannelDistribution,
    /// Winning channel and exit time; `None` when `max_time` was reached
    /// before absorption.
    pub exit: Option<(usize, f64)>,
}

/// Single reduction trajectory with its deterministic noise stream.
pub fn run_trajectory(
    p0: &ChannelDistribution,
    params: &DiffusionParams,
    schedule: &RateSchedule,
    trajectory_index: u64,
) -> Result<TrajectoryResult, ReductionError> {
    params.validate(schedule)?;
    let mut rng = trajectory_rng(params.master_seed, trajectory_index);
    simulate(p0, params, schedule, &mut rng, |_, _| {})
}

fn simulate(
    p0: &ChannelDistribution,
    params: &DiffusionParams,
    schedule: &RateSchedule,
    rng: &mut rand_chacha::ChaCha12Rng,
    mut observe: impl FnMut(usize, &ChannelDistribution),
) -> Result<TrajectoryResult, ReductionError> {
    let normal = StandardNormal;
    let mut p = p0.clone();
    let mut noise = vec![0.0f64; p.len()];
    let grid_dt = params.max_time / (SAVE_POINTS - 1) as f64;
    let mut next_grid = 0usize;
    let mut t = 0.0;
    let mut step = 0u64;
    loop {
        while next_grid < SAVE_POINTS && t >= (next_grid as f64) * grid_dt - 1e-9 * params.dt {
            observe(next_grid, &p);
            next_grid += 1;
        }
        if let Some(channel) = p.absorbed_channel(params.absorption_threshold) {
            p.snap_to_vertex(channel);
            while next_grid < SAVE_POINTS {
                observe(next_grid, &p);
                next_grid += 1;
            }
            return Ok(TrajectoryResult { state: p, exit: Some((channel, t)) });
        }
        if t >= params.max_time {
            return Ok(TrajectoryResult { state: p, exit: None });
        }
        let dt_over_tau = params.dt * schedule.rate(params, t);
        if dt_over_tau > 0.0 {
            for x in &mut noise {
                *x = normal.sample(rng);
            }
            p.step_in_place(dt_over_tau, &noise)?;
        }
        step += 1;
        t = step as f64 * params.dt;
    }
}

/// Absorption statistics of an ensemble of independent trajectories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub n_trajectories: usize,
    pub absorption_counts: Vec<u64>,
    /// Exit times of resolved trajectories, in trajectory order (seconds).
    pub exit_times: Vec<f64>,
    /// Winning channel per resolved trajectory, parallel to `exit_times`.
    pub exit_channels: Vec<usize>,
    pub unresolved_count: usize,
    /// Saved time grid (seconds).
    pub time_grid: Vec<f64>,
    /// Ensemble mean of `p_j(t)` on the saved grid, absorbed trajectories
    /// frozen at their vertex; indexed `[channel][grid point]`.
    pub mean_trajectory: Vec<Vec<f64>>,
}

impl EnsembleReport {
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n_trajectories.max(1) as f64;
        self.absorption_counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Cumulative fraction of trajectories absorbed into `channel` by each
    /// time in `times`.
    pub fn absorbed_history(&self, channel: usize, times: &[f64]) -> Vec<f64> {
        let mut channel_times: Vec<f64> = self
            .exit_times
            .iter()
            .zip(&self.exit_channels)
            .filter(|(_, &c)| c == channel)
            .map(|(&t, _)| t)
            .collect();
        channel_times.sort_by(f64::total_cmp);
        let n = self.n_trajectories.max(1) as f64;
        times
            .iter()
            .map(|&t| channel_times.partition_point(|&x| x <= t) as f64 / n)
            .collect()
    }

    /// Survival curve `(t_k, S(t_k))` evaluated just after each exit.
    /// Unresolved trajectories count as survivors throughout.
    pub fn survival_curve(&self) -> (Vec<f64>, Vec<f64>) {
        let mut times = self.exit_times.clone();
        times.sort_by(f64::total_cmp);
        let n = self.n_trajectories as f64;
        let survival: Vec<f64> =
            (0..times.len()).map(|k| 1.0 - (k + 1) as f64 / n).collect();
        (times, survival)
    }

    /// Exponential fit of the survival tail on [`TAIL_WINDOW`].
    pub fn tail_fit(&self) -> Option<TailFit> {
        let (times, survival) = self.survival_curve();
        fit_survival_tail(&times, &survival, TAIL_WINDOW.0, TAIL_WINDOW.1)
    }

    pub fn exit_time_quantiles(&self, qs: &[f64]) -> Vec<f64> {
        let mut times = self.exit_times.clone();
        times.sort_by(f64::total_cmp);
        if times.is_empty() {
            return vec![f64::NAN; qs.len()];
        }
        qs.iter().map(|&q| quantile_sorted(&times, q)).collect()
    }

    pub fn mean_exit_time(&self) -> f64 {
        if self.exit_times.is_empty() {
            return f64::NAN;
        }
        self.exit_times.iter().sum::<f64>() / self.exit_times.len() as f64
    }

    /// Exit times as a single-column CSV body (`exit_time` header).
    pub fn exit_times_csv(&self) -> String {
        let mut out = String::from("exit_time\n");
        for t in &self.exit_times {
            out.push_str(&format!("{t}\n"));
        }
        out
    }
}

struct ChunkAccum {
    counts: Vec<u64>,
    exits: Vec<(f64, usize)>,
    unresolved: usize,
    mean_sum: Vec<f64>,
}

/// Runs `params.n_trajectories` independent trajectories and aggregates
/// them. Bit-identical for a fixed master seed regardless of worker count.
pub fn run_ensemble(
    p0: &ChannelDistribution,
    params: &DiffusionParams,
    schedule: &RateSchedule,
) -> Result<EnsembleReport, ReductionError> {
    params.validate(schedule)?;
    let n = params.n_trajectories;
    let channels = p0.len();
    let grid: Vec<f64> = (0..SAVE_POINTS)
        .map(|k| params.max_time * k as f64 / (SAVE_POINTS - 1) as f64)
        .collect();
    if n == 0 {
        return Ok(EnsembleReport {
            n_trajectories: 0,
            absorption_counts: vec![0; channels],
            exit_times: Vec::new(),
            exit_channels: Vec::new(),
            unresolved_count: 0,
            time_grid: grid,
            mean_trajectory: vec![Vec::new(); channels],
        });
    }

    let n_chunks = n.div_ceil(CHUNK);
    let chunks: Result<Vec<ChunkAccum>, ReductionError> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK;
            let hi = ((chunk + 1) * CHUNK).min(n);
            let mut acc = ChunkAccum {
                counts: vec![0; channels],
                exits: Vec::new(),
                unresolved: 0,
                mean_sum: vec![0.0; channels * SAVE_POINTS],
            };
            for index in lo..hi {
                let mut rng = trajectory_rng(params.master_seed, index as u64);
                let mean_sum = &mut acc.mean_sum;
                let result = simulate(p0, params, schedule, &mut rng, |g, p| {
                    for (j, &pj) in p.probs().iter().enumerate() {
                        mean_sum[j * SAVE_POINTS + g] += pj;
                    }
                })?;
                match result.exit {
                    Some((channel, time)) => {
                        acc.counts[channel] += 1;
                        acc.exits.push((time, channel));
                    }
                    None => acc.unresolved += 1,
                }
            }
            Ok(acc)
        })
        .collect();
    let chunks = chunks?;

    let mut report = EnsembleReport {
        n_trajectories: n,
        absorption_counts: vec![0; channels],
        exit_times: Vec::with_capacity(n),
        exit_channels: Vec::with_capacity(n),
        unresolved_count: 0,
        time_grid: grid,
        mean_trajectory: vec![vec![0.0; SAVE_POINTS]; channels],
    };
    for acc in chunks {
        for (j, &c) in acc.counts.iter().enumerate() {
            report.absorption_counts[j] += c;
        }
        report.unresolved_count += acc.unresolved;
        for (time, channel) in acc.exits {
            report.exit_times.push(time);
            report.exit_channels.push(channel);
        }
        for j in 0..channels {
            for g in 0..SAVE_POINTS {
                report.mean_trajectory[j][g] += acc.mean_sum[j * SAVE_POINTS + g];
            }
        }
    }
    for row in &mut report.mean_trajectory {
        for v in row {
            *v /= n as f64;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> ChannelDistribution {
        ChannelDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn already_reduced_exits_at_zero() {
        let params = DiffusionParams::new(1.0, 1, 1);
        let r = run_trajectory(&dist(&[1.0, 0.0]), &params, &RateSchedule::Constant, 0).unwrap();
        assert_eq!(r.exit, Some((0, 0.0)));
        assert_eq!(r.state.probs(), &[1.0, 0.0]);
    }

    #[test]
    fn empty_ensemble_is_empty_report() {
        let params = DiffusionParams::new(1.0, 0, 1);
        let rep = run_ensemble(&dist(&[0.5, 0.5]), &params, &RateSchedule::Constant).unwrap();
        assert_eq!(rep.n_trajectories, 0);
        assert_eq!(rep.absorption_counts, vec![0, 0]);
        assert!(rep.exit_times.is_empty());
    }

    #[test]
    fn unstable_dt_is_rejected() {
        let params = DiffusionParams::new(1.0, 1, 1).with_dt(0.2);
        let err = run_trajectory(&dist(&[0.5, 0.5]), &params, &RateSchedule::Constant, 0);
        assert!(matches!(err, Err(ReductionError::UnstableDt { .. })));
    }

    #[test]
    fn symmetric_initial_splits_evenly() {
        let params = DiffusionParams::new(1.0, 4000, 7);
        let rep = run_ensemble(&dist(&[0.5, 0.5]), &params, &RateSchedule::Constant).unwrap();
        assert_eq!(rep.unresolved_count + rep.exit_times.len(), 4000);
        let f = rep.frequencies();
        let sigma = (0.25f64 / 4000.0).sqrt();
        assert!((f[0] - 0.5).abs() < 3.0 * sigma, "freq {}", f[0]);
    }

    #[test]
    fn born_rule_on_asymmetric_initial() {
        let params = DiffusionParams::new(1.0, 20_000, 11);
        let rep = run_ensemble(&dist(&[0.3, 0.7]), &params, &RateSchedule::Constant).unwrap();
        let f = rep.frequencies();
        let sigma = (0.3f64 * 0.7 / 20_000.0).sqrt();
        assert!((f[0] - 0.3).abs() < 3.0 * sigma, "freq {} sigma {}", f[0], sigma);
        // counts + unresolved account for every trajectory
        let total: u64 = rep.absorption_counts.iter().sum();
        assert_eq!(total as usize + rep.unresolved_count, 20_000);
    }

    #[test]
    fn martingale_of_mean_trajectory() {
        let params = DiffusionParams::new(1.0, 20_000, 13);
        let rep = run_ensemble(&dist(&[0.3, 0.7]), &params, &RateSchedule::Constant).unwrap();
        // at every saved time the ensemble mean stays at p0 within 4 SE
        for (g, _) in rep.time_grid.iter().enumerate() {
            let m = rep.mean_trajectory[0][g];
            let se = (0.3f64 * 0.7 / 20_000.0).sqrt();
            assert!((m - 0.3).abs() < 4.0 * se, "grid {g}: mean {m}");
        }
    }

    #[test]
    fn exit_tail_is_exponential_and_seed_stable() {
        let fit_for = |seed: u64| {
            let params = DiffusionParams::new(1.0, 30_000, seed);
            let rep = run_ensemble(&dist(&[0.3, 0.7]), &params, &RateSchedule::Constant).unwrap();
            rep.tail_fit().expect("tail fit")
        };
        let a = fit_for(101);
        let b = fit_for(202);
        assert!(a.r2 > 0.99, "r2 {}", a.r2);
        assert!(b.r2 > 0.99);
        assert!((a.rate - b.rate).abs() / a.rate < 0.05, "{} vs {}", a.rate, b.rate);
        // time scale of the tail is the reduction time itself
        assert!(a.rate > 0.25 && a.rate < 4.0, "rate {}", a.rate);
    }

    #[test]
    fn ensembles_are_deterministic_across_worker_counts() {
        let params = DiffusionParams::new(1.0, 3000, 99);
        let p0 = dist(&[0.2, 0.3, 0.5]);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_ensemble(&p0, &params, &RateSchedule::Constant).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn channel_count_weakly_affects_mean_exit() {
        let mean_for = |k: usize| {
            let params = DiffusionParams::new(1.0, 6000, 31);
            let rep =
                run_ensemble(&ChannelDistribution::uniform(k).unwrap(), &params, &RateSchedule::Constant)
                    .unwrap();
            rep.mean_exit_time()
        };
        let t2 = mean_for(2);
        let t4 = mean_for(4);
        assert!(t4 / t2 < 2.0 && t2 / t4 < 2.0, "t2 {t2} t4 {t4}");
    }

    #[test]
    fn decoherence_decay_values() {
        let params = DecoherenceParams::new(2.0, 1.0);
        assert_eq!(offdiag_magnitude(&params, 0.0), 1.0);
        let e1 = offdiag_magnitude(&params, 2.0);
        assert!((e1 - (-1.0f64).exp()).abs() < 1e-15);
        assert!(offdiag_magnitude(&params, 40.0) < 1e-8);
    }

    #[test]
    fn proximity_rate_limits() {
        let schedule = RateSchedule::Proximity {
            xi0: 1e-11,
            xi_init: 0.0,
            tau_signal: 1e-10,
            tau_red_at_zero: 1e-22,
        };
        assert!((proximity_rate(&schedule, 0.0) - 1e22).abs() / 1e22 < 1e-12);

        // xi(t) = xi0 cuts the rate by exactly e
        let schedule = RateSchedule::Proximity {
            xi0: 1e-11,
            xi_init: 1e-13,
            tau_signal: 1e-10,
            tau_red_at_zero: 1e-22,
        };
        let t_star = 1e-10 * (1e-11f64 / 1e-13).ln();
        let expected = 1e22 * (-1.0f64).exp();
        let got = proximity_rate(&schedule, t_star);
        assert!((got - expected).abs() / expected < 1e-9, "rate {got} vs {expected}");
    }

    /// Integrated reduction probability over the proximity window is huge:
    /// reduction finishes long before the overlap shuts off. Trapezoid
    /// quadrature of the rate up to xi(t) = xi0.
    #[test]
    fn proximity_window_leaves_time_to_reduce() {
        let schedule = RateSchedule::Proximity {
            xi0: 1e-11,
            xi_init: 1e-13,
            tau_signal: 1e-10,
            tau_red_at_zero: 1e-22,
        };
        let t_end = 1e-10 * (1e-11f64 / 1e-13).ln();
        let steps = 10_000;
        let h = t_end / steps as f64;
        let mut integral = 0.0;
        for k in 0..steps {
            let a = proximity_rate(&schedule, k as f64 * h);
            let b = proximity_rate(&schedule, (k + 1) as f64 * h);
            integral += 0.5 * (a + b) * h;
        }
        assert!(integral > 1e6, "integrated probability {integral}");
    }

    #[test]
    fn two_and_four_uniform_channels_match_example() {
        let params = DiffusionParams::new(1.0, 4000, 41);
        let rep2 =
            run_ensemble(&dist(&[0.5, 0.5]), &params, &RateSchedule::Constant).unwrap();
        let rep4 = run_ensemble(
            &dist(&[0.25, 0.25, 0.25, 0.25]),
            &params,
            &RateSchedule::Constant,
        )
        .unwrap();
        let (t2, t4) = (rep2.mean_exit_time(), rep4.mean_exit_time());
        assert!(t4 / t2 < 2.0 && t2 / t4 < 2.0, "t2 {t2} t4 {t4}");
    }
}
