//! The stochastic algorithms, all driven by one Markovian trajectory
//! generated by the behavior policy:
//!
//! * classical semi-gradient Q-learning (flat loop, no target network);
//! * Q-learning with a target network, with or without truncation of the
//!   bootstrapped target;
//! * the projection variant, which stores the truncated `|S||A|`-dimensional
//!   target `trunc(Phi theta_hat)` explicitly.
//!
//! Divergence is an outcome: a run whose parameter norm exceeds the guard (or
//! becomes non-finite) stops and is flagged in its [`RunLog`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::Environment;
use crate::error::{check_len, Error, Result};
use crate::linear_fa::truncate_scalar;
use crate::mdp::{sample_step, sup_distance, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    SemiGradient,
    /// Target network, no truncation.
    Target,
    /// Target network and truncation.
    TargetTrunc,
    /// Target network and explicit projection onto the sup-norm ball.
    TargetProj,
}

impl Algo {
    pub const ALL: [Algo; 4] = [
        Algo::SemiGradient,
        Algo::Target,
        Algo::TargetTrunc,
        Algo::TargetProj,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algo::SemiGradient => "semi_gradient",
            Algo::Target => "target",
            Algo::TargetTrunc => "target_trunc",
            Algo::TargetProj => "target_proj",
        }
    }

    /// Whether reported Q-estimates are truncated.
    pub fn truncates(self) -> bool {
        matches!(self, Algo::TargetTrunc | Algo::TargetProj)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm `{s}`")))
    }
}

fn default_guard() -> f64 {
    1e8
}

fn default_log_every() -> usize {
    1
}

/// Loop sizes, constant stepsize and bookkeeping for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    /// Outer iterations `T`.
    #[serde(rename = "T")]
    pub outer: usize,
    /// Inner iterations `K`.
    #[serde(rename = "K")]
    pub inner: usize,
    pub alpha: f64,
    /// Truncation radius; the environment default when absent.
    #[serde(default, rename = "r")]
    pub radius: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Threshold on `||theta||_2` beyond which a run is declared divergent.
    #[serde(default = "default_guard")]
    pub divergence_guard: f64,
    /// Logging cadence in outer iterations (blocks of `K` samples for the
    /// semi-gradient method).
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    /// Initial parameter: `theta_0` for semi-gradient, `theta_hat_0` for the
    /// target-network methods. Zero when absent.
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    #[serde(default)]
    pub initial_state: usize,
}

impl AlgoConfig {
    pub fn new(outer: usize, inner: usize, alpha: f64) -> Self {
        Self {
            outer,
            inner,
            alpha,
            radius: None,
            seed: 0,
            divergence_guard: default_guard(),
            log_every: default_log_every(),
            theta0: None,
            initial_state: 0,
        }
    }

    pub fn with_radius(mut self, r: f64) -> Self {
        self.radius = Some(r);
        self
    }

    pub fn with_theta0(mut self, theta0: Vec<f64>) -> Self {
        self.theta0 = Some(theta0);
        self
    }

    pub fn with_guard(mut self, guard: f64) -> Self {
        self.divergence_guard = guard;
        self
    }

    pub fn with_log_every(mut self, every: usize) -> Self {
        self.log_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.outer == 0 {
            return bad("T must be at least 1".into());
        }
        self.validate_for_run()?;
        if self.log_every == 0 {
            return bad("log_every must be at least 1".into());
        }
        Ok(())
    }

    /// The subset of [`validate`](Self::validate) the run functions need;
    /// `T = 0` is allowed there and yields the initial record only.
    fn validate_for_run(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.inner == 0 {
            return bad("K must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if let Some(r) = self.radius {
            if !(r >= 0.0) {
                return bad(format!("r must be non-negative, got {r}"));
            }
        }
        if !(self.divergence_guard > 0.0) {
            return bad("divergence_guard must be positive".into());
        }
        Ok(())
    }

    pub fn radius_for(&self, env: &Environment) -> f64 {
        self.radius.unwrap_or_else(|| env.default_radius())
    }

    /// Reports whether `alpha <= lambda_min (1-gamma)^2 / 130` and
    /// `K >= t_alpha + 1`. Advisory only.
    pub fn stepsize_report(&self, lambda_min: f64, gamma: f64, t_alpha: usize) -> StepsizeReport {
        let alpha_max = max_stepsize(lambda_min, gamma);
        StepsizeReport {
            alpha_max,
            alpha_ok: self.alpha <= alpha_max,
            inner_ok: self.inner > t_alpha,
            t_alpha,
        }
    }
}

/// Largest constant stepsize covered by the finite-sample bound.
pub fn max_stepsize(lambda_min: f64, gamma: f64) -> f64 {
    lambda_min * (1.0 - gamma).powi(2) / 130.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepsizeReport {
    pub alpha_max: f64,
    pub alpha_ok: bool,
    pub inner_ok: bool,
    pub t_alpha: usize,
}

impl StepsizeReport {
    pub fn compliant(&self) -> bool {
        self.alpha_ok && self.inner_ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    /// Outer iteration index; `0` is the initial point.
    pub t: usize,
    pub samples: u64,
    pub sup_error: f64,
    pub theta_norm: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub algo: Algo,
    pub env: String,
    pub seed: u64,
    pub initial: Record,
    /// Logged records for `t >= 1`, in order.
    pub records: Vec<Record>,
    /// `theta_hat_T` (or the last iterate before the guard tripped).
    pub final_theta: Vec<f64>,
    pub diverged: bool,
}

impl RunLog {
    pub fn last(&self) -> &Record {
        self.records.last().unwrap_or(&self.initial)
    }

    pub fn samples(&self) -> u64 {
        self.last().samples
    }
}

/// Hooks for inspecting a run as it happens.
pub trait Observer {
    /// Called after every parameter update with the fresh iterate.
    fn inner_step(&mut self, _t: usize, _k: usize, _theta: &[f64]) {}
    /// Called when outer iteration `t` completes, with the states the inner
    /// loop started and ended in and the new target parameter.
    fn outer_step(&mut self, _t: usize, _start: usize, _end: usize, _theta_hat: &[f64]) {}
}

impl Observer for () {}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn blown_up(theta: &[f64], guard: f64) -> bool {
    let n = l2(theta);
    !n.is_finite() || n > guard
}

struct Metrics<'a> {
    env: &'a Environment,
    radius: Option<f64>,
}

impl Metrics<'_> {
    fn sup_error(&self, theta: &[f64]) -> f64 {
        let q = self.env.features.q_values(theta);
        let q = match self.radius {
            Some(r) => q.into_iter().map(|v| truncate_scalar(v, r)).collect(),
            None => q,
        };
        sup_distance(&q, self.env.q_star.as_slice())
    }

    fn record(&self, t: usize, samples: u64, theta: &[f64], diverged: bool) -> Record {
        Record {
            t,
            samples,
            sup_error: self.sup_error(theta),
            theta_norm: l2(theta),
            diverged,
        }
    }
}

fn initial_theta(env: &Environment, cfg: &AlgoConfig) -> Result<Vec<f64>> {
    match &cfg.theta0 {
        Some(t) => {
            check_len("initial parameter", env.features.dim(), t.len())?;
            Ok(t.clone())
        }
        None => Ok(vec![0.0; env.features.dim()]),
    }
}

fn check_start(env: &Environment, cfg: &AlgoConfig) -> Result<()> {
    cfg.validate_for_run()?;
    if cfg.initial_state >= env.mdp.n_states() {
        return Err(Error::InvalidArgument(format!(
            "initial state {} out of range",
            cfg.initial_state
        )));
    }
    Ok(())
}

fn should_log(t: usize, cfg: &AlgoConfig) -> bool {
    t.is_multiple_of(cfg.log_every.max(1)) || t == cfg.outer
}

pub fn run(env: &Environment, algo: Algo, cfg: &AlgoConfig, rng: &mut Rng) -> Result<RunLog> {
    run_observed(env, algo, cfg, rng, &mut ())
}

pub fn run_observed(
    env: &Environment,
    algo: Algo,
    cfg: &AlgoConfig,
    rng: &mut Rng,
    obs: &mut impl Observer,
) -> Result<RunLog> {
    match algo {
        Algo::SemiGradient => semi_gradient_observed(env, cfg, rng, obs),
        Algo::Target => target_network_observed(env, cfg, rng, Bootstrap::Plain, obs),
        Algo::TargetTrunc => target_network_observed(env, cfg, rng, Bootstrap::Truncated, obs),
        Algo::TargetProj => target_network_observed(env, cfg, rng, Bootstrap::Projected, obs),
    }
}

/// `theta <- theta + alpha phi(S,A) (R + gamma max_a' phi(S',a')^T theta - phi(S,A)^T theta)`
/// for `T * K` steps from `theta_0`.
pub fn semi_gradient_run(env: &Environment, cfg: &AlgoConfig, rng: &mut Rng) -> Result<RunLog> {
    semi_gradient_observed(env, cfg, rng, &mut ())
}

fn semi_gradient_observed(
    env: &Environment,
    cfg: &AlgoConfig,
    rng: &mut Rng,
    obs: &mut impl Observer,
) -> Result<RunLog> {
    check_start(env, cfg)?;
    let (mdp, fm) = (&env.mdp, &env.features);
    let na = mdp.n_actions();
    let metrics = Metrics { env, radius: None };
    let mut theta = initial_theta(env, cfg)?;
    let initial = metrics.record(0, 0, &theta, blown_up(&theta, cfg.divergence_guard));
    let mut log = RunLog {
        algo: Algo::SemiGradient,
        env: env.name.clone(),
        seed: cfg.seed,
        initial,
        records: Vec::new(),
        final_theta: Vec::new(),
        diverged: initial.diverged,
    };
    let mut s = cfg.initial_state;
    let mut samples = 0u64;
    'outer: for t in 0..cfg.outer {
        if log.diverged {
            break;
        }
        let start = s;
        for k in 0..cfg.inner {
            let step = sample_step(mdp, &env.behavior, s, rng);
            samples += 1;
            let i = mdp.idx(s, step.action);
            let s2 = step.next_state;
            let boot = (0..na)
                .map(|a| fm.value(mdp.idx(s2, a), &theta))
                .fold(f64::NEG_INFINITY, f64::max);
            let td = step.reward + mdp.gamma() * boot - fm.value(i, &theta);
            for (th, f) in theta.iter_mut().zip(fm.row(i)) {
                *th += cfg.alpha * f * td;
            }
            s = s2;
            obs.inner_step(t, k, &theta);
            if blown_up(&theta, cfg.divergence_guard) {
                log.diverged = true;
                log.records.push(metrics.record(t + 1, samples, &theta, true));
                break 'outer;
            }
        }
        obs.outer_step(t, start, s, &theta);
        if should_log(t + 1, cfg) {
            log.records.push(metrics.record(t + 1, samples, &theta, false));
        }
    }
    log.final_theta = theta;
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bootstrap {
    Plain,
    Truncated,
    Projected,
}

/// Target-network Q-learning. With `truncation` the bootstrap uses
/// `max_a' trunc(phi(S',a')^T theta_hat)`; without it the raw value.
///
/// Each inner loop restarts from `theta_{t,0} = 0`, the target is synced to
/// `theta_{t,K}` afterwards, and the trajectory continues from the last
/// state without resets.
pub fn target_network_run(
    env: &Environment,
    cfg: &AlgoConfig,
    rng: &mut Rng,
    truncation: bool,
) -> Result<RunLog> {
    let mode = if truncation {
        Bootstrap::Truncated
    } else {
        Bootstrap::Plain
    };
    target_network_observed(env, cfg, rng, mode, &mut ())
}

/// Same trajectory semantics as the truncated target-network run, with the
/// truncated target `Q~_t = trunc(Phi theta_hat_t)` materialized once per
/// outer iteration.
pub fn projection_variant_run(
    env: &Environment,
    cfg: &AlgoConfig,
    rng: &mut Rng,
) -> Result<RunLog> {
    target_network_observed(env, cfg, rng, Bootstrap::Projected, &mut ())
}

fn target_network_observed(
    env: &Environment,
    cfg: &AlgoConfig,
    rng: &mut Rng,
    mode: Bootstrap,
    obs: &mut impl Observer,
) -> Result<RunLog> {
    check_start(env, cfg)?;
    let (mdp, fm) = (&env.mdp, &env.features);
    let na = mdp.n_actions();
    let r = cfg.radius_for(env);
    let algo = match mode {
        Bootstrap::Plain => Algo::Target,
        Bootstrap::Truncated => Algo::TargetTrunc,
        Bootstrap::Projected => Algo::TargetProj,
    };
    let metrics = Metrics {
        env,
        radius: algo.truncates().then_some(r),
    };
    let mut theta_hat = initial_theta(env, cfg)?;
    let initial = metrics.record(0, 0, &theta_hat, blown_up(&theta_hat, cfg.divergence_guard));
    let mut log = RunLog {
        algo,
        env: env.name.clone(),
        seed: cfg.seed,
        initial,
        records: Vec::new(),
        final_theta: Vec::new(),
        diverged: initial.diverged,
    };
    if log.diverged {
        log.final_theta = theta_hat;
        return Ok(log);
    }

    let mut s = cfg.initial_state;
    let mut samples = 0u64;
    let mut q_tilde = vec![0.0; mdp.n_pairs()];
    for t in 0..cfg.outer {
        if mode == Bootstrap::Projected {
            for (i, q) in q_tilde.iter_mut().enumerate() {
                *q = truncate_scalar(fm.value(i, &theta_hat), r);
            }
        }
        let target = |s2: usize| -> f64 {
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                let i = mdp.idx(s2, a);
                let v = match mode {
                    Bootstrap::Plain => fm.value(i, &theta_hat),
                    Bootstrap::Truncated => truncate_scalar(fm.value(i, &theta_hat), r),
                    Bootstrap::Projected => q_tilde[i],
                };
                best = best.max(v);
            }
            best
        };
        let start = s;
        let mut theta = vec![0.0; fm.dim()];
        let outcome = inner_loop(
            env,
            cfg.alpha,
            cfg.inner,
            &mut s,
            rng,
            target,
            &mut theta,
            cfg.divergence_guard,
            |k, th| obs.inner_step(t, k, th),
        );
        debug_assert!(mode == Bootstrap::Plain || outcome.max_abs_target <= r);
        samples += outcome.steps as u64;
        if outcome.diverged {
            log.diverged = true;
            log.records.push(metrics.record(t + 1, samples, &theta, true));
            log.final_theta = theta;
            return Ok(log);
        }
        theta_hat = theta;
        obs.outer_step(t, start, s, &theta_hat);
        if should_log(t + 1, cfg) {
            log.records.push(metrics.record(t + 1, samples, &theta_hat, false));
        }
    }
    log.final_theta = theta_hat;
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOutcome {
    pub steps: usize,
    pub diverged: bool,
    /// Largest `|max_a' target(S', a')|` seen, before the discount.
    pub max_abs_target: f64,
}

/// `K` steps of the linear stochastic-approximation update with a frozen
/// bootstrap `target(s') = max_a' Q_target(s', a')`:
/// `theta <- theta + alpha phi(S,A) (R + gamma target(S') - phi(S,A)^T theta)`.
///
/// `state` is advanced in place so that consecutive calls continue one
/// trajectory.
#[allow(clippy::too_many_arguments)]
pub fn inner_loop(
    env: &Environment,
    alpha: f64,
    steps: usize,
    state: &mut usize,
    rng: &mut Rng,
    target: impl Fn(usize) -> f64,
    theta: &mut [f64],
    guard: f64,
    mut on_step: impl FnMut(usize, &[f64]),
) -> InnerOutcome {
    let (mdp, fm) = (&env.mdp, &env.features);
    let mut max_abs_target = 0.0f64;
    for k in 0..steps {
        let s = *state;
        let step = sample_step(mdp, &env.behavior, s, rng);
        let i = mdp.idx(s, step.action);
        let boot = target(step.next_state);
        max_abs_target = max_abs_target.max(boot.abs());
        let td = step.reward + mdp.gamma() * boot - fm.value(i, theta);
        for (th, f) in theta.iter_mut().zip(fm.row(i)) {
            *th += alpha * f * td;
        }
        *state = step.next_state;
        on_step(k, theta);
        if blown_up(theta, guard) {
            return InnerOutcome {
                steps: k + 1,
                diverged: true,
                max_abs_target,
            };
        }
    }
    InnerOutcome {
        steps,
        diverged: false,
        max_abs_target,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;
    use crate::linear_fa::truncate;
    use crate::mdp::seeded_rng;

    #[derive(Default)]
    struct Trace {
        iterates: Vec<Vec<f64>>,
        stitches: Vec<(usize, usize)>,
    }

    impl Observer for Trace {
        fn inner_step(&mut self, _t: usize, _k: usize, theta: &[f64]) {
            self.iterates.push(theta.to_vec());
        }
        fn outer_step(&mut self, _t: usize, start: usize, end: usize, _theta_hat: &[f64]) {
            self.stitches.push((start, end));
        }
    }

    #[test]
    fn algo_names_round_trip() {
        for a in Algo::ALL {
            assert_eq!(a.as_str().parse::<Algo>().unwrap(), a);
        }
        assert!("dqn".parse::<Algo>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AlgoConfig::new(0, 1, 0.1).validate().is_err());
        assert!(AlgoConfig::new(1, 0, 0.1).validate().is_err());
        assert!(AlgoConfig::new(1, 1, 0.0).validate().is_err());
        assert!(AlgoConfig::new(1, 1, 0.1).with_radius(-1.0).validate().is_err());
        assert!(AlgoConfig::new(1, 1, 0.1).with_log_every(0).validate().is_err());
        AlgoConfig::new(1, 1, 0.1).validate().unwrap();
    }

    #[test]
    fn stepsize_report() {
        let cfg = AlgoConfig::new(10, 100, 4.8e-4);
        let rep = cfg.stepsize_report(6.25, 0.9, 1);
        assert!((rep.alpha_max - 6.25 * 0.01 / 130.0).abs() < 1e-18);
        assert!(rep.alpha_ok && rep.inner_ok && rep.compliant());
        let rep = AlgoConfig::new(10, 2, 1e-3).stepsize_report(6.25, 0.9, 2);
        assert!(!rep.alpha_ok && !rep.inner_ok);
    }

    #[test]
    fn zero_steps_returns_initial() {
        let env = envs::example1(0.9).unwrap();
        let cfg = AlgoConfig::new(0, 1, 0.1).with_theta0(vec![2.0]);
        let log = semi_gradient_run(&env, &cfg, &mut seeded_rng(0)).unwrap();
        assert!(log.records.is_empty());
        assert_eq!(log.final_theta, vec![2.0]);
        // |Phi theta_0 - Q*|_inf = max(|2-35.2|, |4-38|, |4-36.2|, |8-40|)
        assert!((log.initial.sup_error - 34.0).abs() < 1e-8);
    }

    #[test]
    fn semi_gradient_diverges_on_baird() {
        let env = envs::baird(0.99).unwrap();
        let cfg = AlgoConfig::new(200, 1000, 0.01).with_theta0(vec![1.0; 14]);
        let log = semi_gradient_run(&env, &cfg, &mut seeded_rng(1)).unwrap();
        assert!(log.diverged);
        assert!(log.samples() <= 200_000);
        assert!(log.last().diverged);
    }

    #[test]
    fn tabular_semi_gradient_converges() {
        let env = envs::random_mdp(21, 2, 2, 0.9).unwrap();
        let cfg = AlgoConfig::new(100, 10_000, 0.02).with_log_every(10);
        let log = semi_gradient_run(&env, &cfg, &mut seeded_rng(4)).unwrap();
        let scale = env.mdp.reward_bound() / (1.0 - env.mdp.gamma());
        assert!(!log.diverged);
        assert!(log.last().sup_error < 0.1 * scale, "{}", log.last().sup_error);
        assert!(log.last().sup_error < log.initial.sup_error);
    }

    #[test]
    fn example1_target_without_truncation_diverges() {
        let env = envs::example1(0.9).unwrap();
        let cfg = AlgoConfig::new(60, 10_000, 1e-3)
            .with_theta0(vec![1.0])
            .with_guard(100.0);
        let log = target_network_run(&env, &cfg, &mut seeded_rng(2), false).unwrap();
        assert!(log.diverged);
    }

    #[test]
    fn example1_truncated_settles_at_oracle_fixed_point() {
        // Fixed point of theta = 1 + g (3 max(trunc(theta), trunc(2 theta))
        // + 6 max(trunc(2 theta), trunc(4 theta))) / 25 on its [10, 20] branch.
        let g = 0.9;
        let fixed = (1.0 + 240.0 * g / 25.0) / (1.0 - 6.0 * g / 25.0);
        let env = envs::example1(g).unwrap();
        let cfg = AlgoConfig::new(30, 50_000, 1e-3).with_radius(40.0);
        let log = target_network_run(&env, &cfg, &mut seeded_rng(7), true).unwrap();
        assert!(!log.diverged);
        assert!((log.final_theta[0] - fixed).abs() < 0.5, "{:?}", log.final_theta);
    }

    #[test]
    fn projection_variant_replays_truncated_run() {
        let env = envs::example1(0.9).unwrap();
        let cfg = AlgoConfig::new(5, 2000, 1e-2).with_radius(40.0);
        let mut a = Trace::default();
        let mut b = Trace::default();
        let la = run_observed(&env, Algo::TargetTrunc, &cfg, &mut seeded_rng(7), &mut a).unwrap();
        let lb = run_observed(&env, Algo::TargetProj, &cfg, &mut seeded_rng(7), &mut b).unwrap();
        assert_eq!(a.iterates, b.iterates);
        assert_eq!(la.final_theta, lb.final_theta);
        assert_eq!(la.records, lb.records);
    }

    #[test]
    fn projection_variant_tabular_target_is_truncated_theta() {
        let env = envs::random_mdp(2, 3, 2, 0.8).unwrap();
        let theta: Vec<f64> = (0..6).map(|i| i as f64 * 3.0 - 7.0).collect();
        let q = env.features.q_values(&theta);
        assert_eq!(q, theta);
        assert_eq!(truncate(&q, 5.0), vec![-5.0, -4.0, -1.0, 2.0, 5.0, 5.0]);
    }

    #[test]
    fn trajectory_is_stitched() {
        let env = envs::baird(0.9).unwrap();
        let cfg = AlgoConfig::new(20, 37, 1e-3);
        let mut trace = Trace::default();
        run_observed(&env, Algo::TargetTrunc, &cfg, &mut seeded_rng(3), &mut trace).unwrap();
        assert_eq!(trace.stitches.len(), 20);
        for w in trace.stitches.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let env = envs::random_mdp(5, 3, 2, 0.8).unwrap();
        let cfg = AlgoConfig::new(5, 500, 0.05);
        for algo in Algo::ALL {
            let a = run(&env, algo, &cfg, &mut seeded_rng(9)).unwrap();
            let b = run(&env, algo, &cfg, &mut seeded_rng(9)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn samples_nondecreasing_and_cadence() {
        let env = envs::random_mdp(5, 3, 2, 0.8).unwrap();
        let cfg = AlgoConfig::new(10, 100, 0.05).with_log_every(3);
        let log = run(&env, Algo::TargetTrunc, &cfg, &mut seeded_rng(1)).unwrap();
        let ts: Vec<usize> = log.records.iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![3, 6, 9, 10]);
        assert!(log.records.windows(2).all(|w| w[0].samples <= w[1].samples));
        assert_eq!(log.samples(), 1000);
    }

    #[test]
    fn nan_is_divergence_not_crash() {
        let env = envs::example1(0.9).unwrap();
        let cfg = AlgoConfig::new(3, 10, 0.1).with_theta0(vec![f64::NAN]);
        let log = semi_gradient_run(&env, &cfg, &mut seeded_rng(0)).unwrap();
        assert!(log.diverged);
        let log = target_network_run(&env, &cfg, &mut seeded_rng(0), false).unwrap();
        assert!(log.diverged);
    }

    #[test]
    fn bad_inputs_rejected() {
        let env = envs::example1(0.9).unwrap();
        let cfg = AlgoConfig::new(3, 10, 0.1).with_theta0(vec![1.0, 2.0]);
        assert!(semi_gradient_run(&env, &cfg, &mut seeded_rng(0)).is_err());
        let mut cfg = AlgoConfig::new(3, 10, 0.1);
        cfg.initial_state = 5;
        assert!(target_network_run(&env, &cfg, &mut seeded_rng(0), true).is_err());
    }
}
