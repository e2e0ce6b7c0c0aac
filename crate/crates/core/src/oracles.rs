//! Deterministic counterparts of the stochastic algorithms: fixed-point maps
//! and their iteration, contraction and drift diagnostics, the finite-sample
//! bound calculators, and two baseline fixed points that do not recover `Q*`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;

use crate::algorithms::{max_stepsize, AlgoConfig};
use crate::envs::Environment;
use crate::error::{check_len, Error, Result};
use crate::linear_fa::{gram_and_lambda_min, truncate, FeatureMap, Projector, StateActionWeights};
use crate::mdp::{mixing_time, sup_distance, sup_norm, Mdp, Policy, QVector, Rng};

/// `H_Phi(theta) = (Phi^T D Phi)^{-1} Phi^T D H(Phi theta)`, with the Gram
/// factorization cached.
#[derive(Debug, Clone)]
pub struct HPhi<'a> {
    proj: Projector<'a>,
    mdp: &'a Mdp,
}

impl<'a> HPhi<'a> {
    pub fn new(fm: &'a FeatureMap, w: &'a StateActionWeights, mdp: &'a Mdp) -> Result<Self> {
        fm.check_pairs(mdp.n_pairs())?;
        Ok(Self {
            proj: Projector::new(fm, w)?,
            mdp,
        })
    }

    pub fn apply(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let fm = self.proj.features();
        check_len("parameter", fm.dim(), theta.len())?;
        let q = fm.q_values(theta);
        let mut h = vec![0.0; q.len()];
        self.mdp.bellman_into(&q, &mut h);
        Ok(self.proj.coefficients(&h).as_slice().to_vec())
    }
}

pub fn h_phi_map(
    theta: &[f64],
    fm: &FeatureMap,
    w: &StateActionWeights,
    mdp: &Mdp,
) -> Result<Vec<f64>> {
    HPhi::new(fm, w, mdp)?.apply(theta)
}

/// Closed form of `H_Phi` on the two-state example:
/// `1 + (9 gamma / 10) theta + (3 gamma / 10) |theta|`.
pub fn example1_map(theta: f64, gamma: f64) -> f64 {
    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
    1.0 + 0.9 * gamma * theta + 0.3 * gamma * theta * sign
}

/// `Q -> trunc(Proj_W H(Q))`.
#[derive(Debug, Clone)]
pub struct TruncatedPbe<'a> {
    proj: Projector<'a>,
    mdp: &'a Mdp,
    r: f64,
}

impl<'a> TruncatedPbe<'a> {
    pub fn new(fm: &'a FeatureMap, w: &'a StateActionWeights, mdp: &'a Mdp, r: f64) -> Result<Self> {
        fm.check_pairs(mdp.n_pairs())?;
        if !(r >= 0.0) {
            return Err(Error::InvalidArgument(format!("radius must be non-negative, got {r}")));
        }
        Ok(Self {
            proj: Projector::new(fm, w)?,
            mdp,
            r,
        })
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    /// Inputs outside `B_r` are accepted; [`outside_ball`](Self::outside_ball)
    /// tells callers when that happens.
    pub fn apply(&self, q: &[f64]) -> Result<Vec<f64>> {
        check_len("Q-vector", self.mdp.n_pairs(), q.len())?;
        let mut h = vec![0.0; q.len()];
        self.mdp.bellman_into(q, &mut h);
        Ok(truncate(&self.proj.project(&h), self.r))
    }

    pub fn outside_ball(&self, q: &[f64]) -> bool {
        sup_norm(q) > self.r
    }
}

pub fn truncated_pbe_map(
    q: &QVector,
    fm: &FeatureMap,
    w: &StateActionWeights,
    mdp: &Mdp,
    r: f64,
) -> Result<QVector> {
    QVector::new(TruncatedPbe::new(fm, w, mdp, r)?.apply(q.as_slice())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Orbit {
    /// `x_0, x_1, ...`, ending at the first point that breached the guard.
    pub points: Vec<Vec<f64>>,
    pub diverged: bool,
}

impl Orbit {
    pub fn last(&self) -> &[f64] {
        self.points.last().expect("orbit contains its start")
    }
}

fn breaches(x: &[f64], guard: f64) -> bool {
    let n = sup_norm(x);
    !n.is_finite() || n > guard
}

/// Runs `x_{t+1} = map(x_t)` for `steps` steps, stopping early once
/// `||x_t||_inf` exceeds `guard` or is not finite.
pub fn iterate_map<F>(mut map: F, x0: Vec<f64>, steps: usize, guard: f64) -> Result<Orbit>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut points = vec![x0];
    let mut diverged = breaches(&points[0], guard);
    for _ in 0..steps {
        if diverged {
            break;
        }
        let next = map(points.last().expect("non-empty"))?;
        diverged = breaches(&next, guard);
        points.push(next);
    }
    Ok(Orbit { points, diverged })
}

#[derive(Debug, Clone, PartialEq)]
pub enum FixedPoint {
    /// `||x_{k+1} - x_k||_inf <= tol` after `iterations` steps.
    Converged { point: Vec<f64>, iterations: usize },
    Diverged { iterations: usize, last_norm: f64 },
    Stalled { iterations: usize, residual: f64 },
}

impl FixedPoint {
    pub fn point(&self) -> Option<&[f64]> {
        match self {
            FixedPoint::Converged { point, .. } => Some(point),
            _ => None,
        }
    }
}

/// Plain iteration until successive iterates agree to `tol` in sup norm.
pub fn find_fixed_point<F>(
    mut map: F,
    x0: Vec<f64>,
    tol: f64,
    max_iter: usize,
    guard: f64,
) -> Result<FixedPoint>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = x0;
    let mut residual = f64::INFINITY;
    for k in 0..max_iter {
        let next = map(&x)?;
        if breaches(&next, guard) {
            return Ok(FixedPoint::Diverged {
                iterations: k + 1,
                last_norm: sup_norm(&next),
            });
        }
        residual = sup_distance(&x, &next);
        x = next;
        if residual <= tol {
            return Ok(FixedPoint::Converged {
                point: x,
                iterations: k + 1,
            });
        }
    }
    Ok(FixedPoint::Stalled {
        iterations: max_iter,
        residual,
    })
}

/// Fixed points of the truncated projected Bellman map reached from `Q = 0`
/// and from random starts in `B_r`.
#[derive(Debug, Clone)]
pub struct TpbeReport {
    pub from_zero: FixedPoint,
    pub from_random: Vec<FixedPoint>,
    /// Largest sup distance between any converged point and the one from zero.
    pub spread: f64,
    /// More than one fixed point was found (spread above `10 tol`) or some
    /// start failed to converge.
    pub disagreement: bool,
}

pub fn tpbe_fixed_points(
    map: &TruncatedPbe<'_>,
    n_random: usize,
    tol: f64,
    max_iter: usize,
    rng: &mut Rng,
) -> Result<TpbeReport> {
    let n = map.mdp.n_pairs();
    let r = map.r;
    let run = |x0: Vec<f64>| find_fixed_point(|q| map.apply(q), x0, tol, max_iter, f64::INFINITY);
    let from_zero = run(vec![0.0; n])?;
    let mut from_random = Vec::with_capacity(n_random);
    for _ in 0..n_random {
        let x0 = (0..n).map(|_| rng.gen_range(-r..=r)).collect();
        from_random.push(run(x0)?);
    }
    let mut spread = 0.0f64;
    let mut disagreement = from_zero.point().is_none();
    if let Some(base) = from_zero.point() {
        for fp in &from_random {
            match fp.point() {
                Some(p) => spread = spread.max(sup_distance(base, p)),
                None => disagreement = true,
            }
        }
    }
    disagreement |= spread > 10.0 * tol;
    Ok(TpbeReport {
        from_zero,
        from_random,
        spread,
        disagreement,
    })
}

/// Norm in which a sampled contraction modulus is measured.
#[derive(Debug, Clone, Copy)]
pub enum ModulusNorm<'a> {
    Sup,
    /// `||theta||_{Phi,inf} = ||Phi theta||_inf`.
    PhiSup(&'a FeatureMap),
    /// `||x||_D` on vectors indexed by state-action pairs.
    D(&'a StateActionWeights),
}

impl ModulusNorm<'_> {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ModulusNorm::Sup => sup_norm(x),
            ModulusNorm::PhiSup(fm) => sup_norm(&fm.q_values(x)),
            ModulusNorm::D(w) => w.norm(x),
        }
    }
}

/// Largest `||map(x) - map(y)|| / ||x - y||` over `n_pairs` pairs drawn
/// uniformly from `[-scale, scale]^dim`. A lower bound on the modulus.
pub fn contraction_modulus_estimate<F>(
    mut map: F,
    norm: ModulusNorm<'_>,
    dim: usize,
    scale: f64,
    n_pairs: usize,
    rng: &mut Rng,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if n_pairs == 0 || dim == 0 || !(scale > 0.0) {
        return Err(Error::InvalidArgument(
            "need n_pairs >= 1, dim >= 1 and a positive scale".into(),
        ));
    }
    let draw = |rng: &mut Rng| -> Vec<f64> { (0..dim).map(|_| rng.gen_range(-scale..=scale)).collect() };
    let mut worst = 0.0f64;
    for _ in 0..n_pairs {
        let (x, y, gap) = loop {
            let x = draw(rng);
            let y = draw(rng);
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let gap = norm.eval(&diff);
            if gap > 0.0 {
                break (x, y, gap);
            }
        };
        let fx = map(&x)?;
        let fy = map(&y)?;
        let diff: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
        worst = worst.max(norm.eval(&diff) / gap);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftSource {
    /// Built for the pair with this index: `Phi theta` vanishes off that pair
    /// and is positive on it.
    Witness(usize),
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftViolation {
    pub theta: Vec<f64>,
    /// `2 gamma^2 sum_s mu(s) (max_a phi(s,a)^T theta)^2`
    pub lhs: f64,
    /// `sum_{s,a} mu(s) pi_b(a|s) (phi(s,a)^T theta)^2`
    pub rhs: f64,
    pub source: DriftSource,
}

#[derive(Debug, Clone, Default)]
pub struct DriftReport {
    pub violations: Vec<DriftViolation>,
    /// Pairs for which no witness exists because the other feature rows
    /// already span the parameter space.
    pub skipped_pairs: Vec<usize>,
    pub checked: usize,
}

impl DriftReport {
    pub fn violated(&self) -> bool {
        !self.violations.is_empty()
    }
}

/// Both sides of the negative-drift inequality at `theta`, as exact finite
/// sums; `mu(s)` is recovered as `sum_a w(s,a)`.
pub fn drift_sides(
    fm: &FeatureMap,
    w: &StateActionWeights,
    gamma: f64,
    n_actions: usize,
    theta: &[f64],
) -> (f64, f64) {
    let q = fm.q_values(theta);
    let wv = w.as_vector();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (s, chunk) in q.chunks_exact(n_actions).enumerate() {
        let weights = &wv.as_slice()[s * n_actions..(s + 1) * n_actions];
        let mu: f64 = weights.iter().sum();
        let best = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        lhs += mu * best * best;
        rhs += chunk.iter().zip(weights).map(|(v, wi)| wi * v * v).sum::<f64>();
    }
    (2.0 * gamma * gamma * lhs, rhs)
}

/// Searches for parameters violating
/// `2 gamma^2 E_mu[(max_a phi(S,a)^T theta)^2] < E_{mu,pi_b}[(phi(S,A)^T theta)^2]`
/// among structured witnesses (one per pair) and `n_random` uniform draws
/// from `[-1, 1]^d`.
pub fn negative_drift_check(
    fm: &FeatureMap,
    w: &StateActionWeights,
    gamma: f64,
    pi_b: &Policy,
    n_random: usize,
    rng: &mut Rng,
) -> Result<DriftReport> {
    let na = pi_b.n_actions();
    fm.check_pairs(pi_b.n_states() * na)?;
    check_len("state-action weights", fm.n_pairs(), w.len())?;
    let mut report = DriftReport::default();
    let consider = |theta: Vec<f64>, source: DriftSource, report: &mut DriftReport| {
        report.checked += 1;
        let (lhs, rhs) = drift_sides(fm, w, gamma, na, &theta);
        if lhs >= rhs {
            report.violations.push(DriftViolation {
                theta,
                lhs,
                rhs,
                source,
            });
        }
    };
    for i in 0..fm.n_pairs() {
        match pair_witness(fm, i) {
            Some(theta) => consider(theta, DriftSource::Witness(i), &mut report),
            None => report.skipped_pairs.push(i),
        }
    }
    for _ in 0..n_random {
        let theta = (0..fm.dim()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        consider(theta, DriftSource::Random, &mut report);
    }
    Ok(report)
}

/// A unit `theta` orthogonal to every feature row except row `i`, signed so
/// that `phi_i^T theta > 0`.
fn pair_witness(fm: &FeatureMap, i: usize) -> Option<Vec<f64>> {
    let d = fm.dim();
    let others: Vec<f64> = (0..fm.n_pairs())
        .filter(|&j| j != i)
        .flat_map(|j| fm.row(j).to_vec())
        .collect();
    let a = DMatrix::from_row_slice(fm.n_pairs() - 1, d, &others);
    let eig = SymmetricEigen::new(a.transpose() * &a);
    let scale = eig.eigenvalues.amax().max(1.0);
    let row = DVector::from_row_slice(fm.row(i));
    let mut best: Option<(f64, DVector<f64>)> = None;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > 1e-10 * scale {
            continue;
        }
        let v = eig.eigenvectors.column(k).into_owned();
        let c = row.dot(&v);
        if best.as_ref().is_none_or(|(bc, _)| c.abs() > bc.abs()) {
            best = Some((c, v));
        }
    }
    let (c, v) = best?;
    if c.abs() <= 1e-9 {
        return None;
    }
    let v = if c < 0.0 { -v } else { v };
    Some(v.as_slice().to_vec())
}

/// Every symbol of the finite-sample bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub gamma: f64,
    /// Outer iterations `T`.
    pub outer: usize,
    /// Inner iterations `K`.
    pub inner: usize,
    pub alpha: f64,
    pub t_alpha: usize,
    pub lambda_min: f64,
    pub e_approx: f64,
    /// `||Q_hat_0 - Q*||_inf`.
    pub init_gap: f64,
}

impl BoundInputs {
    /// Takes `lambda_min` from the environment's Gram matrix and `t_alpha`
    /// as the exact mixing time of the behavior chain at precision `alpha`.
    pub fn for_run(env: &Environment, cfg: &AlgoConfig, init_gap: f64, e_approx: f64) -> Result<Self> {
        let (_, lambda_min) = gram_and_lambda_min(&env.features, &env.weights)?;
        let t_alpha = mixing_time(&env.behavior_chain(), &env.mu, cfg.alpha.min(0.5))?;
        Ok(Self {
            gamma: env.mdp.gamma(),
            outer: cfg.outer,
            inner: cfg.inner,
            alpha: cfg.alpha,
            t_alpha,
            lambda_min,
            e_approx,
            init_gap,
        })
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.alpha > 0.0) || !(self.lambda_min > 0.0) {
            return bad("alpha and lambda_min must be positive");
        }
        if !(self.e_approx >= 0.0) || !(self.init_gap >= 0.0) {
            return bad("e_approx and init_gap must be non-negative");
        }
        if self.lambda_min * self.alpha >= 1.0 {
            return Err(Error::Precondition(format!(
                "lambda_min * alpha = {} must be below 1",
                self.lambda_min * self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    /// Fixed-point iteration error.
    pub e1: f64,
    /// Inner-loop bias.
    pub e2: f64,
    /// Inner-loop variance.
    pub e3: f64,
    /// Function approximation error.
    pub e4: f64,
    pub total: f64,
    /// Set when `alpha > lambda_min (1-gamma)^2 / 130`.
    pub stepsize_warning: bool,
}

pub fn error_bound(b: &BoundInputs) -> Result<BoundTerms> {
    b.validate()?;
    if b.inner < b.t_alpha + 1 {
        return Err(Error::Precondition(format!(
            "the bound requires K >= t_alpha + 1 (K = {}, t_alpha = {})",
            b.inner, b.t_alpha
        )));
    }
    let g2 = (1.0 - b.gamma).powi(2);
    let e1 = b.gamma.powi(b.outer.min(i32::MAX as usize) as i32) * b.init_gap;
    let exponent = (b.inner - b.t_alpha - 1) as f64 / 2.0;
    let e2 = 2.0 * (1.0 - b.lambda_min * b.alpha).powf(exponent) / (b.lambda_min.sqrt() * g2);
    let e3 = 24.0 * (b.alpha * (b.t_alpha + 1) as f64).sqrt() / (b.lambda_min * g2);
    let e4 = b.e_approx / (1.0 - b.gamma);
    Ok(BoundTerms {
        e1,
        e2,
        e3,
        e4,
        total: e1 + e2 + e3 + e4,
        stepsize_warning: b.alpha > max_stepsize(b.lambda_min, b.gamma),
    })
}

/// Mean-square inner-loop bound at step `k >= t_alpha + 1`:
/// `4/(lambda (1-gamma)^2) (1 - lambda alpha)^{k - t_alpha - 1}
///  + 520 alpha (t_alpha + 1) / (lambda^2 (1-gamma)^2)`.
pub fn inner_loop_bound(k: usize, alpha: f64, t_alpha: usize, lambda_min: f64, gamma: f64) -> Result<f64> {
    if k < t_alpha + 1 {
        return Err(Error::Precondition(format!(
            "inner-loop bound needs k >= t_alpha + 1 (k = {k}, t_alpha = {t_alpha})"
        )));
    }
    if !(lambda_min > 0.0 && alpha > 0.0 && lambda_min * alpha < 1.0) {
        return Err(Error::Precondition("need 0 < lambda_min * alpha < 1".into()));
    }
    let g2 = (1.0 - gamma).powi(2);
    let bias = 4.0 / (lambda_min * g2) * (1.0 - lambda_min * alpha).powf((k - t_alpha - 1) as f64);
    let variance = 520.0 * alpha * (t_alpha + 1) as f64 / (lambda_min * lambda_min * g2);
    Ok(bias + variance)
}

const BASELINE_MAX_ITER: usize = 10_000_000;

/// Solves `(I + eta D^{-1}) Q = H(Q)` by iterating
/// `Q <- (I + eta D^{-1})^{-1} H(Q)` from zero. The result is within `tol`
/// of the fixed point in sup norm.
pub fn modified_bellman_solve(mdp: &Mdp, w: &StateActionWeights, eta: f64, tol: f64) -> Result<QVector> {
    check_len("state-action weights", mdp.n_pairs(), w.len())?;
    if !(eta >= 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument("need eta >= 0 and tol > 0".into()));
    }
    let scale: Vec<f64> = w.as_vector().iter().map(|d| 1.0 / (1.0 + eta / d)).collect();
    let gamma = mdp.gamma();
    // Successive differences shrink by gamma, so stopping at this residual
    // leaves at most `tol` to the fixed point.
    let stop = tol * (1.0 - gamma) / gamma;
    let outcome = find_fixed_point(
        |q| {
            let mut h = vec![0.0; q.len()];
            mdp.bellman_into(q, &mut h);
            Ok(h.iter().zip(&scale).map(|(v, c)| v * c).collect())
        },
        vec![0.0; mdp.n_pairs()],
        stop,
        BASELINE_MAX_ITER,
        f64::INFINITY,
    )?;
    match outcome {
        FixedPoint::Converged { point, .. } => QVector::new(point),
        FixedPoint::Stalled {
            iterations,
            residual,
        } => Err(Error::NonConvergence {
            iterations,
            residual,
        }),
        FixedPoint::Diverged { iterations, last_norm } => Err(Error::NonConvergence {
            iterations,
            residual: last_norm,
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoupledOutcome {
    Converged {
        u: DVector<f64>,
        v: DVector<f64>,
        iterations: usize,
    },
    Diverged {
        iterations: usize,
        last_norm: f64,
    },
    Stalled {
        iterations: usize,
        residual: f64,
    },
}

/// Iterates `u <- Phi^T D H(Phi u)` from zero and, on convergence, returns
/// `u*` together with `v* = (Phi^T D Phi)^{-1} u*`.
///
/// The map need not contract; leaving the `guard` ball or running out of
/// iterations is reported rather than raised.
pub fn coupled_q_fixed_point(
    mdp: &Mdp,
    fm: &FeatureMap,
    w: &StateActionWeights,
    tol: f64,
    guard: f64,
) -> Result<CoupledOutcome> {
    fm.check_pairs(mdp.n_pairs())?;
    check_len("state-action weights", mdp.n_pairs(), w.len())?;
    let proj = Projector::new(fm, w)?;
    let phi_t = fm.matrix().transpose();
    let wv = w.as_vector();
    let outcome = find_fixed_point(
        |u| {
            let q = fm.q_values(u);
            let mut h = vec![0.0; q.len()];
            mdp.bellman_into(&q, &mut h);
            let dh = DVector::from_fn(h.len(), |i, _| wv[i] * h[i]);
            Ok((&phi_t * dh).as_slice().to_vec())
        },
        vec![0.0; fm.dim()],
        tol,
        BASELINE_MAX_ITER,
        guard,
    )?;
    Ok(match outcome {
        FixedPoint::Converged { point, iterations } => {
            let u = DVector::from_vec(point);
            let v = proj.solve_gram(&u);
            CoupledOutcome::Converged { u, v, iterations }
        }
        FixedPoint::Diverged { iterations, last_norm } => CoupledOutcome::Diverged { iterations, last_norm },
        FixedPoint::Stalled { iterations, residual } => CoupledOutcome::Stalled { iterations, residual },
    })
}

/// `(1 - sigma) / sigma * gamma / (1 - gamma)^2`, the extra bias of the
/// coupled fixed point when `Phi^T D Phi = sigma I`.
pub fn coupled_bias_term(sigma: f64, gamma: f64) -> f64 {
    (1.0 - sigma) / sigma * gamma / (1.0 - gamma).powi(2)
}
