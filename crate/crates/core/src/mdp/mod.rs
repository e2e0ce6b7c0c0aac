//! Finite discounted MDPs, the Bellman optimality operator and the exact
//! dynamic-programming oracles built on it.
//!
//! State-action pairs are laid out contiguously with `idx(s, a) = s * n_actions + a`
//! (0-based). Every vector over pairs in this crate uses that ordering.

mod chain;
mod sampling;

pub use chain::{
    check_exploration, is_aperiodic, is_irreducible, mixing_time, policy_transition,
    stationary_distribution, MIXING_CAP,
};
pub use sampling::{sample_step, seeded_rng, Rng, Step};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// A finite MDP `(S, A, P, R, gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    /// One row-stochastic `n_states x n_states` matrix per action.
    transitions: Vec<DMatrix<f64>>,
    /// Rewards laid out by `idx(s, a)`.
    rewards: Vec<f64>,
    gamma: f64,
    reward_range: (f64, f64),
}

impl Mdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<DMatrix<f64>>,
        rewards: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidModel(
                "state and action spaces must be non-empty".into(),
            ));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidModel(format!(
                "discount factor must lie strictly inside (0, 1), got {gamma}"
            )));
        }
        check_len("transition matrices", n_actions, transitions.len())?;
        check_len("rewards", n_states * n_actions, rewards.len())?;
        for (a, p) in transitions.iter().enumerate() {
            if p.nrows() != n_states || p.ncols() != n_states {
                return Err(Error::InvalidModel(format!(
                    "transition matrix for action {a} is {}x{}, expected {n_states}x{n_states}",
                    p.nrows(),
                    p.ncols()
                )));
            }
            check_row_stochastic(p).map_err(|msg| {
                Error::InvalidModel(format!("transition matrix for action {a}: {msg}"))
            })?;
        }
        if let Some(bad) = rewards.iter().position(|r| !r.is_finite()) {
            return Err(Error::InvalidModel(format!("reward at index {bad} is not finite")));
        }
        let reward_range = rewards
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(r), hi.max(r))
            });
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            gamma,
            reward_range,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Number of state-action pairs, `|S||A|`.
    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    #[inline]
    pub fn idx(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[self.idx(s, a)]
    }

    pub fn transition(&self, a: usize) -> &DMatrix<f64> {
        &self.transitions[a]
    }

    pub fn transitions(&self) -> &[DMatrix<f64>] {
        &self.transitions
    }

    /// `(R_min, R_max)` recorded at construction.
    pub fn reward_range(&self) -> (f64, f64) {
        self.reward_range
    }

    /// Largest reward magnitude.
    pub fn reward_bound(&self) -> f64 {
        self.reward_range.0.abs().max(self.reward_range.1.abs())
    }

    /// Same dynamics with a different discount factor and rewards scaled by `reward_scale`.
    pub fn rescaled(&self, gamma: f64, reward_scale: f64) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transitions.clone(),
            self.rewards.iter().map(|r| r * reward_scale).collect(),
            gamma,
        )
    }

    /// `H(Q)` written into `out`, both indexed by pair.
    pub(crate) fn bellman_into(&self, q: &[f64], out: &mut [f64]) {
        let v = self.greedy_values(q);
        for a in 0..self.n_actions {
            let p = &self.transitions[a];
            for s in 0..self.n_states {
                let mut expect = 0.0;
                for s2 in 0..self.n_states {
                    expect += p[(s, s2)] * v[s2];
                }
                let i = self.idx(s, a);
                out[i] = self.rewards[i] + self.gamma * expect;
            }
        }
    }

    /// `max_a Q(s, a)` for every state.
    pub(crate) fn greedy_values(&self, q: &[f64]) -> Vec<f64> {
        q.chunks_exact(self.n_actions)
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    fn check_q(&self, q: &QVector) -> Result<()> {
        check_len("Q-vector", self.n_pairs(), q.len())
    }
}

fn check_row_stochastic(p: &DMatrix<f64>) -> std::result::Result<(), String> {
    for (i, row) in p.row_iter().enumerate() {
        if let Some(x) = row.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(format!("row {i} has entry {x} outside [0, 1]"));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(format!("row {i} sums to {sum}"));
        }
    }
    Ok(())
}

/// A stochastic policy `pi(a|s)`, stored row-major `n_states x n_actions`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        check_len("policy table", n_states * n_actions, probs.len())?;
        for (s, row) in probs.chunks_exact(n_actions.max(1)).enumerate() {
            if row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::InvalidModel(format!(
                    "policy row {s} has a negative or NaN entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidModel(format!("policy row {s} sums to {sum}")));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// One unit entry per state.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidArgument(format!(
                    "action {a} at state {s} out of range"
                )));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Self {
            n_states: actions.len(),
            n_actions,
            probs,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// The action with unit mass at `s`, when the policy is deterministic there.
    pub fn action_at(&self, s: usize) -> Option<usize> {
        let row = self.row(s);
        row.iter().position(|&p| p == 1.0)
    }

    /// `pi(a|s) > 0` for every pair.
    pub fn explores_all_pairs(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    pub(crate) fn check_conforms(&self, mdp: &Mdp) -> Result<()> {
        check_len("policy states", mdp.n_states(), self.n_states)?;
        check_len("policy actions", mdp.n_actions(), self.n_actions)
    }
}

/// A vector over state-action pairs with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct QVector(DVector<f64>);

impl QVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(values))
    }

    pub fn from_vector(values: DVector<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Q-vector entry {i} is not finite"
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(DVector::zeros(len))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(self.as_slice())
    }

    pub fn sup_distance(&self, other: &QVector) -> f64 {
        sup_distance(self.as_slice(), other.as_slice())
    }
}

impl std::ops::Index<usize> for QVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sup_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// The Bellman optimality operator
/// `H(Q)(s,a) = R(s,a) + gamma * sum_s' P_a(s,s') max_a' Q(s',a')`.
pub fn bellman_opt(mdp: &Mdp, q: &QVector) -> Result<QVector> {
    mdp.check_q(q)?;
    let mut out = vec![0.0; mdp.n_pairs()];
    mdp.bellman_into(q.as_slice(), &mut out);
    Ok(QVector(DVector::from_vec(out)))
}

/// Iterates `H` from zero until `||H(Q) - Q||_inf <= tol`.
///
/// Returns the final iterate and the number of applications of `H` made.
pub fn value_iteration(mdp: &Mdp, tol: f64, max_iter: usize) -> Result<(QVector, usize)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let n = mdp.n_pairs();
    let mut q = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for iter in 0..max_iter {
        mdp.bellman_into(&q, &mut next);
        residual = sup_distance(&q, &next);
        if residual <= tol {
            return Ok((QVector(DVector::from_vec(q)), iter + 1));
        }
        std::mem::swap(&mut q, &mut next);
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// `Q*` to tolerance 1e-10, the accuracy every consumer in this crate assumes.
pub fn optimal_q(mdp: &Mdp) -> Result<QVector> {
    value_iteration(mdp, 1e-10, 1_000_000).map(|(q, _)| q)
}

/// Deterministic greedy policy; ties go to the lowest action index.
pub fn greedy_policy(mdp: &Mdp, q: &QVector) -> Result<Policy> {
    mdp.check_q(q)?;
    let actions: Vec<usize> = q
        .as_slice()
        .chunks_exact(mdp.n_actions())
        .map(argmax_first)
        .collect();
    Policy::deterministic(mdp.n_actions(), &actions)
}

pub(crate) fn argmax_first(row: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = a;
        }
    }
    best
}

/// On-disk MDP layout. Rewards are ordered by pair index; each transition
/// matrix is a list of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub rewards: Vec<f64>,
    pub transitions: Vec<Vec<Vec<f64>>>,
}

impl From<&Mdp> for MdpFile {
    fn from(mdp: &Mdp) -> Self {
        Self {
            n_states: mdp.n_states,
            n_actions: mdp.n_actions,
            gamma: mdp.gamma,
            rewards: mdp.rewards.clone(),
            transitions: mdp
                .transitions
                .iter()
                .map(|p| {
                    p.row_iter()
                        .map(|row| row.iter().copied().collect())
                        .collect()
                })
                .collect(),
        }
    }
}

impl TryFrom<MdpFile> for Mdp {
    type Error = Error;

    fn try_from(file: MdpFile) -> Result<Self> {
        let n = file.n_states;
        let mut mats = Vec::with_capacity(file.transitions.len());
        for (a, rows) in file.transitions.iter().enumerate() {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::InvalidModel(format!(
                    "transition matrix for action {a} is not {n}x{n}"
                )));
            }
            mats.push(DMatrix::from_fn(n, n, |i, j| rows[i][j]));
        }
        Mdp::new(n, file.n_actions, mats, file.rewards, file.gamma)
    }
}

impl Mdp {
    /// Parses the [`MdpFile`] JSON layout.
    pub fn from_json(text: &str) -> Result<Self> {
        Mdp::try_from(serde_json::from_str::<MdpFile>(text)?)
    }
}
