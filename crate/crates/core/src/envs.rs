//! Built-in environments.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use crate::error::Result;
use crate::linear_fa::{weights_from, FeatureMap, StateActionWeights};
use crate::mdp::{
    check_exploration, optimal_q, policy_transition, seeded_rng, stationary_distribution, Mdp,
    Policy, QVector,
};

/// An MDP bundled with its features, behavior policy and the derived
/// quantities every run needs.
#[derive(Debug, Clone)]
pub struct Environment {
    pub name: String,
    pub mdp: Mdp,
    pub features: FeatureMap,
    pub behavior: Policy,
    /// `Q*` by value iteration to 1e-10.
    pub q_star: QVector,
    /// Stationary distribution of the behavior state chain.
    pub mu: DVector<f64>,
    pub weights: StateActionWeights,
}

impl Environment {
    /// Validates exploration by `behavior` and feature dimensions, then
    /// precomputes `Q*`, `mu` and `D`.
    pub fn new(
        name: impl Into<String>,
        mdp: Mdp,
        features: FeatureMap,
        behavior: Policy,
    ) -> Result<Self> {
        features.check_pairs(mdp.n_pairs())?;
        check_exploration(&mdp, &behavior)?;
        let p = policy_transition(&mdp, &behavior)?;
        let mu = stationary_distribution(&p, 1e-10)?;
        let weights = weights_from(&mu, &behavior)?;
        let q_star = optimal_q(&mdp)?;
        Ok(Self {
            name: name.into(),
            mdp,
            features,
            behavior,
            q_star,
            mu,
            weights,
        })
    }

    pub fn with_features(self, features: FeatureMap) -> Result<Self> {
        Self::new(self.name, self.mdp, features, self.behavior)
    }

    /// Transition matrix of the behavior state chain.
    pub fn behavior_chain(&self) -> DMatrix<f64> {
        policy_transition(&self.mdp, &self.behavior).expect("validated at construction")
    }

    pub fn default_radius(&self) -> f64 {
        default_radius(&self.mdp)
    }
}

/// `max(1, max |R|) / (1 - gamma)`, which bounds `||Q*||_inf` and never
/// collapses to zero on reward-free MDPs.
pub fn default_radius(mdp: &Mdp) -> f64 {
    mdp.reward_bound().max(1.0) / (1.0 - mdp.gamma())
}

pub const SOLID: usize = 0;
pub const DASH: usize = 1;

/// Baird's seven-state star MDP. Solid moves to the hub (state index 6),
/// dash moves uniformly to one of the six outer states, rewards are zero and
/// the behavior policy is uniform.
///
/// Default features (14 parameters): `Q(s_i, solid) = t0 + 2 t_i` for the
/// outer states, `Q(hub, solid) = 2 t0 + t7`, `Q(s_i, dash) = t_{7+i}`,
/// `Q(hub, dash) = t0`.
pub fn baird(gamma: f64) -> Result<Environment> {
    let n = 7;
    let hub = 6;
    let solid = DMatrix::from_fn(n, n, |_, j| if j == hub { 1.0 } else { 0.0 });
    let dash = DMatrix::from_fn(n, n, |_, j| if j < hub { 1.0 / 6.0 } else { 0.0 });
    let mdp = Mdp::new(n, 2, vec![solid, dash], vec![0.0; 2 * n], gamma)?;

    let mut phi = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..hub {
        phi[(mdp.idx(i, SOLID), 0)] = 1.0;
        phi[(mdp.idx(i, SOLID), i + 1)] = 2.0;
        phi[(mdp.idx(i, DASH), i + 8)] = 1.0;
    }
    phi[(mdp.idx(hub, SOLID), 0)] = 2.0;
    phi[(mdp.idx(hub, SOLID), 7)] = 1.0;
    phi[(mdp.idx(hub, DASH), 0)] = 1.0;
    let features = FeatureMap::new(phi)?;
    Environment::new("baird", mdp, features, Policy::uniform(n, 2))
}

/// Two states, two actions: `a1` always leads to `s1` and `a2` to `s2`,
/// rewards `(1, 2, 2, 4)`, a single feature column `(1, 2, 2, 4)` and a
/// uniform behavior policy.
pub fn example1(gamma: f64) -> Result<Environment> {
    let to_first = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
    let to_second = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
    let mdp = Mdp::new(2, 2, vec![to_first, to_second], vec![1.0, 2.0, 2.0, 4.0], gamma)?;
    let features = FeatureMap::new(DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 2.0, 4.0]))?;
    Environment::new("example1", mdp, features, Policy::uniform(2, 2))
}

/// Identity features over the pairs of `mdp`.
pub fn tabular(mdp: Mdp, behavior: Policy) -> Result<Environment> {
    let features = FeatureMap::identity(mdp.n_pairs());
    Environment::new("tabular", mdp, features, behavior)
}

/// Seeded random MDP with tabular features and a uniform behavior policy.
///
/// Draw order: for each action, for each state, one flat-Dirichlet row via
/// normalized `-ln(1 - U)` variates; then rewards `U[0, 1)` by pair index.
pub fn random_mdp(seed: u64, n_states: usize, n_actions: usize, gamma: f64) -> Result<Environment> {
    let mut rng = seeded_rng(seed);
    let mut transitions = Vec::with_capacity(n_actions);
    for _ in 0..n_actions {
        let mut p = DMatrix::zeros(n_states, n_states);
        for s in 0..n_states {
            let draws: Vec<f64> = (0..n_states)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .collect();
            let total: f64 = draws.iter().sum();
            for (s2, x) in draws.into_iter().enumerate() {
                p[(s, s2)] = x / total;
            }
        }
        transitions.push(p);
    }
    let rewards = (0..n_states * n_actions).map(|_| rng.gen::<f64>()).collect();
    let mdp = Mdp::new(n_states, n_actions, transitions, rewards, gamma)?;
    let mut env = tabular(mdp, Policy::uniform(n_states, n_actions))?;
    env.name = format!("random:{seed}:{n_states}:{n_actions}");
    Ok(env)
}

/// Random MDP whose every transition matrix is doubly stochastic (a convex
/// combination of the identity, a cyclic shift and random permutations), so
/// the uniform behavior policy has a uniform stationary distribution and
/// `D = I / |S||A|`.
pub fn uniform_weight_mdp(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
) -> Result<Environment> {
    let mut rng = seeded_rng(seed);
    let mut transitions = Vec::with_capacity(n_actions);
    for _ in 0..n_actions {
        let mut p = DMatrix::zeros(n_states, n_states);
        let mut perms: Vec<Vec<usize>> = vec![
            (0..n_states).collect(),
            (0..n_states).map(|s| (s + 1) % n_states).collect(),
        ];
        for _ in 0..2 {
            let mut perm: Vec<usize> = (0..n_states).collect();
            for i in (1..n_states).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            perms.push(perm);
        }
        let raw: Vec<f64> = perms.iter().map(|_| 0.1 + rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        for (perm, w) in perms.iter().zip(&raw) {
            for (s, &s2) in perm.iter().enumerate() {
                p[(s, s2)] += w / total;
            }
        }
        // Renormalize rows against rounding.
        for mut row in p.row_iter_mut() {
            let sum = row.sum();
            row /= sum;
        }
        transitions.push(p);
    }
    let rewards = (0..n_states * n_actions).map(|_| rng.gen::<f64>()).collect();
    let mdp = Mdp::new(n_states, n_actions, transitions, rewards, gamma)?;
    let mut env = tabular(mdp, Policy::uniform(n_states, n_actions))?;
    env.name = format!("uniform:{seed}:{n_states}:{n_actions}");
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_fa::{gram_and_lambda_min, project_w};
    use crate::mdp::greedy_policy;

    #[test]
    fn baird_shape() {
        let env = baird(0.99).unwrap();
        assert_eq!(env.features.dim(), 14);
        assert!(env.q_star.as_slice().iter().all(|&x| x == 0.0));
        let mut expected = vec![0.0; 14];
        expected[0] = 1.0;
        expected[1] = 2.0;
        assert_eq!(env.features.row(env.mdp.idx(0, SOLID)), expected.as_slice());
        let rank = env.features.matrix().rank(1e-10);
        assert_eq!(rank, 14);
    }

    #[test]
    fn example1_shape() {
        let env = example1(0.9).unwrap();
        let expected = [35.2, 38.0, 36.2, 40.0];
        for (q, e) in env.q_star.as_slice().iter().zip(expected) {
            assert!((q - e).abs() < 1e-8);
        }
        let pi = greedy_policy(&env.mdp, &env.q_star).unwrap();
        assert_eq!((pi.action_at(0), pi.action_at(1)), (Some(1), Some(1)));
        let (g, _) = gram_and_lambda_min(&env.features, &env.weights).unwrap();
        assert!((g[(0, 0)] - 6.25).abs() < 1e-14);
        assert!((env.default_radius() - 40.0).abs() < 1e-9);
    }

    #[test]
    fn tabular_properties() {
        let env = random_mdp(9, 3, 2, 0.9).unwrap();
        let q = QVector::new(vec![0.1, -2.0, 3.0, 0.4, 5.0, -6.0]).unwrap();
        let p = project_w(&q, &env.features, &env.weights).unwrap();
        assert!(p.sup_distance(&q) < 1e-12);
        let (_, lambda) = gram_and_lambda_min(&env.features, &env.weights).unwrap();
        let min_w = env.weights.as_vector().min();
        assert!((lambda - min_w).abs() < 1e-12);
    }

    #[test]
    fn random_mdp_deterministic_and_stochastic() {
        let a = random_mdp(17, 4, 3, 0.8).unwrap();
        let b = random_mdp(17, 4, 3, 0.8).unwrap();
        assert_eq!(a.mdp, b.mdp);
        for p in a.mdp.transitions() {
            for row in p.row_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
        assert!(a.mdp.rewards().iter().all(|r| (0.0..1.0).contains(r)));
        assert_ne!(a.mdp, random_mdp(18, 4, 3, 0.8).unwrap().mdp);
    }

    #[test]
    fn uniform_weight_mdp_has_uniform_d() {
        let env = uniform_weight_mdp(3, 4, 2, 0.9).unwrap();
        for w in env.weights.as_vector().iter() {
            assert!((w - 1.0 / 8.0).abs() < 1e-12);
        }
    }
}
